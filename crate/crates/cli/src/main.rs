use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand};
use dnls_lab::harness::{self, RunConfig};
use dnls_lab::reduced::{self, CoefficientVariant, ReducedCoefficients, ReducedState};
use dnls_lab::resonance;
use dnls_lab::spectral;
use dnls_lab::toy::{self, Flavor, ToyParams, ToyState};
use dnls_lab::{verify, LabError};
use serde::{Deserialize, Serialize};

/// Resonant energy exchange in the quintic derivative NLS on the circle.
#[derive(Parser)]
#[command(name = "dnls-lab", version)]
struct Cli {
    /// JSON file with run configuration fields, or a manifest from an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Reserved. Every computation is deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster algebra and non-degeneracy report.
    Resonance(ResonanceArgs),
    /// Two-dimensional reduced flow.
    Reduced(ReducedArgs),
    /// Four-mode toy model.
    Toy(ToyArgs),
    /// Pseudospectral PDE run over the guaranteed window.
    Pde(PdeArgs),
    /// All three levels from aligned data.
    Compare(CompareArgs),
    /// The full invariant suite.
    Verify,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct ResonanceArgs {
    #[arg(long)]
    m: Option<i64>,
    #[arg(long)]
    n: Option<i64>,
    #[arg(long)]
    lambda_used: Option<f64>,
    #[arg(long)]
    scan_sextuples: bool,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct ReducedArgs {
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    k0: Option<f64>,
    #[arg(long)]
    phi0: Option<f64>,
    #[arg(long)]
    variant: Option<CoefficientVariant>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    find_period: bool,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct ToyArgs {
    #[arg(long)]
    m: Option<i64>,
    #[arg(long)]
    n: Option<i64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    k0: Option<f64>,
    #[arg(long)]
    flavor: Option<Flavor>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct PdeArgs {
    #[arg(long)]
    m: Option<i64>,
    #[arg(long)]
    n: Option<i64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    k0: Option<f64>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    sample_stride: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct CompareArgs {
    #[arg(long)]
    m: Option<i64>,
    #[arg(long)]
    n: Option<i64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    k0: Option<f64>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Also run the PDE over one exchange period, far outside the window.
    #[arg(long)]
    exploratory: bool,
}

/// Settings that only some subcommands read.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Options {
    phi0: f64,
    find_period: bool,
    flavor: Flavor,
    lambda_used: Option<f64>,
    scan_sextuples: bool,
}

#[derive(Serialize)]
struct Resolved<'a> {
    config: &'a RunConfig,
    options: &'a Options,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    tool: String,
    version: String,
    command: String,
    config: RunConfig,
    options: Options,
    seed: Option<u64>,
    status: String,
    wall_clock_seconds: f64,
    outputs: Vec<String>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn load_config(path: &Path) -> Result<(RunConfig, Options)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if value.get("command").is_some() && value.get("config").is_some() {
        let m: Manifest = serde_json::from_value(value).with_context(|| format!("reading manifest {}", path.display()))?;
        Ok((m.config, m.options))
    } else {
        let c = serde_json::from_value(value).with_context(|| format!("reading config {}", path.display()))?;
        Ok((c, Options::default()))
    }
}

fn apply_flags(cmd: &Command, cfg: &mut RunConfig, opt: &mut Options) {
    match cmd {
        Command::Resonance(a) => {
            set(&mut cfg.m, a.m);
            set(&mut cfg.n, a.n);
            if a.lambda_used.is_some() {
                opt.lambda_used = a.lambda_used;
            }
            opt.scan_sextuples |= a.scan_sextuples;
        }
        Command::Reduced(a) => {
            set(&mut cfg.mu, a.mu);
            set(&mut cfg.k0, a.k0);
            set(&mut opt.phi0, a.phi0);
            set(&mut cfg.variant, a.variant);
            set(&mut cfg.tol, a.tol);
            if a.horizon.is_some() {
                cfg.horizon = a.horizon;
            }
            opt.find_period |= a.find_period;
        }
        Command::Toy(a) => {
            set(&mut cfg.m, a.m);
            set(&mut cfg.n, a.n);
            set(&mut cfg.mu, a.mu);
            set(&mut cfg.k0, a.k0);
            set(&mut opt.flavor, a.flavor);
            set(&mut cfg.tol, a.tol);
            if a.horizon.is_some() {
                cfg.horizon = a.horizon;
            }
        }
        Command::Pde(a) => {
            set(&mut cfg.m, a.m);
            set(&mut cfg.n, a.n);
            set(&mut cfg.mu, a.mu);
            set(&mut cfg.k0, a.k0);
            set(&mut cfg.delta, a.delta);
            set(&mut cfg.sample_stride, a.sample_stride);
            if a.grid.is_some() {
                cfg.grid_size = a.grid;
            }
            if a.dt.is_some() {
                cfg.dt = a.dt;
            }
            if a.steps.is_some() {
                cfg.steps = a.steps;
            }
        }
        Command::Compare(a) => {
            set(&mut cfg.m, a.m);
            set(&mut cfg.n, a.n);
            set(&mut cfg.mu, a.mu);
            set(&mut cfg.k0, a.k0);
            set(&mut cfg.tol, a.tol);
            set(&mut cfg.delta, a.delta);
            if a.grid.is_some() {
                cfg.grid_size = a.grid;
            }
            cfg.exploratory_full_period |= a.exploratory;
        }
        Command::Verify => {}
    }
}

fn name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Resonance(_) => "resonance",
        Command::Reduced(_) => "reduced",
        Command::Toy(_) => "toy",
        Command::Pde(_) => "pde",
        Command::Compare(_) => "compare",
        Command::Verify => "verify",
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Horizon for the ODE levels: the given one, else `periods` detected periods, else `10 / |mu|`.
fn ode_horizon(cfg: &RunConfig, phi0: f64, periods: f64) -> Result<(f64, reduced::PeriodResult)> {
    let coeffs = ReducedCoefficients::new(cfg.variant);
    let p = reduced::find_period(&ReducedState::new(phi0, cfg.k0), cfg.mu, &coeffs, cfg.tol)?;
    let fallback = if p.is_periodic() { periods * p.full_period } else { 10.0 / cfg.mu.abs() };
    Ok((cfg.horizon.unwrap_or(fallback), p))
}

/// Runs one subcommand, returning the files written and whether every check passed.
fn execute(cmd: &Command, cfg: &RunConfig, opt: &Options, out: &Path) -> Result<(Vec<PathBuf>, bool)> {
    let resolved = Resolved { config: cfg, options: opt };
    let mut files = Vec::new();
    let mut ok = true;
    match cmd {
        Command::Resonance(_) => {
            let quad = cfg.quad()?;
            let lambda = opt.lambda_used.unwrap_or(cfg.lambda()?);
            let report = resonance::cluster_report(&quad, lambda, opt.scan_sextuples);
            println!("{}", serde_json::to_string_pretty(&report)?);
            let p = out.join("resonance.json");
            write_json(&p, &report)?;
            files.push(p);
        }
        Command::Reduced(_) => {
            let coeffs = ReducedCoefficients::new(cfg.variant);
            let s0 = ReducedState::new(opt.phi0, cfg.k0);
            let (horizon, period) = ode_horizon(cfg, opt.phi0, 1.0)?;
            let tr = reduced::integrate_reduced(&s0, cfg.mu, &coeffs, horizon, cfg.tol, cfg.ode_stride)?;
            let p = out.join("reduced.csv");
            harness::emit_series(&harness::reduced_table(&tr, cfg.mu), &p, &resolved)?;
            files.push(p);
            if opt.find_period {
                println!("{}", serde_json::to_string_pretty(&period)?);
                let p = out.join("period.json");
                write_json(&p, &period)?;
                files.push(p);
            }
        }
        Command::Toy(_) => {
            cfg.validate()?;
            let quad = cfg.quad()?;
            let amps = toy::canonical_amplitudes(cfg.k0, cfg.phases)?;
            let params = ToyParams::for_amplitudes(quad, cfg.mu, cfg.lambda()?, &amps, opt.flavor);
            let (horizon, _) = ode_horizon(cfg, 0.0, 2.0)?;
            let tr = toy::integrate_toy(&ToyState::new(amps), &params, horizon, cfg.tol, cfg.ode_stride)?;
            let label = match opt.flavor {
                Flavor::Full => "full",
                Flavor::Gauged => "gauged",
            };
            let p = out.join(format!("toy_{label}.csv"));
            harness::emit_series(&harness::toy_table(&tr), &p, &resolved)?;
            files.push(p);
        }
        Command::Pde(_) => {
            cfg.validate()?;
            let quad = cfg.quad()?;
            let lambda = cfg.lambda()?;
            let field = cfg.initial_field()?;
            let plan = cfg.pde_plan(&field)?;
            let (samples, last) =
                harness::run_pde_final(&field, &quad, lambda, cfg.mu, plan.dt, plan.steps, cfg.sample_stride, cfg.delta)?;
            let p = out.join("pde.csv");
            harness::emit_series(&harness::pde_table(&samples), &p, &resolved)?;
            files.push(p);
            let ck = out.join("pde_final.bin");
            spectral::write_checkpoint(&last, lambda, cfg.mu, Some(&quad), &ck)?;
            files.push(ck);
            let summary = serde_json::json!({
                "plan": plan,
                "conserved_drift": harness::relative_drifts(&samples.iter().map(|s| s.conserved.as_array()).collect::<Vec<_>>()),
                "max_momentum_residual": samples.iter().map(|s| s.momentum_residual).fold(0.0, f64::max),
                "max_weighted_norm": samples.iter().map(|s| s.norms.weighted_theorem_norm).fold(0.0, f64::max),
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Compare(_) => {
            let report = harness::run_exchange_experiment(cfg)?;
            files.extend(harness::emit_report(&report, out)?);
            let p = out.join("report.json");
            write_json(&p, &report)?;
            files.push(p);
            for (level, err) in [("reduced", &report.reduced.error), ("toy", &report.toy.error), ("pde", &report.pde.error)] {
                if let Some(e) = err {
                    eprintln!("{level} level failed: {e}");
                    ok = false;
                }
            }
            println!("T = {:?}, C* = {:?}", report.half_period, report.c_star);
        }
        Command::Verify => {
            let outcomes = verify::run_all();
            for o in &outcomes {
                println!("{}", o.line());
            }
            ok = verify::all_passed(&outcomes);
            let p = out.join("verify.json");
            write_json(&p, &outcomes)?;
            files.push(p);
            let report = harness::run_exchange_experiment(cfg)?;
            files.extend(harness::emit_report(&report, out)?);
        }
    }
    Ok((files, ok))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<LabError>() {
        Some(e) if e.is_numerical() => 2,
        _ => 1,
    }
}

fn usage_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}\n");
    eprintln!("{}", Cli::command().render_usage());
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (mut cfg, mut opt) = match &cli.config {
        Some(p) => match load_config(p) {
            Ok(v) => v,
            Err(e) => return usage_error(format!("{e:#}")),
        },
        None => (RunConfig::default(), Options::default()),
    };
    apply_flags(&cli.command, &mut cfg, &mut opt);
    let out = cli.out.clone().or_else(|| cfg.output_dir.take()).unwrap_or_else(|| PathBuf::from("dnls-out"));
    cfg.output_dir = None;
    if let Err(e) = fs::create_dir_all(&out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return ExitCode::from(1);
    }

    let start = Instant::now();
    let result = execute(&cli.command, &cfg, &opt, &out);
    let (outputs, status, code) = match &result {
        Ok((files, true)) => (files.clone(), "ok".to_string(), 0),
        Ok((files, false)) => (files.clone(), "failed checks".to_string(), 2),
        Err(e) => (Vec::new(), format!("error: {e:#}"), exit_code(e)),
    };
    let manifest = Manifest {
        tool: "dnls-lab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: name(&cli.command).into(),
        config: cfg,
        options: opt,
        seed: cli.seed,
        status,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        outputs: outputs
            .iter()
            .map(|p| p.strip_prefix(&out).unwrap_or(p).display().to_string())
            .collect(),
    };
    if let Err(e) = write_json(&out.join("manifest.json"), &manifest) {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    if let Err(e) = &result {
        eprintln!("error: {e:#}");
    }
    ExitCode::from(code)
}
