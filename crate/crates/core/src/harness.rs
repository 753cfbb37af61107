//! Cross-level experiments: reduced flow, toy model and PDE started from the
//! same cluster data, with residual-norm monitoring and CSV output.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::par::{self, Execution};
use crate::reduced::{self, CoefficientVariant, PeriodResult, ReducedCoefficients, ReducedState};
use crate::resonance::{self, ResonantQuad};
use crate::spectral::{self, ConservedTriple, Evolver, SpectralField, DEFAULT_PADDING};
use crate::toy::{self, Flavor, ToyParams, ToyState};

pub const DEFAULT_DELTA: f64 = 0.5;

/// Ratio below which a "much smaller than" hypothesis is recorded as holding.
pub const REGIME_RATIO: f64 = 0.25;

/// Tolerance used for the full toy flavor in comparisons. Its diagonal phases
/// rotate at up to `|lambda xi| ~ 10^3`, so its global error at a given local
/// tolerance is about a hundred times that of the gauged flavor.
pub const FULL_FLAVOR_TOL: f64 = 1e-14;

/// `4 |M + N|`.
pub fn low_cutoff(quad: &ResonantQuad) -> i64 {
    4 * quad.sum().abs()
}

/// `0.1 min(1 / (|lambda| M*), 1 / (lambda^2 + |mu|))`.
pub fn guaranteed_window(lambda: f64, mu: f64, m_star: i64) -> f64 {
    0.1 * (1.0 / (lambda.abs() * m_star as f64)).min(1.0 / (lambda * lambda + mu.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualNorms {
    pub delta: f64,
    pub low_cutoff: i64,
    #[serde(rename = "A_L")]
    pub a_l: f64,
    #[serde(rename = "A_H")]
    pub a_h: f64,
    pub weighted_theorem_norm: f64,
}

/// `A_L = sum_{xi not in cluster, |xi| <= C_L} |u_hat|`,
/// `A_H = sum_{xi not in cluster, |xi| > C_L} <xi>^delta |u_hat|` and
/// `M*^delta A_L + A_H`.
pub fn residual_norms(
    field: &SpectralField,
    quad: &ResonantQuad,
    delta: f64,
    low_cutoff: i64,
) -> Result<ResidualNorms> {
    if !(0.5..1.0).contains(&delta) {
        return Err(LabError::invalid(format!("delta = {delta} must lie in [1/2, 1)")));
    }
    let (mut a_l, mut a_h) = (0.0, 0.0);
    for (xi, c) in field.frequencies().zip(&field.coeffs) {
        if quad.contains(xi) {
            continue;
        }
        let m = c.norm();
        if xi.abs() <= low_cutoff {
            a_l += m;
        } else {
            a_h += (1.0 + (xi * xi) as f64).powf(delta / 2.0) * m;
        }
    }
    Ok(ResidualNorms {
        delta,
        low_cutoff,
        a_l,
        a_h,
        weighted_theorem_norm: (quad.m_star as f64).powf(delta) * a_l + a_h,
    })
}

/// Whether the two size hypotheses hold, with the ratios behind the verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeFlags {
    pub lambda_over_m_star: f64,
    pub mu_over_m_star_sq: f64,
    pub m_star_dominates_lambda: bool,
    pub mu_small: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "M")]
    pub m: i64,
    #[serde(rename = "N")]
    pub n: i64,
    pub mu: f64,
    #[serde(rename = "K0")]
    pub k0: f64,
    pub phases: [f64; 4],
    pub delta: f64,
    /// Cubic coefficient; `20 (M + N)` when absent.
    pub lambda: Option<f64>,
    /// PDE grid; `(40 M*).next_power_of_two()` when absent.
    pub grid_size: Option<usize>,
    /// PDE step; a quarter of the stability heuristic, fitted to the window.
    pub dt: Option<f64>,
    /// PDE steps; enough to cover the guaranteed window.
    pub steps: Option<usize>,
    pub sample_stride: usize,
    pub variant: CoefficientVariant,
    /// ODE tolerance.
    pub tol: f64,
    pub full_flavor_tol: f64,
    /// ODE horizon; one detected period when absent.
    pub horizon: Option<f64>,
    /// ODE sampling interval.
    pub ode_stride: f64,
    /// Also run the PDE over one full exchange period (far outside the window).
    pub exploratory_full_period: bool,
    pub execution: Execution,
    /// Directory for CSV output; nothing is written when absent.
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            m: 101,
            n: -100,
            mu: 1.0,
            k0: 0.2,
            phases: [0.0; 4],
            delta: DEFAULT_DELTA,
            lambda: None,
            grid_size: None,
            dt: None,
            steps: None,
            sample_stride: 1,
            variant: CoefficientVariant::Consistent,
            tol: 1e-12,
            full_flavor_tol: FULL_FLAVOR_TOL,
            horizon: None,
            ode_stride: 1e-3,
            exploratory_full_period: false,
            execution: Execution::Parallel,
            output_dir: None,
        }
    }
}

/// PDE discretisation after defaults are applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdePlan {
    pub grid_size: usize,
    pub cutoff: usize,
    pub dt: f64,
    pub steps: usize,
    pub window: f64,
    pub stable_dt: f64,
}

impl RunConfig {
    pub fn quad(&self) -> Result<ResonantQuad> {
        resonance::build_quad(self.m, self.n)
    }

    pub fn lambda(&self) -> Result<f64> {
        Ok(self.lambda.unwrap_or(self.quad()?.lambda))
    }

    pub fn validate(&self) -> Result<()> {
        let quad = self.quad()?;
        if !(self.k0 > 0.0 && self.k0 < 1.0) {
            return Err(LabError::invalid(format!("K0 = {} must lie in (0, 1)", self.k0)));
        }
        if !(0.5..1.0).contains(&self.delta) {
            return Err(LabError::invalid(format!("delta = {} must lie in [1/2, 1)", self.delta)));
        }
        if !(self.tol > 0.0 && self.full_flavor_tol > 0.0 && self.ode_stride > 0.0) {
            return Err(LabError::invalid("tolerances and ode_stride must be positive"));
        }
        if self.lambda()? * quad.sum() as f64 <= 0.0 {
            return Err(LabError::invalid("lambda (M + N) must be positive"));
        }
        Ok(())
    }

    pub fn regime(&self) -> Result<RegimeFlags> {
        let quad = self.quad()?;
        let ms = quad.m_star as f64;
        let l = self.lambda()?.abs() / ms;
        let m = self.mu.abs() / (ms * ms);
        Ok(RegimeFlags {
            lambda_over_m_star: l,
            mu_over_m_star_sq: m,
            m_star_dominates_lambda: l <= REGIME_RATIO,
            mu_small: m <= REGIME_RATIO,
        })
    }

    pub fn initial_field(&self) -> Result<SpectralField> {
        let quad = self.quad()?;
        let n = self.grid_size.unwrap_or_else(|| default_grid(quad.m_star));
        spectral::synthesize_on_grid(&quad, self.k0, self.phases, spectral::cutoff_for_grid(n), n)
    }

    pub fn pde_plan(&self, field: &SpectralField) -> Result<PdePlan> {
        let quad = self.quad()?;
        let lambda = self.lambda()?;
        let window = guaranteed_window(lambda, self.mu, quad.m_star);
        let stable = spectral::stable_dt(field, lambda, self.mu);
        let (dt, steps) = match (self.dt, self.steps) {
            (Some(dt), Some(steps)) => (dt, steps),
            (Some(dt), None) => (dt, (window / dt).ceil() as usize),
            (None, Some(steps)) => (window / steps as f64, steps),
            (None, None) => {
                let steps = (window / (0.25 * stable)).ceil() as usize;
                (window / steps as f64, steps)
            }
        };
        Ok(PdePlan {
            grid_size: field.grid_size,
            cutoff: field.cutoff,
            dt,
            steps,
            window,
            stable_dt: stable,
        })
    }
}

/// Grid with roughly `13 M*` retained modes on each side.
pub fn default_grid(m_star: i64) -> usize {
    (40 * m_star.unsigned_abs() as usize).next_power_of_two()
}

/// One PDE sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeSample {
    pub t: f64,
    pub conserved: ConservedTriple,
    /// `|a_xi|^2` on `[alpha1, alpha2, beta1, beta2]`.
    pub intensities: [f64; 4],
    pub norms: ResidualNorms,
    pub apriori_ratio: f64,
    pub momentum_residual: f64,
}

/// Evolves the cluster field and records a [`PdeSample`] every `stride` steps.
#[allow(clippy::too_many_arguments)]
pub fn run_pde(
    field: &SpectralField,
    quad: &ResonantQuad,
    lambda: f64,
    mu: f64,
    dt: f64,
    steps: usize,
    stride: usize,
    delta: f64,
) -> Result<Vec<PdeSample>> {
    run_pde_final(field, quad, lambda, mu, dt, steps, stride, delta).map(|(s, _)| s)
}

/// [`run_pde`] that also hands back the final field.
#[allow(clippy::too_many_arguments)]
pub fn run_pde_final(
    field: &SpectralField,
    quad: &ResonantQuad,
    lambda: f64,
    mu: f64,
    dt: f64,
    steps: usize,
    stride: usize,
    delta: f64,
) -> Result<(Vec<PdeSample>, SpectralField)> {
    let stride = stride.max(1);
    let cl = low_cutoff(quad);
    let p0 = spectral::conserved_triple(field, lambda, mu).momentum;
    let sample = |f: &SpectralField| -> Result<PdeSample> {
        let a = quad.frequencies().map(|xi| f.coeff(xi).norm_sqr());
        Ok(PdeSample {
            t: f.t,
            conserved: spectral::conserved_triple(f, lambda, mu),
            intensities: a,
            norms: residual_norms(f, quad, delta, cl)?,
            apriori_ratio: f.weighted_l2() / quad.m_star as f64,
            momentum_residual: spectral::momentum_fourier_identity(f, lambda, p0),
        })
    };
    let mut ev = Evolver::new(field.clone(), lambda, mu, dt, DEFAULT_PADDING)?;
    let mut out = vec![sample(field)?];
    for s in 1..=steps {
        ev.step()?;
        if s % stride == 0 || s == steps {
            out.push(sample(&ev.field)?);
        }
    }
    Ok((out, ev.field))
}

/// Relative drift `max |q(t) - q(0)| / max(|q(0)|, 1)` per component.
pub fn relative_drifts<const K: usize>(series: &[[f64; K]]) -> [f64; K] {
    let mut d = [0.0f64; K];
    if let Some(first) = series.first() {
        for s in series {
            for k in 0..K {
                d[k] = d[k].max((s[k] - first[k]).abs() / first[k].abs().max(1.0));
            }
        }
    }
    d
}

/// Outcome of one model level; failures do not abort the other levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level<T> {
    pub ok: bool,
    pub error: Option<String>,
    pub data: Option<T>,
}

impl<T> Level<T> {
    fn from(r: Result<T>) -> Self {
        match r {
            Ok(d) => Self {
                ok: true,
                error: None,
                data: Some(d),
            },
            Err(e) => Self {
                ok: false,
                error: Some(e.to_string()),
                data: None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedLevel {
    pub period: PeriodResult,
    pub horizon: f64,
    pub trajectory: Vec<ReducedState>,
    /// Relative drift of the Hamiltonian along the trajectory.
    pub h_drift: f64,
    pub verbatim_h_drift: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyLevel {
    pub gauged: Vec<ToyState>,
    pub full: Vec<ToyState>,
    pub gauged_invariant_drift: [f64; 4],
    pub full_invariant_drift: [f64; 4],
    /// Pointwise sup of `| |c_xi| - |d_xi| |`.
    pub full_vs_gauged_moduli: f64,
    /// Sup of `| |d_alpha1|^2 - K |` against the reduced trajectory.
    pub toy_vs_reduced: Option<f64>,
    pub hamiltonian_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeLevel {
    pub plan: PdePlan,
    pub samples: Vec<PdeSample>,
    pub conserved_drift: [f64; 3],
    pub max_momentum_residual: f64,
    /// Sup over samples and cluster modes of `| |a_xi|^2 - |d_xi|^2 |`.
    pub pde_vs_toy: f64,
    pub max_weighted_norm: f64,
    /// `max_t weighted norm * M*^delta`.
    pub norm_constant: f64,
    pub initial_weighted_norm: f64,
    pub max_apriori_ratio: f64,
    pub min_energy: f64,
    /// PDE over a full period, outside the window where closeness is known.
    pub exploratory: Option<ExploratoryRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploratoryRun {
    pub label: String,
    pub t_end: f64,
    pub k_at_half_period: f64,
    pub exchange_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeReport {
    pub config: RunConfig,
    pub quad: ResonantQuad,
    pub lambda: f64,
    pub regime: RegimeFlags,
    pub reduced: Level<ReducedLevel>,
    pub toy: Level<ToyLevel>,
    pub pde: Level<PdeLevel>,
    #[serde(rename = "T")]
    pub half_period: Option<f64>,
    pub c_star: Option<f64>,
    pub files: Vec<PathBuf>,
}

fn run_reduced_level(cfg: &RunConfig) -> Result<ReducedLevel> {
    let coeffs = ReducedCoefficients::new(cfg.variant);
    let s0 = ReducedState::new(0.0, cfg.k0);
    let period = reduced::find_period(&s0, cfg.mu, &coeffs, cfg.tol)?;
    let horizon = cfg.horizon.unwrap_or(if period.is_periodic() {
        period.full_period
    } else {
        10.0 / cfg.mu.abs().max(1e-300)
    });
    let trajectory = reduced::integrate_reduced(&s0, cfg.mu, &coeffs, horizon, cfg.tol, cfg.ode_stride)?;
    let h: Vec<[f64; 1]> = trajectory.iter().map(|s| [reduced::hamiltonian(s, cfg.mu)]).collect();
    let h_drift = relative_h_drift(&h);
    let verbatim_h_drift = reduced::integrate_reduced(
        &s0,
        cfg.mu,
        &ReducedCoefficients::verbatim(),
        horizon,
        cfg.tol,
        cfg.ode_stride,
    )
    .ok()
    .map(|tr| relative_h_drift(&tr.iter().map(|s| [reduced::hamiltonian(s, cfg.mu)]).collect::<Vec<_>>()));
    Ok(ReducedLevel {
        period,
        horizon,
        trajectory,
        h_drift,
        verbatim_h_drift,
    })
}

fn relative_h_drift(h: &[[f64; 1]]) -> f64 {
    let h0 = h.first().map_or(1.0, |v| v[0].abs());
    h.iter().map(|v| (v[0] - h[0][0]).abs()).fold(0.0, f64::max) / h0.max(f64::MIN_POSITIVE)
}

fn toy_params(cfg: &RunConfig, field: &SpectralField) -> Result<(ToyState, ToyParams)> {
    let quad = cfg.quad()?;
    let lambda = cfg.lambda()?;
    let amps = toy::canonical_amplitudes(cfg.k0, cfg.phases)?;
    let conserved = spectral::conserved_triple(field, lambda, cfg.mu);
    let params = ToyParams {
        quad,
        mu: cfg.mu,
        lambda,
        m0: conserved.mass,
        p0: conserved.momentum,
        flavor: Flavor::Gauged,
    };
    Ok((ToyState::new(amps), params))
}

fn run_toy_level(cfg: &RunConfig, field: &SpectralField, horizon: f64, reduced: Option<&[ReducedState]>) -> Result<ToyLevel> {
    let (s0, params) = toy_params(cfg, field)?;
    let (gauged, full) = par::join(
        cfg.execution,
        || toy::integrate_toy(&s0, &params, horizon, cfg.tol, cfg.ode_stride),
        || toy::integrate_toy(&s0, &params.with_flavor(Flavor::Full), horizon, cfg.full_flavor_tol, cfg.ode_stride),
    );
    let (gauged, full) = (gauged?, full?);
    let inv = |tr: &[ToyState]| relative_drifts(&tr.iter().map(toy::toy_invariants).collect::<Vec<_>>());
    let mut moduli: f64 = 0.0;
    for (g, f) in gauged.iter().zip(&full) {
        for i in 0..4 {
            moduli = moduli.max((g.amps[i].norm() - f.amps[i].norm()).abs());
        }
    }
    let toy_vs_reduced = reduced.map(|r| {
        gauged
            .iter()
            .zip(r)
            .map(|(g, s)| (g.k() - s.k).abs())
            .fold(0.0, f64::max)
    });
    let h: Vec<[f64; 1]> = gauged.iter().map(|s| [toy::toy_hamiltonian(s, &params)]).collect();
    Ok(ToyLevel {
        gauged_invariant_drift: inv(&gauged),
        full_invariant_drift: inv(&full),
        full_vs_gauged_moduli: moduli,
        toy_vs_reduced,
        hamiltonian_drift: relative_h_drift(&h),
        gauged,
        full,
    })
}

fn run_pde_level(cfg: &RunConfig, field: &SpectralField, half_period: Option<f64>) -> Result<PdeLevel> {
    let quad = cfg.quad()?;
    let lambda = cfg.lambda()?;
    let plan = cfg.pde_plan(field)?;
    let samples = run_pde(field, &quad, lambda, cfg.mu, plan.dt, plan.steps, cfg.sample_stride, cfg.delta)?;
    let (s0, params) = toy_params(cfg, field)?;
    let times: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let flow = toy::ToyFlow::new(params);
    let toy_states = crate::ode::Dopri5::with_tol(cfg.tol).solve_at(&flow, 0.0, toy_state_array(&s0), &times)?;
    let mut pde_vs_toy: f64 = 0.0;
    for (s, y) in samples.iter().zip(&toy_states) {
        for i in 0..4 {
            let toy_i = y[2 * i] * y[2 * i] + y[2 * i + 1] * y[2 * i + 1];
            pde_vs_toy = pde_vs_toy.max((s.intensities[i] - toy_i).abs());
        }
    }
    let max_weighted_norm = samples.iter().map(|s| s.norms.weighted_theorem_norm).fold(0.0, f64::max);
    let exploratory = match (cfg.exploratory_full_period, half_period) {
        (true, Some(t_half)) => Some(exploratory_run(field, &quad, lambda, cfg.mu, plan.dt, t_half)?),
        _ => None,
    };
    Ok(PdeLevel {
        conserved_drift: relative_drifts(&samples.iter().map(|s| s.conserved.as_array()).collect::<Vec<_>>()),
        max_momentum_residual: samples.iter().map(|s| s.momentum_residual).fold(0.0, f64::max),
        pde_vs_toy,
        max_weighted_norm,
        norm_constant: max_weighted_norm * (quad.m_star as f64).powf(cfg.delta),
        initial_weighted_norm: samples[0].norms.weighted_theorem_norm,
        max_apriori_ratio: samples.iter().map(|s| s.apriori_ratio).fold(0.0, f64::max),
        min_energy: samples.iter().map(|s| s.conserved.energy).fold(f64::INFINITY, f64::min),
        plan,
        samples,
        exploratory,
    })
}

fn toy_state_array(s: &ToyState) -> [f64; 8] {
    let mut y = [0.0; 8];
    for (i, a) in s.amps.iter().enumerate() {
        y[2 * i] = a.re;
        y[2 * i + 1] = a.im;
    }
    y
}

fn exploratory_run(
    field: &SpectralField,
    quad: &ResonantQuad,
    lambda: f64,
    mu: f64,
    dt: f64,
    t_half: f64,
) -> Result<ExploratoryRun> {
    let steps = (t_half / dt).ceil() as usize;
    let dt = t_half / steps as f64;
    let mut ev = Evolver::new(field.clone(), lambda, mu, dt, DEFAULT_PADDING)?;
    for _ in 0..steps {
        ev.step()?;
    }
    let k0 = field.coeff(quad.alpha1).norm_sqr();
    let kt = ev.field.coeff(quad.alpha1).norm_sqr();
    Ok(ExploratoryRun {
        label: "exploratory: beyond the guaranteed window, not asserted".into(),
        t_end: ev.field.t,
        k_at_half_period: kt,
        exchange_defect: k0 + kt - 1.0,
    })
}

/// Runs every level from aligned initial data. Level failures are recorded in
/// the report rather than returned.
pub fn run_exchange_experiment(cfg: &RunConfig) -> Result<ExchangeReport> {
    cfg.validate()?;
    let quad = cfg.quad()?;
    let lambda = cfg.lambda()?;
    let field = cfg.initial_field()?;
    let reduced = Level::from(run_reduced_level(cfg));
    let period = reduced.data.as_ref().map(|r| r.period);
    let horizon = reduced.data.as_ref().map_or(cfg.horizon.unwrap_or(1.0), |r| r.horizon);
    let half_period = period.filter(|p| p.is_periodic()).map(|p| p.t_half);
    let red_traj = reduced.data.as_ref().map(|r| r.trajectory.as_slice());
    let (toy, pde) = par::join(
        cfg.execution,
        || Level::from(run_toy_level(cfg, &field, horizon, red_traj)),
        || Level::from(run_pde_level(cfg, &field, half_period)),
    );
    let mut report = ExchangeReport {
        config: cfg.clone(),
        quad,
        lambda,
        regime: cfg.regime()?,
        half_period,
        c_star: period.filter(|p| p.is_periodic()).map(|p| p.c_star),
        reduced,
        toy,
        pde,
        files: Vec::new(),
    };
    if let Some(dir) = &cfg.output_dir {
        report.files = emit_report(&report, dir)?;
    }
    Ok(report)
}

/// Writes the CSV series of every successful level into `dir`.
pub fn emit_report(report: &ExchangeReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    let mut files = Vec::new();
    let cfg = &report.config;
    if let Some(r) = &report.reduced.data {
        let p = dir.join("reduced.csv");
        emit_series(&reduced_table(&r.trajectory, cfg.mu), &p, cfg)?;
        files.push(p);
    }
    if let Some(t) = &report.toy.data {
        for (name, tr) in [("toy_gauged.csv", &t.gauged), ("toy_full.csv", &t.full)] {
            let p = dir.join(name);
            emit_series(&toy_table(tr), &p, cfg)?;
            files.push(p);
        }
    }
    if let Some(pde) = &report.pde.data {
        let p = dir.join("pde.csv");
        emit_series(&pde_table(&pde.samples), &p, cfg)?;
        files.push(p);
    }
    Ok(files)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub delta: f64,
    pub m_star: [i64; 2],
    pub max_weighted_norm: [f64; 2],
    pub norm_constant: [f64; 2],
    /// `norm(M*_0) / norm(M*_1)`.
    pub ratio: f64,
    /// `(M*_1 / M*_0)^delta`.
    pub predicted: f64,
    pub initial_norms: [f64; 2],
}

impl ScalingReport {
    /// Whether the ratio lies in `[1, 2] * predicted`.
    pub fn within_factor_two(&self) -> bool {
        self.ratio >= self.predicted && self.ratio <= 2.0 * self.predicted
    }
}

/// Residual norms over each configuration's window, run concurrently.
pub fn residual_scaling(small: &RunConfig, large: &RunConfig) -> Result<ScalingReport> {
    let run = |cfg: &RunConfig| -> Result<(i64, f64, f64, f64)> {
        cfg.validate()?;
        let quad = cfg.quad()?;
        let field = cfg.initial_field()?;
        let plan = cfg.pde_plan(&field)?;
        let s = run_pde(&field, &quad, cfg.lambda()?, cfg.mu, plan.dt, plan.steps, cfg.sample_stride, cfg.delta)?;
        let max = s.iter().map(|x| x.norms.weighted_theorem_norm).fold(0.0, f64::max);
        Ok((quad.m_star, max, max * (quad.m_star as f64).powf(cfg.delta), s[0].norms.weighted_theorem_norm))
    };
    let (a, b) = par::join(small.execution, || run(small), || run(large));
    let (a, b) = (a?, b?);
    Ok(ScalingReport {
        delta: small.delta,
        m_star: [a.0, b.0],
        max_weighted_norm: [a.1, b.1],
        norm_constant: [a.2, b.2],
        ratio: a.1 / b.1,
        predicted: (b.0 as f64 / a.0 as f64).powf(small.delta),
        initial_norms: [a.3, b.3],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorollaryReport {
    pub lambda: f64,
    pub lambda_prime: f64,
    pub mu: f64,
    pub mu_prime: f64,
    /// `sqrt(lambda / lambda')`.
    pub amplitude_factor: f64,
    pub window: f64,
    pub steps: usize,
    /// `max_t max_xi | s u_hat(xi, t) - v_hat(xi, t) |`.
    pub sup_difference: f64,
    pub relative_difference: f64,
}

/// `(sqrt(lambda / lambda'), mu (lambda' / lambda)^2)`: if `u` solves the
/// equation with `(lambda, mu)` then `s u` solves it with `(lambda', mu')`.
pub fn corollary_parameters(lambda: f64, mu: f64, lambda_prime: f64) -> (f64, f64) {
    let r = lambda_prime / lambda;
    ((lambda / lambda_prime).sqrt(), mu * r * r)
}

/// Evolves the scaled data under `(lambda', mu')` and compares it against the
/// scaled reference solution.
pub fn scaling_corollary_check(cfg: &RunConfig, lambda_prime: f64) -> Result<CorollaryReport> {
    cfg.validate()?;
    let quad = cfg.quad()?;
    if lambda_prime * quad.sum() as f64 <= 0.0 {
        return Err(LabError::invalid(format!(
            "lambda' (M + N) = {} must be positive",
            lambda_prime * quad.sum() as f64
        )));
    }
    let lambda = cfg.lambda()?;
    let (s, mu_prime) = corollary_parameters(lambda, cfg.mu, lambda_prime);
    let u0 = cfg.initial_field()?;
    let plan = cfg.pde_plan(&u0)?;
    let mut v0 = u0.clone();
    for c in &mut v0.coeffs {
        *c *= s;
    }
    let stride = cfg.sample_stride;
    let (u, v) = par::join(
        cfg.execution,
        || spectral::evolve(&u0, lambda, cfg.mu, plan.dt, plan.steps, stride),
        || spectral::evolve(&v0, lambda_prime, mu_prime, plan.dt, plan.steps, stride),
    );
    let (u, v) = (u?, v?);
    let mut sup: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (a, b) in u.iter().zip(&v) {
        for (x, y) in a.coeffs.iter().zip(&b.coeffs) {
            let su: Complex64 = x * s;
            sup = sup.max((su - y).norm());
            scale = scale.max(su.norm());
        }
    }
    Ok(CorollaryReport {
        lambda,
        lambda_prime,
        mu: cfg.mu,
        mu_prime,
        amplitude_factor: s,
        window: plan.window,
        steps: plan.steps,
        sup_difference: sup,
        relative_difference: sup / scale.max(f64::MIN_POSITIVE),
    })
}

/// A named-column numeric table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

pub const REDUCED_COLUMNS: [&str; 5] = ["t", "phi1", "K", "H", "het_residual"];
pub const TOY_COLUMNS: [&str; 14] = [
    "t", "re_alpha1", "im_alpha1", "re_alpha2", "im_alpha2", "re_beta1", "im_beta1", "re_beta2",
    "im_beta2", "K", "inv1", "inv2", "inv3", "inv4",
];
pub const PDE_COLUMNS: [&str; 11] = [
    "t", "M", "E", "P", "abs2_alpha1", "abs2_alpha2", "abs2_beta1", "abs2_beta2", "A_L", "A_H",
    "apriori_ratio",
];

/// `phi1` is written wrapped into `(-pi, pi]`.
pub fn reduced_table(traj: &[ReducedState], mu: f64) -> Table {
    Table {
        columns: REDUCED_COLUMNS.to_vec(),
        rows: traj
            .iter()
            .map(|s| {
                vec![
                    s.t,
                    s.phi1_wrapped(),
                    s.k,
                    reduced::hamiltonian(s, mu),
                    reduced::heteroclinic_residual(s),
                ]
            })
            .collect(),
    }
}

pub fn toy_table(traj: &[ToyState]) -> Table {
    Table {
        columns: TOY_COLUMNS.to_vec(),
        rows: traj
            .iter()
            .map(|s| {
                let mut row = vec![s.t];
                for a in &s.amps {
                    row.push(a.re);
                    row.push(a.im);
                }
                row.push(s.k());
                row.extend(toy::toy_invariants(s));
                row
            })
            .collect(),
    }
}

pub fn pde_table(samples: &[PdeSample]) -> Table {
    Table {
        columns: PDE_COLUMNS.to_vec(),
        rows: samples
            .iter()
            .map(|s| {
                let mut row = vec![s.t, s.conserved.mass, s.conserved.energy, s.conserved.momentum];
                row.extend(s.intensities);
                row.extend([s.norms.a_l, s.norms.a_h, s.apriori_ratio]);
                row
            })
            .collect(),
    }
}

#[derive(Serialize)]
struct Sidecar<'a, C: Serialize> {
    columns: &'a [&'static str],
    rows: usize,
    config: &'a C,
}

/// Writes `table` as CSV (shortest round-trip float formatting) and a JSON
/// sidecar `<path>.json` carrying the column list and the full configuration.
pub fn emit_series<C: Serialize>(table: &Table, path: &Path, config: &C) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| LabError::io(parent, e))?;
    }
    let file = fs::File::create(path).map_err(|e| LabError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| LabError::io(path, e);
    writeln!(w, "{}", table.columns.join(",")).map_err(io)?;
    for row in &table.rows {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)?;
    let mut side = path.as_os_str().to_owned();
    side.push(".json");
    let side = PathBuf::from(side);
    let sidecar = Sidecar {
        columns: &table.columns,
        rows: table.rows.len(),
        config,
    };
    let text = serde_json::to_string_pretty(&sidecar).map_err(|e| LabError::Json {
        path: side.display().to_string(),
        source: e,
    })?;
    fs::write(&side, text).map_err(|e| LabError::io(&side, e))
}
