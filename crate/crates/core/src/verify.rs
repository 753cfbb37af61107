//! The invariant suite behind the `verify` subcommand. Each check reports its
//! measured quantities and a verdict at the stated tolerance.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harness::{self, RunConfig, FULL_FLAVOR_TOL};
use crate::par::Execution;
use crate::reduced::{self, ReducedCoefficients, ReducedState};
use crate::resonance::{self, PairCollision};
use crate::spectral::{self, SpectralField};
use crate::toy::{self, Flavor, ToyParams, ToyState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub id: String,
    pub title: String,
    pub passed: bool,
    /// Supplementary checks are reported but never affect the verdict.
    pub supplementary: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Outcome {
    pub fn line(&self) -> String {
        let tag = match (self.passed, self.supplementary) {
            (true, _) => "PASS",
            (false, false) => "FAIL",
            (false, true) => "NOTE",
        };
        format!("[{tag}] {} {} ({:.2}s): {}", self.id, self.title, self.seconds, self.detail)
    }
}

fn timed<F>(id: &str, title: &str, supplementary: bool, f: F) -> Outcome
where
    F: FnOnce() -> Result<(bool, String)>,
{
    let start = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    Outcome {
        id: id.into(),
        title: title.into(),
        passed,
        supplementary,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn sup_drift(series: &[f64]) -> f64 {
    let s0 = series.first().copied().unwrap_or(0.0);
    series.iter().map(|v| (v - s0).abs()).fold(0.0, f64::max) / s0.abs().max(f64::MIN_POSITIVE)
}

pub fn cluster_algebra() -> Outcome {
    timed("1", "cluster algebra", false, || {
        let s = resonance::sweep_cluster_algebra(1000, Execution::Parallel);
        Ok((
            s.failures.is_empty() && s.quads_checked == 2001 * 2001 - 2001,
            format!("{} quads, {} failures", s.quads_checked, s.failures.len()),
        ))
    })
}

pub fn nondegeneracy() -> Outcome {
    timed("2", "non-degeneracy", false, || {
        let a = resonance::check_nondegeneracy(&resonance::build_quad(5, -4)?);
        let b = resonance::check_nondegeneracy(&resonance::build_quad(101, -100)?);
        let c = resonance::check_nondegeneracy(&resonance::build_quad(1, 0)?);
        let expected = PairCollision {
            first: (1, -1),
            second: (0, 0),
            sum: 0,
        };
        let ok = a.nondegenerate && b.nondegenerate && !c.nondegenerate && c.violations.contains(&expected);
        Ok((ok, format!("(5,-4) {}, (101,-100) {}, (1,0) collisions {:?}", a.nondegenerate, b.nondegenerate, c.violations)))
    })
}

pub fn dichotomy() -> Outcome {
    timed("3", "sextuple dichotomy scan", false, || {
        let s = resonance::scan_dichotomy(&resonance::build_quad(101, -100)?);
        Ok((
            s.checked == 1024 && s.violations.is_empty(),
            format!("{} choices, {} under threshold, {} violations", s.checked, s.applicable, s.violations.len()),
        ))
    })
}

pub fn reduced_energy() -> Outcome {
    timed("4", "reduced Hamiltonian", false, || {
        let mu = 1.0;
        let c = ReducedCoefficients::consistent();
        let s0 = ReducedState::new(0.0, 0.2);
        let p = reduced::find_period(&s0, mu, &c, 1e-12)?;
        let tr = reduced::integrate_reduced(&s0, mu, &c, p.full_period, 1e-12, p.full_period / 2000.0)?;
        let drift = sup_drift(&tr.iter().map(|s| reduced::hamiltonian(s, mu)).collect::<Vec<_>>());
        let h_sad = [PI, -PI].map(|phi| (reduced::hamiltonian(&ReducedState::new(phi, 0.5), mu) - 45.0 * mu / 16.0).abs());
        let het = [PI, -PI].map(|phi| reduced::heteroclinic_residual(&ReducedState::new(phi, 0.5)).abs());
        let ok = drift <= 1e-9 && h_sad.iter().all(|&e| e <= 1e-14) && het.iter().all(|&e| e <= 1e-14);
        Ok((ok, format!("H drift {drift:.2e}, |H(saddle) - 45/16| {:.1e}, |het(saddle)| {:.1e}", h_sad[0].max(h_sad[1]), het[0].max(het[1]))))
    })
}

pub fn exchange_period(k0: f64, id: &str, supplementary: bool) -> Outcome {
    let title = format!("exchange period from (0, {k0})");
    timed(id, &title, supplementary, || {
        let c = ReducedCoefficients::consistent();
        let s0 = ReducedState::new(0.0, k0);
        let base = reduced::find_period(&s0, 1.0, &c, 1e-12)?;
        let mut mu_t = Vec::new();
        for mu in [0.5, 1.0, 2.0] {
            let p = reduced::find_period(&s0, mu, &c, 1e-12)?;
            mu_t.push(mu * p.t_half);
        }
        let spread = mu_t.iter().map(|v| (v - mu_t[1]).abs() / mu_t[1]).fold(0.0, f64::max);
        let defect = base.exchange_defect.abs();
        let ok = base.is_periodic() && defect <= 1e-6 && spread <= 1e-6;
        Ok((
            ok,
            format!(
                "{:?} {:?} orbit, T = {:.6}, K(T) = {:.6}, |K(0)+K(T)-1| = {defect:.2e}, mu T spread {spread:.1e}",
                base.classification, base.orbit, base.t_half, base.k_t
            ),
        ))
    })
}

fn canonical_toy(k0: f64) -> Result<(ToyState, ToyParams, f64)> {
    let cfg = RunConfig {
        k0,
        ..RunConfig::default()
    };
    let quad = cfg.quad()?;
    let field = spectral::synthesize_field(&quad, k0, [0.0; 4], 341)?;
    let cons = spectral::conserved_triple(&field, quad.lambda, cfg.mu);
    let amps = toy::canonical_amplitudes(k0, [0.0; 4])?;
    let params = ToyParams {
        quad,
        mu: cfg.mu,
        lambda: quad.lambda,
        m0: cons.mass,
        p0: cons.momentum,
        flavor: Flavor::Gauged,
    };
    let period = reduced::find_period(&ReducedState::new(0.0, k0), cfg.mu, &ReducedCoefficients::consistent(), 1e-12)?;
    Ok((ToyState::new(amps), params, 2.0 * period.t_half))
}

pub fn toy_invariants() -> Outcome {
    timed("6", "toy invariants", false, || {
        let (s0, p, two_t) = canonical_toy(0.2)?;
        let mut worst: f64 = 0.0;
        let mut parts = Vec::new();
        for fl in [Flavor::Gauged, Flavor::Full] {
            let tr = toy::integrate_toy(&s0, &p.with_flavor(fl), two_t, 1e-12, two_t / 2000.0)?;
            let d = harness::relative_drifts(&tr.iter().map(toy::toy_invariants).collect::<Vec<_>>());
            let m = d.iter().copied().fold(0.0, f64::max);
            worst = worst.max(m);
            parts.push(format!("{fl:?} {m:.1e}"));
        }
        Ok((worst <= 1e-9, format!("max relative drift over [0, 2T]: {}", parts.join(", "))))
    })
}

fn moduli_gap(a: &[ToyState], b: &[ToyState]) -> f64 {
    let mut d: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        for i in 0..4 {
            d = d.max((x.amps[i].norm() - y.amps[i].norm()).abs());
        }
    }
    d
}

pub fn gauge_equivalence() -> Outcome {
    timed("7", "gauge equivalence", false, || {
        let (s0, p, two_t) = canonical_toy(0.2)?;
        let stride = two_t / 2000.0;
        let g = toy::integrate_toy(&s0, &p, two_t, 1e-12, stride)?;
        let f = toy::integrate_toy(&s0, &p.with_flavor(Flavor::Full), two_t, FULL_FLAVOR_TOL, stride)?;
        let gap = moduli_gap(&g, &f);
        let mut off = p.with_flavor(Flavor::Full);
        off.lambda += 20.0;
        let fp = toy::integrate_toy(&s0, &off, two_t, 1e-10, stride)?;
        let perturbed = moduli_gap(&g, &fp);
        Ok((
            gap <= 1e-8 && perturbed > 1e-3,
            format!("moduli gap {gap:.2e} (full flavor tol {FULL_FLAVOR_TOL:.0e}); perturbed lambda gap {perturbed:.3}"),
        ))
    })
}

pub fn toy_reduced() -> Outcome {
    timed("8", "toy vs reduced", false, || {
        let (s0, p, two_t) = canonical_toy(0.2)?;
        let stride = two_t / 2000.0;
        let g = toy::integrate_toy(&s0, &p, two_t, 1e-12, stride)?;
        let r = reduced::integrate_reduced(&ReducedState::new(0.0, 0.2), p.mu, &ReducedCoefficients::consistent(), two_t, 1e-12, stride)?;
        let d = g.iter().zip(&r).map(|(a, b)| (a.k() - b.k).abs()).fold(0.0, f64::max);
        Ok((d <= 1e-8 && g.len() == r.len(), format!("sup |K_toy - K_reduced| = {d:.2e}")))
    })
}

fn single_mode_error(dt: f64) -> Result<f64> {
    let (lambda, mu) = (20.0, 1.0);
    let mut f = SpectralField::with_cutoff(4)?;
    f.set(1, Complex64::new(1.0, 0.0))?;
    let steps = (1.0 / dt).round() as usize;
    let tr = spectral::evolve(&f, lambda, mu, 1.0 / steps as f64, steps, steps)?;
    let end = tr.last().expect("final state");
    Ok((end.coeff(1) - Complex64::from_polar(1.0, -end.t * (1.0 - lambda + mu))).norm())
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

pub fn pde_correctness() -> Outcome {
    timed("9", "PDE correctness", false, || {
        let phase = single_mode_error(1e-4)?;
        let dts = [1e-2, 5e-3, 2.5e-3, 1.25e-3];
        let errs = dts.iter().map(|&dt| single_mode_error(dt)).collect::<Result<Vec<_>>>()?;
        let slope = loglog_slope(&dts, &errs);
        let report = harness::run_exchange_experiment(&RunConfig::default())?;
        let pde = report.pde.data.ok_or_else(|| crate::LabError::invalid(report.pde.error.unwrap_or_default()))?;
        let drift = pde.conserved_drift.iter().copied().fold(0.0, f64::max);
        let ok = phase <= 1e-8 && (slope - 4.0).abs() <= 0.2 && drift <= 1e-6 && pde.max_momentum_residual <= 1e-6;
        Ok((
            ok,
            format!(
                "phase error {phase:.1e}, slope {slope:.3}, M/E/P drift {:.1e}/{:.1e}/{:.1e} (n = {}), momentum residual {:.1e}",
                pde.conserved_drift[0], pde.conserved_drift[1], pde.conserved_drift[2], pde.plan.grid_size, pde.max_momentum_residual
            ),
        ))
    })
}

pub fn cluster_tracking() -> Outcome {
    timed("10", "cluster tracking and residual scaling", false, || {
        let small = RunConfig::default();
        let large = RunConfig {
            m: 201,
            n: -200,
            ..RunConfig::default()
        };
        let report = harness::run_exchange_experiment(&small)?;
        let pde = report.pde.data.ok_or_else(|| crate::LabError::invalid(report.pde.error.unwrap_or_default()))?;
        let scaling = harness::residual_scaling(&small, &large)?;
        let lo = scaling.predicted;
        let ok = pde.pde_vs_toy <= 1e-2
            && scaling.within_factor_two()
            && scaling.initial_norms == [0.0, 0.0]
            && pde.initial_weighted_norm == 0.0;
        Ok((
            ok,
            format!(
                "PDE vs toy {:.2e}; max norm {:.3} (C = {:.1}) at M* = 101, {:.3} (C = {:.1}) at M* = 201; ratio {:.3} in [{lo:.3}, {:.3}]; t = 0 norms {:?}",
                pde.pde_vs_toy,
                scaling.max_weighted_norm[0],
                scaling.norm_constant[0],
                scaling.max_weighted_norm[1],
                scaling.norm_constant[1],
                scaling.ratio,
                2.0 * lo,
                scaling.initial_norms
            ),
        ))
    })
}

pub fn amplitude_scaling() -> Outcome {
    timed("11", "amplitude scaling", false, || {
        let cfg = RunConfig::default();
        let id = harness::scaling_corollary_check(&cfg, 20.0)?;
        let a = harness::scaling_corollary_check(&cfg, 10.0)?;
        let b = harness::scaling_corollary_check(&cfg, 40.0)?;
        let ok = id.sup_difference == 0.0 && a.sup_difference <= 1e-6 && b.sup_difference <= 1e-6;
        Ok((
            ok,
            format!(
                "identity {:.1e}; lambda' = 10 (mu' = {}) {:.1e}; lambda' = 40 (mu' = {}) {:.1e}",
                id.sup_difference, a.mu_prime, a.sup_difference, b.mu_prime, b.sup_difference
            ),
        ))
    })
}

/// Conservation and momentum identity on the 1024-point grid. This grid cannot
/// hold the M* = 201 cluster and under-resolves the quintic products at M* = 101.
pub fn coarse_grid_conservation() -> Outcome {
    timed("9-1024", "PDE conservation on the 1024-point grid", false, || {
        let cfg = RunConfig {
            grid_size: Some(1024),
            ..RunConfig::default()
        };
        let field = cfg.initial_field()?;
        let quad = cfg.quad()?;
        let plan = cfg.pde_plan(&field)?;
        let s = harness::run_pde(&field, &quad, quad.lambda, cfg.mu, plan.dt, plan.steps, 1, cfg.delta)?;
        let d = harness::relative_drifts(&s.iter().map(|x| x.conserved.as_array()).collect::<Vec<_>>());
        let mom = s.iter().map(|x| x.momentum_residual).fold(0.0, f64::max);
        Ok((
            d.iter().all(|&v| v <= 1e-6) && mom <= 1e-6,
            format!("M/E/P drift {:.1e}/{:.1e}/{:.1e}, momentum residual {mom:.1e}", d[0], d[1], d[2]),
        ))
    })
}

/// Every check in order. Supplementary entries follow the check they qualify.
pub fn run_all() -> Vec<Outcome> {
    vec![
        cluster_algebra(),
        nondegeneracy(),
        dichotomy(),
        reduced_energy(),
        exchange_period(0.2, "5", false),
        exchange_period(0.25, "5b", true),
        toy_invariants(),
        gauge_equivalence(),
        toy_reduced(),
        pde_correctness(),
        coarse_grid_conservation(),
        cluster_tracking(),
        amplitude_scaling(),
    ]
}

pub fn all_passed(outcomes: &[Outcome]) -> bool {
    outcomes.iter().all(|o| o.passed || o.supplementary)
}
