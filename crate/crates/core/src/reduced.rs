//! The planar Hamiltonian flow for the relative phase `phi1` and the action `K`.
//!
//! ```text
//! phi1' = 9 mu (1 - 2K) (p + sqrt(K(1-K)) cos phi1)
//! K'    = q mu K^{3/2} (1-K)^{3/2} sin phi1
//! ```
//!
//! Only `(p, q) = (3/2, 6)` makes [`hamiltonian`] a first integral. The
//! variant `(7/2, 12)` is kept for literal reproduction of the printed system.

use std::f64::consts::PI;
use std::ops::ControlFlow;

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::ode::{DenseStep, Dopri5, OdeSystem};

/// Distance from the boundary of `0 < K < 1` at which trajectories are
/// declared to have left the strip.
pub const EPS_K: f64 = 1e-12;

/// Default recurrence tolerance of [`find_period`] in `(phi1 mod 2pi, K)`.
pub const RECURRENCE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoefficientVariant {
    Verbatim,
    #[default]
    Consistent,
}

impl std::str::FromStr for CoefficientVariant {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "verbatim" => Ok(Self::Verbatim),
            "consistent" => Ok(Self::Consistent),
            other => Err(LabError::invalid(format!(
                "unknown coefficient variant {other:?} (expected verbatim or consistent)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReducedCoefficients {
    pub variant: CoefficientVariant,
    pub p: Rational64,
    pub q: Rational64,
}

impl ReducedCoefficients {
    pub fn new(variant: CoefficientVariant) -> Self {
        let (p, q) = match variant {
            CoefficientVariant::Verbatim => (Rational64::new(7, 2), Rational64::from(12)),
            CoefficientVariant::Consistent => (Rational64::new(3, 2), Rational64::from(6)),
        };
        Self { variant, p, q }
    }

    pub fn consistent() -> Self {
        Self::new(CoefficientVariant::Consistent)
    }

    pub fn verbatim() -> Self {
        Self::new(CoefficientVariant::Verbatim)
    }

    fn pq(&self) -> (f64, f64) {
        let f = |r: Rational64| *r.numer() as f64 / *r.denom() as f64;
        (f(self.p), f(self.q))
    }
}

impl Default for ReducedCoefficients {
    fn default() -> Self {
        Self::consistent()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedState {
    pub phi1: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub t: f64,
}

impl ReducedState {
    pub fn new(phi1: f64, k: f64) -> Self {
        Self { phi1, k, t: 0.0 }
    }

    /// `phi1` wrapped into `(-pi, pi]`.
    pub fn phi1_wrapped(&self) -> f64 {
        wrap_angle(self.phi1)
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(phi: f64) -> f64 {
    let w = (phi + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

fn in_strip(k: f64) -> bool {
    k > EPS_K && k < 1.0 - EPS_K
}

fn rhs_unchecked(phi1: f64, k: f64, mu: f64, p: f64, q: f64) -> (f64, f64) {
    let k = k.clamp(EPS_K, 1.0 - EPS_K);
    let s = k * (1.0 - k);
    let root = s.sqrt();
    let dphi = 9.0 * mu * (1.0 - 2.0 * k) * (p + root * phi1.cos());
    let dk = q * mu * s * root * phi1.sin();
    (dphi, dk)
}

/// Time derivatives `(phi1', K')`.
pub fn reduced_rhs(state: &ReducedState, mu: f64, coeffs: &ReducedCoefficients) -> Result<(f64, f64)> {
    if !in_strip(state.k) {
        return Err(LabError::Domain {
            t: state.t,
            phi1: state.phi1,
            k: state.k,
        });
    }
    let (p, q) = coeffs.pq();
    Ok(rhs_unchecked(state.phi1, state.k, mu, p, q))
}

/// `33/8 mu (K^2 + (1-K)^2) + 3/2 mu K(1-K) - 3 mu K^{3/2}(1-K)^{3/2} cos phi1`.
pub fn hamiltonian(state: &ReducedState, mu: f64) -> f64 {
    let k = state.k;
    let s = (k * (1.0 - k)).max(0.0);
    mu * (33.0 / 8.0 * (k * k + (1.0 - k) * (1.0 - k)) + 1.5 * s
        - 3.0 * s * s.sqrt() * state.phi1.cos())
}

/// Zero on the level set through the saddles `(+-pi, 1/2)`.
pub fn heteroclinic_residual(state: &ReducedState) -> f64 {
    let s = (state.k * (1.0 - state.k)).max(0.0);
    s * (27.0 / 4.0 + 3.0 * s.sqrt() * state.phi1.cos()) - 21.0 / 16.0
}

/// The reduced vector field as an ODE system on `[phi1, K]`.
#[derive(Debug, Clone, Copy)]
pub struct ReducedFlow {
    pub mu: f64,
    p: f64,
    q: f64,
}

impl ReducedFlow {
    pub fn new(mu: f64, coeffs: &ReducedCoefficients) -> Self {
        let (p, q) = coeffs.pq();
        Self { mu, p, q }
    }
}

impl OdeSystem<2> for ReducedFlow {
    fn rhs(&self, _t: f64, y: &[f64; 2], dydt: &mut [f64; 2]) {
        let (a, b) = rhs_unchecked(y[0], y[1], self.mu, self.p, self.q);
        dydt[0] = a;
        dydt[1] = b;
    }
}

fn domain_guard(step: &DenseStep<2>, fault: &mut Option<LabError>) -> ControlFlow<()> {
    if in_strip(step.y1[1]) {
        ControlFlow::Continue(())
    } else {
        *fault = Some(LabError::Domain {
            t: step.t1,
            phi1: step.y1[0],
            k: step.y1[1],
        });
        ControlFlow::Break(())
    }
}

fn check_start(state0: &ReducedState, tol: f64) -> Result<()> {
    if !(tol > 0.0) {
        return Err(LabError::invalid(format!("tolerance must be positive, got {tol}")));
    }
    if !in_strip(state0.k) {
        return Err(LabError::invalid(format!(
            "initial K = {} is outside (0, 1)",
            state0.k
        )));
    }
    Ok(())
}

/// Integrates from `state0` over `horizon` (either sign) and samples the
/// trajectory every `stride` time units, always including both end points.
pub fn integrate_reduced(
    state0: &ReducedState,
    mu: f64,
    coeffs: &ReducedCoefficients,
    horizon: f64,
    tol: f64,
    stride: f64,
) -> Result<Vec<ReducedState>> {
    check_start(state0, tol)?;
    if !(stride > 0.0) {
        return Err(LabError::invalid(format!("sample stride must be positive, got {stride}")));
    }
    let flow = ReducedFlow::new(mu, coeffs);
    let mut stepper = Dopri5::with_tol(tol).start(&flow, state0.t, [state0.phi1, state0.k]);
    let count = (horizon.abs() / stride).floor() as usize;
    let dir = horizon.signum();
    let mut times: Vec<f64> = (0..=count).map(|i| state0.t + dir * i as f64 * stride).collect();
    if (horizon.abs() - count as f64 * stride).abs() > 1e-12 * stride {
        times.push(state0.t + horizon);
    }
    let mut out = Vec::with_capacity(times.len());
    for t in times {
        let mut fault = None;
        stepper.advance_to(t, |step| domain_guard(step, &mut fault))?;
        if let Some(e) = fault {
            return Err(e);
        }
        let y = stepper.y();
        out.push(ReducedState {
            phi1: y[0],
            k: y[1],
            t,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PeriodClass {
    Periodic,
    Equilibrium,
    NoReturn,
}

/// Whether `phi1` stays in a bounded arc (libration) or winds (rotation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrbitKind {
    Libration,
    Rotation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodResult {
    pub classification: PeriodClass,
    /// Time of maximal `|K - K(0)|` within the first cycle.
    #[serde(rename = "T")]
    pub t_half: f64,
    #[serde(rename = "K0")]
    pub k0: f64,
    #[serde(rename = "KT")]
    pub k_t: f64,
    /// First return time to the starting point.
    pub full_period: f64,
    pub orbit: Option<OrbitKind>,
    /// Net number of turns of `phi1` over one full period.
    pub winding: i64,
    /// `K(0) + K(T) - 1`.
    pub exchange_defect: f64,
    /// `max(1/2 - K(0), K(T) - 1/2)`.
    pub c_star: f64,
}

impl PeriodResult {
    fn degenerate(classification: PeriodClass, k0: f64) -> Self {
        Self {
            classification,
            t_half: f64::NAN,
            k0,
            k_t: f64::NAN,
            full_period: f64::NAN,
            orbit: None,
            winding: 0,
            exchange_defect: f64::NAN,
            c_star: f64::NAN,
        }
    }

    pub fn is_periodic(&self) -> bool {
        self.classification == PeriodClass::Periodic
    }
}

/// Finds the first return of `(phi1 mod 2pi, K)` with the default
/// recurrence tolerance.
pub fn find_period(
    state0: &ReducedState,
    mu: f64,
    coeffs: &ReducedCoefficients,
    tol: f64,
) -> Result<PeriodResult> {
    find_period_with(state0, mu, coeffs, tol, RECURRENCE_TOL)
}

/// Section `phi1 = phi1(0) (mod 2pi)` located on the dense output, with a
/// proximity test in `K`. The half period is the extremum of `K` (a zero of
/// `sin phi1`) farthest from `K(0)`.
pub fn find_period_with(
    state0: &ReducedState,
    mu: f64,
    coeffs: &ReducedCoefficients,
    tol: f64,
    recurrence_tol: f64,
) -> Result<PeriodResult> {
    check_start(state0, tol)?;
    let (phi0, k0) = (state0.phi1, state0.k);
    let near_equilibrium = (k0 - 0.5).abs() <= recurrence_tol
        && (wrap_angle(phi0).abs() <= recurrence_tol
            || (PI - wrap_angle(phi0).abs()) <= recurrence_tol);
    let (dphi, dk) = reduced_rhs(state0, mu, coeffs)?;
    if mu == 0.0 || near_equilibrium || dphi.hypot(dk) <= recurrence_tol * mu.abs() {
        return Ok(PeriodResult::degenerate(PeriodClass::Equilibrium, k0));
    }

    let horizon = state0.t + 100.0 / mu.abs();
    let flow = ReducedFlow::new(mu, coeffs);
    let mut stepper = Dopri5::with_tol(tol).start(&flow, state0.t, [phi0, k0]);
    let section = |_: f64, y: &[f64; 2]| ((y[0] - phi0) / 2.0).sin();
    let extremum = |_: f64, y: &[f64; 2]| y[0].sin();

    let mut fault = None;
    let mut best: Option<(f64, f64)> = None; // (t, K) of the largest excursion
    let mut ret: Option<(f64, [f64; 2])> = None;
    stepper.advance_to(horizon, |step| {
        if let ControlFlow::Break(()) = domain_guard(step, &mut fault) {
            return ControlFlow::Break(());
        }
        if let Some((t, y)) = step.locate(extremum) {
            if t > state0.t && best.map_or(true, |(_, kb)| (y[1] - k0).abs() > (kb - k0).abs()) {
                best = Some((t, y[1]));
            }
        }
        if let Some((t, y)) = step.locate(section) {
            if t > state0.t && (y[1] - k0).abs() <= recurrence_tol {
                ret = Some((t, y));
                return ControlFlow::Break(());
            }
        }
        ControlFlow::Continue(())
    })?;
    if let Some(e) = fault {
        return Err(e);
    }
    let Some((t_ret, y_ret)) = ret else {
        return Ok(PeriodResult::degenerate(PeriodClass::NoReturn, k0));
    };
    let (t_half, k_t) = best.unwrap_or((f64::NAN, f64::NAN));
    let winding = ((y_ret[0] - phi0) / (2.0 * PI)).round() as i64;
    Ok(PeriodResult {
        classification: PeriodClass::Periodic,
        t_half: t_half - state0.t,
        k0,
        k_t,
        full_period: t_ret - state0.t,
        orbit: Some(if winding == 0 {
            OrbitKind::Libration
        } else {
            OrbitKind::Rotation
        }),
        winding,
        exchange_defect: k0 + k_t - 1.0,
        c_star: (0.5 - k0).max(k_t - 0.5),
    })
}
