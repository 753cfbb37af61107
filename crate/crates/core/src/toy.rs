//! Four-mode resonant truncation on the cluster.
//!
//! The full flavor keeps the diagonal phase terms and the explicit quintic
//! oscillation `exp(-+ i Omega t)`; the gauged flavor is the autonomous system
//! left after removing every phase that the four invariants make constant.

use num_complex::Complex64;
use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::ode::{Dopri5, OdeSystem};
use crate::reduced::ReducedState;
use crate::resonance::{self, ResonantQuad, ALPHA1, ALPHA2, BETA1, BETA2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Full,
    #[default]
    Gauged,
}

impl std::str::FromStr for Flavor {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "gauged" => Ok(Self::Gauged),
            other => Err(LabError::invalid(format!(
                "unknown toy flavor {other:?} (expected full or gauged)"
            ))),
        }
    }
}

/// Mass of canonical data.
pub const CANONICAL_MASS: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyParams {
    pub quad: ResonantQuad,
    pub mu: f64,
    pub lambda: f64,
    #[serde(rename = "M0")]
    pub m0: f64,
    #[serde(rename = "P0")]
    pub p0: f64,
    pub flavor: Flavor,
}

impl ToyParams {
    /// Parameters for amplitudes supported on the cluster, with `M0` and `P0`
    /// taken from those amplitudes.
    pub fn for_amplitudes(
        quad: ResonantQuad,
        mu: f64,
        lambda: f64,
        amps: &[Complex64; 4],
        flavor: Flavor,
    ) -> Self {
        Self {
            quad,
            mu,
            lambda,
            m0: cluster_mass(amps),
            p0: cluster_momentum(&quad, amps, lambda),
            flavor,
        }
    }

    pub fn with_flavor(mut self, flavor: Flavor) -> Self {
        self.flavor = flavor;
        self
    }

    /// `Omega = 2 alpha1^2 + alpha2^2 - 2 beta1^2 - beta2^2`.
    pub fn raw_gap(&self) -> f64 {
        resonance::raw_gap(&self.quad) as f64
    }

    /// The constant linear frequency `2 (M0^2 (lambda^2 + 3 mu) + 2 lambda P0)`.
    pub fn linear_frequency(&self) -> f64 {
        2.0 * (self.m0 * self.m0 * (self.lambda * self.lambda + 3.0 * self.mu)
            + 2.0 * self.lambda * self.p0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyState {
    /// `[alpha1, alpha2, beta1, beta2]`.
    pub amps: [Complex64; 4],
    pub t: f64,
}

impl ToyState {
    pub fn new(amps: [Complex64; 4]) -> Self {
        Self { amps, t: 0.0 }
    }

    /// `|c_alpha1|^2`.
    pub fn k(&self) -> f64 {
        self.amps[ALPHA1].norm_sqr()
    }

    pub fn intensities(&self) -> [f64; 4] {
        self.amps.map(|a| a.norm_sqr())
    }

    fn to_array(self) -> [f64; 8] {
        let mut y = [0.0; 8];
        for (i, a) in self.amps.iter().enumerate() {
            y[2 * i] = a.re;
            y[2 * i + 1] = a.im;
        }
        y
    }

    fn from_array(y: &[f64; 8], t: f64) -> Self {
        let mut amps = [Complex64::default(); 4];
        for (i, a) in amps.iter_mut().enumerate() {
            *a = Complex64::new(y[2 * i], y[2 * i + 1]);
        }
        Self { amps, t }
    }
}

/// `a_alpha1 = sqrt(K0)`, `a_alpha2 = sqrt(K0/2)`, `a_beta1 = sqrt(1-K0)`,
/// `a_beta2 = sqrt((1-K0)/2)`, times the given phases.
pub fn canonical_amplitudes(k0: f64, phases: [f64; 4]) -> Result<[Complex64; 4]> {
    if !(k0 > 0.0 && k0 < 1.0) {
        return Err(LabError::invalid(format!("K0 = {k0} must lie strictly inside (0, 1)")));
    }
    let moduli = [k0.sqrt(), (k0 / 2.0).sqrt(), (1.0 - k0).sqrt(), ((1.0 - k0) / 2.0).sqrt()];
    let mut out = [Complex64::default(); 4];
    for i in 0..4 {
        out[i] = Complex64::from_polar(moduli[i], phases[i]);
    }
    Ok(out)
}

pub fn cluster_mass(amps: &[Complex64; 4]) -> f64 {
    amps.iter().map(|a| a.norm_sqr()).sum()
}

/// Momentum of a field supported on a nondegenerate cluster:
/// `-1/2 sum xi |a|^2 - lambda/4 (2 M^2 - sum |a|^4)`.
pub fn cluster_momentum(quad: &ResonantQuad, amps: &[Complex64; 4], lambda: f64) -> f64 {
    let f = quad.frequencies();
    let first: f64 = (0..4).map(|i| f[i] as f64 * amps[i].norm_sqr()).sum();
    let mass = cluster_mass(amps);
    let quartic: f64 = amps.iter().map(|a| a.norm_sqr().powi(2)).sum();
    -0.5 * first - lambda / 4.0 * (2.0 * mass * mass - quartic)
}

/// Interaction terms, without the factor `mu`. `e` multiplies the terms that
/// target the alpha modes and its conjugate those that target the beta modes.
fn interaction(d: &[Complex64; 4], e: Complex64) -> [Complex64; 4] {
    let (a1, a2, b1, b2) = (d[ALPHA1], d[ALPHA2], d[BETA1], d[BETA2]);
    let (ca1, ca2, cb1, cb2) = (a1.conj(), a2.conj(), b1.conj(), b2.conj());
    let (m1, m2, m3, m4) = lambda_star_multiplicities_table();
    let ec = e.conj();
    [
        m1 * ca1 * ca2 * b1 * b1 * b2 * e,
        m2 * ca1 * ca1 * b1 * b1 * b2 * e,
        m3 * a1 * a1 * a2 * cb1 * cb2 * ec,
        m4 * a1 * a1 * a2 * cb1 * cb1 * ec,
    ]
}

fn lambda_star_multiplicities_table() -> (f64, f64, f64, f64) {
    (6.0, 3.0, 6.0, 3.0)
}

/// Counts, for each target mode, the ordered tuples `(xi1, xi3, xi5; xi2, xi4)`
/// of cluster positions for which `{xi1, xi3, xi5}` and `{xi2, xi4, target}`
/// are the two multisets `{a1, a1, a2}` and `{b1, b1, b2}` in either order.
pub fn lambda_star_multiplicities() -> [usize; 4] {
    let low = {
        let mut v = [ALPHA1, ALPHA1, ALPHA2];
        v.sort_unstable();
        v
    };
    let high = {
        let mut v = [BETA1, BETA1, BETA2];
        v.sort_unstable();
        v
    };
    let mut counts = [0usize; 4];
    for (target, count) in counts.iter_mut().enumerate() {
        for code in 0..4usize.pow(5) {
            let pick = |k: u32| (code / 4usize.pow(k)) % 4;
            let mut odd = [pick(0), pick(1), pick(2)];
            let mut even = [pick(3), pick(4), target];
            odd.sort_unstable();
            even.sort_unstable();
            if (odd == low && even == high) || (odd == high && even == low) {
                *count += 1;
            }
        }
    }
    counts
}

/// Right-hand side of the gauged flavor:
/// `i d' = mu |d|^2 (4|d|^2 - 6 M0) d + mu S(d)`.
pub fn toy_rhs_gauged(state: &ToyState, params: &ToyParams) -> Result<[Complex64; 4]> {
    if params.flavor != Flavor::Gauged {
        return Err(LabError::invalid("toy_rhs_gauged called with full-flavor parameters"));
    }
    Ok(gauged_field(&state.amps, params))
}

fn gauged_field(d: &[Complex64; 4], p: &ToyParams) -> [Complex64; 4] {
    let s = interaction(d, Complex64::new(1.0, 0.0));
    let mut out = [Complex64::default(); 4];
    for i in 0..4 {
        let intensity = d[i].norm_sqr();
        let r = p.mu * intensity * (4.0 * intensity - 6.0 * p.m0) * d[i] + p.mu * s[i];
        out[i] = -Complex64::i() * r;
    }
    out
}

/// Right-hand side of the full, time-dependent flavor.
pub fn toy_rhs_full(state: &ToyState, params: &ToyParams) -> Result<[Complex64; 4]> {
    if params.flavor != Flavor::Full {
        return Err(LabError::invalid("toy_rhs_full called with gauged-flavor parameters"));
    }
    Ok(full_field(state.t, &state.amps, params, params.raw_gap(), params.linear_frequency()))
}

fn full_field(t: f64, c: &[Complex64; 4], p: &ToyParams, omega: f64, lin: f64) -> [Complex64; 4] {
    let xi = p.quad.frequencies();
    let quartic: f64 = c.iter().map(|a| a.norm_sqr().powi(2)).sum();
    let s = interaction(c, Complex64::from_polar(1.0, -omega * t));
    let lam2 = p.lambda * p.lambda + 3.0 * p.mu;
    let mut out = [Complex64::default(); 4];
    for i in 0..4 {
        let intensity = c[i].norm_sqr();
        let diag = (p.lambda * xi[i] as f64 - 6.0 * p.m0 * p.mu) * intensity + lin
            + 4.0 * p.mu * intensity * intensity
            - lam2 * quartic;
        out[i] = -Complex64::i() * (diag * c[i] + p.mu * s[i]);
    }
    out
}

/// The toy model as an ODE on interleaved real and imaginary parts.
#[derive(Debug, Clone, Copy)]
pub struct ToyFlow {
    params: ToyParams,
    omega: f64,
    lin: f64,
}

impl ToyFlow {
    pub fn new(params: ToyParams) -> Self {
        Self {
            params,
            omega: params.raw_gap(),
            lin: params.linear_frequency(),
        }
    }
}

impl OdeSystem<8> for ToyFlow {
    fn rhs(&self, t: f64, y: &[f64; 8], dydt: &mut [f64; 8]) {
        let c = ToyState::from_array(y, t).amps;
        let f = match self.params.flavor {
            Flavor::Gauged => gauged_field(&c, &self.params),
            Flavor::Full => full_field(t, &c, &self.params, self.omega, self.lin),
        };
        for i in 0..4 {
            dydt[2 * i] = f[i].re;
            dydt[2 * i + 1] = f[i].im;
        }
    }
}

/// Integrates the toy model, sampling every `stride` and at `horizon`.
pub fn integrate_toy(
    state0: &ToyState,
    params: &ToyParams,
    horizon: f64,
    tol: f64,
    stride: f64,
) -> Result<Vec<ToyState>> {
    if !(tol > 0.0) {
        return Err(LabError::invalid(format!("tolerance must be positive, got {tol}")));
    }
    if !(stride > 0.0) {
        return Err(LabError::invalid(format!("sample stride must be positive, got {stride}")));
    }
    let times = sample_times(state0.t, horizon, stride);
    let flow = ToyFlow::new(*params);
    let ys = Dopri5::with_tol(tol).solve_at(&flow, state0.t, state0.to_array(), &times)?;
    Ok(ys.iter().zip(&times).map(|(y, &t)| ToyState::from_array(y, t)).collect())
}

/// `t0, t0 + stride, ...` up to `t0 + horizon` (either sign), ending exactly there.
pub fn sample_times(t0: f64, horizon: f64, stride: f64) -> Vec<f64> {
    let count = (horizon.abs() / stride).floor() as usize;
    let dir = if horizon < 0.0 { -1.0 } else { 1.0 };
    let mut times: Vec<f64> = (0..=count).map(|i| t0 + dir * i as f64 * stride).collect();
    if (horizon.abs() - count as f64 * stride).abs() > 1e-12 * stride {
        times.push(t0 + horizon);
    }
    times
}

/// `(|a1|^2 + |b1|^2, |a2|^2 + |b2|^2, |a1|^2 - 2|a2|^2, |b1|^2 - 2|b2|^2)`.
pub fn toy_invariants(state: &ToyState) -> [f64; 4] {
    let i = state.intensities();
    [
        i[ALPHA1] + i[BETA1],
        i[ALPHA2] + i[BETA2],
        i[ALPHA1] - 2.0 * i[ALPHA2],
        i[BETA1] - 2.0 * i[BETA2],
    ]
}

/// Hamiltonian of the gauged flavor in action-angle form:
/// `-mu sum (4/3 I^3 - 3 M0 I^2) - 6 mu I_a1 I_a2^{1/2} I_b1 I_b2^{1/2} cos phi1`.
pub fn toy_hamiltonian(state: &ToyState, params: &ToyParams) -> f64 {
    let i = state.intensities();
    let diag: f64 = i.iter().map(|&x| 4.0 / 3.0 * x.powi(3) - 3.0 * params.m0 * x * x).sum();
    let d = &state.amps;
    // Re of the phase-carrying product equals the amplitude product times cos phi1.
    let product = d[ALPHA1] * d[ALPHA1] * d[ALPHA2] * (d[BETA1] * d[BETA1] * d[BETA2]).conj();
    -params.mu * diag - 6.0 * params.mu * product.re
}

/// The angle map `A` and its inverse transpose.
pub fn angle_matrix() -> [[Rational64; 4]; 4] {
    let r = |n: i64| Rational64::from(n);
    [
        [r(2), r(1), r(-2), r(-1)],
        [r(0), r(1), r(0), r(0)],
        [r(0), r(0), r(1), r(0)],
        [r(0), r(0), r(0), r(1)],
    ]
}

/// Exact inverse of a 4x4 rational matrix by Gauss-Jordan elimination.
pub fn invert4(m: &[[Rational64; 4]; 4]) -> Option<[[Rational64; 4]; 4]> {
    let zero = Rational64::from(0);
    let one = Rational64::from(1);
    let mut a = *m;
    let mut inv = [[zero; 4]; 4];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = one;
    }
    for col in 0..4 {
        let pivot = (col..4).find(|&r| a[r][col] != zero)?;
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col];
        for j in 0..4 {
            a[col][j] /= p;
            inv[col][j] /= p;
        }
        for r in 0..4 {
            if r != col && a[r][col] != zero {
                let f = a[r][col];
                for j in 0..4 {
                    let (ac, ic) = (a[col][j], inv[col][j]);
                    a[r][j] -= f * ac;
                    inv[r][j] -= f * ic;
                }
            }
        }
    }
    Some(inv)
}

pub fn transpose4(m: &[[Rational64; 4]; 4]) -> [[Rational64; 4]; 4] {
    let mut t = *m;
    for i in 0..4 {
        for j in 0..4 {
            t[i][j] = m[j][i];
        }
    }
    t
}

fn apply(m: &[[Rational64; 4]; 4], v: &[f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = (0..4)
            .map(|j| *m[i][j].numer() as f64 / *m[i][j].denom() as f64 * v[j])
            .sum();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionAngles {
    pub actions: [f64; 4],
    /// `None` for a mode with zero amplitude.
    pub angles: [Option<f64>; 4],
    /// `A theta`, available when every angle is defined.
    pub phi: Option<[f64; 4]>,
    pub phi1: Option<f64>,
    /// `A^{-T} I`.
    pub j: [f64; 4],
}

impl ActionAngles {
    /// The matching point of the reduced flow. The gauged toy flow runs the
    /// reduced flow with the angle reversed, so the reduced phase is `-phi1`.
    pub fn reduced_point(&self, t: f64) -> Option<ReducedState> {
        self.phi1.map(|phi1| ReducedState {
            phi1: -phi1,
            k: self.actions[ALPHA1],
            t,
        })
    }
}

pub fn actions_angles(state: &ToyState) -> ActionAngles {
    let actions = state.intensities();
    let angles = state.amps.map(|a| if a == Complex64::default() { None } else { Some(a.arg()) });
    let theta: Option<Vec<f64>> = angles.iter().copied().collect();
    let a = angle_matrix();
    let phi = theta.map(|th| apply(&a, &[th[0], th[1], th[2], th[3]]));
    let inv_t = transpose4(&invert4(&a).expect("A is unimodular"));
    ActionAngles {
        actions,
        angles,
        phi,
        phi1: phi.map(|p| p[0]),
        j: apply(&inv_t, &actions),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resonance::build_quad;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn params(flavor: Flavor, k0: f64) -> (ToyState, ToyParams) {
        let quad = build_quad(101, -100).unwrap();
        let amps = canonical_amplitudes(k0, [0.0; 4]).unwrap();
        (ToyState::new(amps), ToyParams::for_amplitudes(quad, 1.0, quad.lambda, &amps, flavor))
    }

    #[test]
    fn multiplicities_by_enumeration() {
        assert_eq!(lambda_star_multiplicities(), [6, 3, 6, 3]);
        let (m1, m2, m3, m4) = lambda_star_multiplicities_table();
        assert_eq!([m1, m2, m3, m4].map(|m| m as usize), lambda_star_multiplicities());
    }

    #[test]
    fn symmetric_state_has_static_intensities() {
        let (s, p) = params(Flavor::Gauged, 0.5);
        let f = toy_rhs_gauged(&s, &p).unwrap();
        for i in 0..4 {
            let rate = 2.0 * (s.amps[i].conj() * f[i]).re;
            assert_abs_diff_eq!(rate, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn interaction_on_alpha1_at_half() {
        let (s, _) = params(Flavor::Gauged, 0.5);
        let term = interaction(&s.amps, Complex64::new(1.0, 0.0))[ALPHA1];
        assert_abs_diff_eq!(term.re, 6.0 * 0.5f64.sqrt() * 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(term.re, 0.530_330_085_889_910_6, epsilon = 1e-15);
        assert_eq!(term.im, 0.0);
    }

    #[test]
    fn quartic_sum_formula() {
        for k in [0.2, 0.5, 0.73] {
            let (s, _) = params(Flavor::Gauged, k);
            let q: f64 = s.intensities().iter().map(|x| x * x).sum();
            assert_abs_diff_eq!(q, 1.25 - 2.5 * k * (1.0 - k), epsilon = 1e-15);
        }
    }

    #[test]
    fn flavor_mismatch_is_rejected() {
        let (s, p) = params(Flavor::Gauged, 0.2);
        assert!(toy_rhs_full(&s, &p).is_err());
        assert!(toy_rhs_gauged(&s, &p.with_flavor(Flavor::Full)).is_err());
    }

    #[test]
    fn invariant_examples() {
        let (s, _) = params(Flavor::Gauged, 0.37);
        let inv = toy_invariants(&s);
        assert_abs_diff_eq!(inv[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(inv[1], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(inv[2], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(inv[3], 0.0, epsilon = 1e-15);
        assert_eq!(toy_invariants(&ToyState::new([Complex64::default(); 4])), [0.0; 4]);
        let mut one = [Complex64::default(); 4];
        one[ALPHA1] = Complex64::new(1.0, 0.0);
        assert_eq!(toy_invariants(&ToyState::new(one)), [1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn zero_coupling_freezes_gauged_state() {
        let (s, mut p) = params(Flavor::Gauged, 0.2);
        p.mu = 0.0;
        let traj = integrate_toy(&s, &p, 1.0, 1e-12, 0.25).unwrap();
        assert_eq!(traj.len(), 5);
        for x in traj {
            assert_eq!(x.amps, s.amps);
        }
    }

    #[test]
    fn action_angle_examples() {
        let k = 0.2;
        let (s, _) = params(Flavor::Gauged, k);
        let aa = actions_angles(&s);
        assert_eq!(aa.phi1, Some(0.0));
        let expect = [k / 2.0, 0.0, 1.0, 0.5];
        for i in 0..4 {
            assert_abs_diff_eq!(aa.j[i], expect[i], epsilon = 1e-15);
        }
        let amps = canonical_amplitudes(k, [0.3, 0.1, 0.2, -0.1]).unwrap();
        let aa = actions_angles(&ToyState::new(amps));
        assert_abs_diff_eq!(aa.phi1.unwrap(), 0.4, epsilon = 1e-15);
    }

    #[test]
    fn zero_mode_leaves_angle_undefined() {
        let mut amps = canonical_amplitudes(0.2, [0.0; 4]).unwrap();
        amps[BETA2] = Complex64::default();
        let aa = actions_angles(&ToyState::new(amps));
        assert_eq!(aa.angles[BETA2], None);
        assert_eq!(aa.phi1, None);
        assert!(aa.reduced_point(0.0).is_none());
    }

    #[test]
    fn angle_matrix_inverse_is_exact() {
        let a = angle_matrix();
        let inv = invert4(&a).unwrap();
        let one = Rational64::from(1);
        let zero = Rational64::from(0);
        for i in 0..4 {
            for j in 0..4 {
                let s: Rational64 = (0..4).map(|k| a[i][k] * inv[k][j]).sum();
                assert_eq!(s, if i == j { one } else { zero });
            }
        }
        let half = Rational64::new(1, 2);
        let expected_inv_t = [
            [half, zero, zero, zero],
            [-half, one, zero, zero],
            [one, zero, one, zero],
            [half, zero, zero, one],
        ];
        assert_eq!(transpose4(&inv), expected_inv_t);
    }

    #[test]
    fn hamiltonian_matches_reduced_form() {
        let mu = 1.0;
        for (k, phases) in [(0.2, [0.0; 4]), (0.6, [0.3, -1.0, 0.2, 0.9])] {
            let amps = canonical_amplitudes(k, phases).unwrap();
            let s = ToyState::new(amps);
            let (_, p) = params(Flavor::Gauged, k);
            let rp = actions_angles(&s).reduced_point(0.0).unwrap();
            let h = toy_hamiltonian(&s, &p);
            assert_abs_diff_eq!(h, crate::reduced::hamiltonian(&rp, mu) + toy_offset(mu), epsilon = 1e-13);
        }
    }

    // The polynomial part of the toy Hamiltonian differs from the reduced one
    // by a constant on the canonical invariant manifold.
    fn toy_offset(mu: f64) -> f64 {
        let (s, p) = params(Flavor::Gauged, 0.5);
        let rp = actions_angles(&s).reduced_point(0.0).unwrap();
        toy_hamiltonian(&s, &p) - crate::reduced::hamiltonian(&rp, mu)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        // The four combinations have zero time derivative for arbitrary data.
        #[test]
        fn invariants_are_first_integrals(
            re in proptest::array::uniform8(-1.0f64..1.0),
            t in 0.0f64..2.0,
            full in any::<bool>(),
        ) {
            let mut amps = [Complex64::default(); 4];
            for i in 0..4 {
                amps[i] = Complex64::new(re[2 * i], re[2 * i + 1]);
            }
            let (_, p) = params(if full { Flavor::Full } else { Flavor::Gauged }, 0.2);
            let mut s = ToyState::new(amps);
            s.t = t;
            let f = if full { toy_rhs_full(&s, &p).unwrap() } else { toy_rhs_gauged(&s, &p).unwrap() };
            let rate: Vec<f64> = (0..4).map(|i| 2.0 * (amps[i].conj() * f[i]).re).collect();
            let d = [
                rate[0] + rate[2],
                rate[1] + rate[3],
                rate[0] - 2.0 * rate[1],
                rate[2] - 2.0 * rate[3],
            ];
            for v in d {
                prop_assert!(v.abs() < 1e-10, "{d:?}");
            }
        }
    }
}
