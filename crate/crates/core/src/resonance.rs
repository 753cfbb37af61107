//! The four-frequency resonant cluster and exact integer resonance checks.
//!
//! All cluster arithmetic is carried out in `i128`, which keeps squared sums
//! of frequencies up to `10^6` far from overflow. Floating point only enters
//! through the cubic coefficient `lambda` in [`gauge_corrected_gap`].

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::par::{self, Execution};

/// Positions of the cluster frequencies inside [`ResonantQuad::frequencies`].
pub const ALPHA1: usize = 0;
pub const ALPHA2: usize = 1;
pub const BETA1: usize = 2;
pub const BETA2: usize = 3;

/// The cluster `{M, -3M-N, N, -3N-M}` stored as an ordered quadruple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonantQuad {
    pub m: i64,
    pub n: i64,
    pub alpha1: i64,
    pub alpha2: i64,
    pub beta1: i64,
    pub beta2: i64,
    /// Cubic coefficient that makes the cluster gauge-resonant, `20 (M + N)`.
    pub lambda: f64,
    /// `max(|M|, |N|)`.
    pub m_star: i64,
}

impl ResonantQuad {
    pub fn new(m: i64, n: i64) -> Result<Self> {
        build_quad(m, n)
    }

    /// `[alpha1, alpha2, beta1, beta2]`.
    pub fn frequencies(&self) -> [i64; 4] {
        [self.alpha1, self.alpha2, self.beta1, self.beta2]
    }

    pub fn contains(&self, xi: i64) -> bool {
        self.frequencies().contains(&xi)
    }

    /// Position of `xi` in the quadruple (first match).
    pub fn position(&self, xi: i64) -> Option<usize> {
        self.frequencies().iter().position(|&f| f == xi)
    }

    pub fn max_abs_frequency(&self) -> i64 {
        self.frequencies().iter().map(|f| f.abs()).max().unwrap_or(0)
    }

    /// `M + N`.
    pub fn sum(&self) -> i64 {
        self.m + self.n
    }

    /// Exact check of `2 alpha1 + 2 beta1 + (alpha2 + beta2)/2 = 0`, scaled by 2.
    pub fn low_high_balance(&self) -> i128 {
        4 * self.alpha1 as i128 + 4 * self.beta1 as i128 + self.alpha2 as i128 + self.beta2 as i128
    }

    /// Exact check of `2 alpha1 - 2 beta1 + alpha2 - beta2 = 0`.
    pub fn exchange_balance(&self) -> i128 {
        2 * self.alpha1 as i128 - 2 * self.beta1 as i128 + self.alpha2 as i128
            - self.beta2 as i128
    }
}

pub fn build_quad(m: i64, n: i64) -> Result<ResonantQuad> {
    if m + n == 0 {
        return Err(LabError::invalid(format!(
            "M + N = 0 for (M, N) = ({m}, {n}): lambda (M + N) > 0 cannot hold"
        )));
    }
    Ok(ResonantQuad {
        m,
        n,
        alpha1: m,
        alpha2: -3 * m - n,
        beta1: n,
        beta2: -3 * n - m,
        lambda: 20.0 * (m + n) as f64,
        m_star: m.abs().max(n.abs()),
    })
}

/// Two distinct position pairs of the quadruple with the same frequency sum.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCollision {
    pub first: (i64, i64),
    pub second: (i64, i64),
    pub sum: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NondegeneracyReport {
    pub nondegenerate: bool,
    pub violations: Vec<PairCollision>,
}

/// Checks that the ten pair sums `gamma_i + gamma_j` (`i <= j`, drawn by
/// position) are pairwise distinct. Repeated frequencies therefore always
/// produce a collision.
pub fn check_nondegeneracy(quad: &ResonantQuad) -> NondegeneracyReport {
    let f = quad.frequencies();
    let pairs: Vec<(usize, usize)> = (0..4).flat_map(|i| (i..4).map(move |j| (i, j))).collect();
    let mut violations = Vec::new();
    for (a, &(i, j)) in pairs.iter().enumerate() {
        for &(k, l) in &pairs[a + 1..] {
            if f[i] + f[j] == f[k] + f[l] {
                violations.push(PairCollision {
                    first: (f[i], f[j]),
                    second: (f[k], f[l]),
                    sum: f[i] + f[j],
                });
            }
        }
    }
    NondegeneracyReport {
        nondegenerate: violations.is_empty(),
        violations,
    }
}

/// Cubic phase `2 (xi1 - xi2)(xi1 - xi)` for `xi = xi1 - xi2 + xi3`.
///
/// Panics if the square identity fails, which can only mean an arithmetic bug.
pub fn cubic_phase(xi1: i64, xi2: i64, xi3: i64) -> i128 {
    let (a, b, c) = (xi1 as i128, xi2 as i128, xi3 as i128);
    let xi = a - b + c;
    let phase = 2 * (a - b) * (a - xi);
    let squares = a * a - b * b + c * c - xi * xi;
    assert_eq!(squares, phase, "cubic phase identity failed for ({xi1}, {xi2}, {xi3})");
    assert_eq!(phase, 2 * (c - b) * (c - xi), "symmetric cubic phase form failed");
    phase
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SextupleClass {
    Diagonal,
    ResonantDisjoint,
    NonResonant,
}

/// Outcome of the "either diagonal or closes inside the cluster" test for
/// five cluster frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DichotomyCheck {
    /// Whether the hypotheses apply (five cluster inputs, small gap).
    pub applicable: bool,
    pub gap: i128,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SextupleReport {
    pub class: SextupleClass,
    /// `xi1 + xi3 + xi5 - xi2 - xi4 - xi6`.
    pub sum_defect: i128,
    /// `xi1^2 - xi2^2 + xi3^2 - xi4^2 + xi5^2 - xi6^2`.
    pub square_gap: i128,
    /// Number of distinct values among the six frequencies.
    pub support: usize,
    /// For resonant sextuples: the odd and even triples share no value and the
    /// support has at least four points. Always true for other classes.
    pub disjoint_support_holds: bool,
    pub dichotomy: Option<DichotomyCheck>,
}

fn sorted3(a: i64, b: i64, c: i64) -> [i64; 3] {
    let mut v = [a, b, c];
    v.sort_unstable();
    v
}

/// Classifies `(xi1, .., xi6)` against the two sextic resonance constraints
/// `xi1 + xi3 + xi5 = xi2 + xi4 + xi6` and the matching sum of squares.
///
/// With a cluster supplied, also evaluates the dichotomy for `xi1..xi5` in the
/// cluster: when the square gap is at most `M*^2 / 4`, the odd and even
/// triples coincide or `xi6` lies in the cluster.
pub fn classify_sextuple(xis: [i64; 6], quad: Option<&ResonantQuad>) -> SextupleReport {
    let x: Vec<i128> = xis.iter().map(|&v| v as i128).collect();
    let sum_defect = x[0] + x[2] + x[4] - x[1] - x[3] - x[5];
    let square_gap = x[0] * x[0] - x[1] * x[1] + x[2] * x[2] - x[3] * x[3] + x[4] * x[4]
        - x[5] * x[5];
    let odd = sorted3(xis[0], xis[2], xis[4]);
    let even = sorted3(xis[1], xis[3], xis[5]);
    let mut distinct = xis.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let support = distinct.len();

    let class = if sum_defect != 0 || square_gap != 0 {
        SextupleClass::NonResonant
    } else if odd == even {
        SextupleClass::Diagonal
    } else {
        SextupleClass::ResonantDisjoint
    };
    let disjoint_support_holds = match class {
        SextupleClass::ResonantDisjoint => {
            odd.iter().all(|v| !even.contains(v)) && support >= 4
        }
        _ => true,
    };

    let dichotomy = quad.map(|q| {
        let inputs_in_cluster = xis[..5].iter().all(|&v| q.contains(v));
        let threshold = (q.m_star as i128 * q.m_star as i128) / 4;
        let applicable = inputs_in_cluster && sum_defect == 0 && square_gap.abs() <= threshold;
        let holds = !applicable || odd == even || q.contains(xis[5]);
        DichotomyCheck {
            applicable,
            gap: square_gap,
            holds,
        }
    });

    SextupleReport {
        class,
        sum_defect,
        square_gap,
        support,
        disjoint_support_holds,
        dichotomy,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DichotomyScan {
    /// Ordered choices examined (`4^5`).
    pub checked: usize,
    /// Choices whose gap falls under the threshold.
    pub applicable: usize,
    pub violations: Vec<[i64; 6]>,
    /// Smallest nonzero |gap| among the choices whose sextuple is neither
    /// diagonal nor closing inside the cluster.
    pub min_off_cluster_gap: Option<i128>,
}

/// Exhaustive scan over every ordered choice of `xi1..xi5` from the cluster,
/// with `xi6` forced by the linear constraint.
pub fn scan_dichotomy(quad: &ResonantQuad) -> DichotomyScan {
    let f = quad.frequencies();
    let mut scan = DichotomyScan {
        checked: 0,
        applicable: 0,
        violations: Vec::new(),
        min_off_cluster_gap: None,
    };
    for code in 0..4usize.pow(5) {
        let digit = |k: u32| f[(code / 4usize.pow(k)) % 4];
        let (x1, x2, x3, x4, x5) = (digit(0), digit(1), digit(2), digit(3), digit(4));
        let x6 = x1 + x3 + x5 - x2 - x4;
        let xis = [x1, x2, x3, x4, x5, x6];
        let report = classify_sextuple(xis, Some(quad));
        let d = report.dichotomy.expect("quad supplied");
        scan.checked += 1;
        if d.applicable {
            scan.applicable += 1;
        }
        if !d.holds {
            scan.violations.push(xis);
        }
        let closes = sorted3(x1, x3, x5) == sorted3(x2, x4, x6) || quad.contains(x6);
        if !closes && d.gap != 0 {
            let g = d.gap.abs();
            scan.min_off_cluster_gap = Some(scan.min_off_cluster_gap.map_or(g, |m| m.min(g)));
        }
    }
    scan
}

/// Raw quintic gap `2 alpha1^2 + alpha2^2 - 2 beta1^2 - beta2^2`, checked
/// against the closed form `10 (M + N)(M - N)`.
pub fn raw_gap(quad: &ResonantQuad) -> i128 {
    let [a1, a2, b1, b2] = quad.frequencies().map(|v| v as i128);
    let gap = 2 * a1 * a1 + a2 * a2 - 2 * b1 * b1 - b2 * b2;
    let closed = 10 * (quad.m as i128 + quad.n as i128) * (quad.m as i128 - quad.n as i128);
    assert_eq!(gap, closed, "raw gap closed form failed for ({}, {})", quad.m, quad.n);
    gap
}

/// Phase drift `10 (alpha1 - beta1)(alpha1 + beta1 - lambda_used / 20)` of the
/// cluster interaction after gauging; zero exactly when `lambda_used = 20 (M + N)`.
pub fn gauge_corrected_gap(quad: &ResonantQuad, lambda_used: f64) -> f64 {
    let diff = (quad.alpha1 - quad.beta1) as f64;
    let sum = (quad.alpha1 + quad.beta1) as f64;
    10.0 * diff * (sum - lambda_used / 20.0)
}

/// JSON payload of the `resonance` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    #[serde(rename = "M")]
    pub m: i64,
    #[serde(rename = "N")]
    pub n: i64,
    pub alpha1: i64,
    pub alpha2: i64,
    pub beta1: i64,
    pub beta2: i64,
    pub lambda: f64,
    pub m_star: i64,
    pub nondegenerate: bool,
    pub violations: Vec<PairCollision>,
    pub raw_gap: i128,
    pub gauge_gap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sextuple_scan: Option<DichotomyScan>,
}

pub fn cluster_report(quad: &ResonantQuad, lambda_used: f64, scan_sextuples: bool) -> ClusterReport {
    let nd = check_nondegeneracy(quad);
    ClusterReport {
        m: quad.m,
        n: quad.n,
        alpha1: quad.alpha1,
        alpha2: quad.alpha2,
        beta1: quad.beta1,
        beta2: quad.beta2,
        lambda: quad.lambda,
        m_star: quad.m_star,
        nondegenerate: nd.nondegenerate,
        violations: nd.violations,
        raw_gap: raw_gap(quad),
        gauge_gap: gauge_corrected_gap(quad, lambda_used),
        sextuple_scan: scan_sextuples.then(|| scan_dichotomy(quad)),
    }
}

/// Result of checking the cluster identities over a square of `(M, N)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlgebraSweep {
    pub limit: i64,
    pub quads_checked: usize,
    /// `(M, N)` pairs where any identity failed.
    pub failures: Vec<(i64, i64)>,
}

fn algebra_holds(quad: &ResonantQuad) -> bool {
    let [a1, a2, b1, b2] = quad.frequencies().map(|v| v as i128);
    let gap = 2 * a1 * a1 + a2 * a2 - 2 * b1 * b1 - b2 * b2;
    let closed = 10 * (quad.m as i128 + quad.n as i128) * (quad.m as i128 - quad.n as i128);
    quad.low_high_balance() == 0
        && quad.exchange_balance() == 0
        && gap == closed
        && gauge_corrected_gap(quad, 20.0 * quad.sum() as f64) == 0.0
}

/// Checks the cluster identities, the raw gap law and the exact vanishing of
/// the gauge-corrected gap for every `|M|, |N| <= limit` with `M + N != 0`.
pub fn sweep_cluster_algebra(limit: i64, exec: Execution) -> AlgebraSweep {
    let width = (2 * limit + 1) as usize;
    let rows = par::map_range(exec, 0..width, |row| {
        let m = row as i64 - limit;
        let mut checked = 0usize;
        let mut failures = Vec::new();
        for n in -limit..=limit {
            if m + n == 0 {
                continue;
            }
            let quad = build_quad(m, n).expect("M + N != 0");
            checked += 1;
            if !algebra_holds(&quad) {
                failures.push((m, n));
            }
        }
        (checked, failures)
    });
    let mut sweep = AlgebraSweep {
        limit,
        quads_checked: 0,
        failures: Vec::new(),
    };
    for (checked, failures) in rows {
        sweep.quads_checked += checked;
        sweep.failures.extend(failures);
    }
    sweep
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn builds_named_clusters() {
        let q = build_quad(5, -4).unwrap();
        assert_eq!(q.frequencies(), [5, -11, -4, 7]);
        assert_eq!(q.lambda, 20.0);
        assert_eq!(q.m_star, 5);
        let q = build_quad(101, -100).unwrap();
        assert_eq!(q.frequencies(), [101, -203, -100, 199]);
        assert_eq!(q.lambda, 20.0);
        assert_eq!(q.m_star, 101);
        assert!(q.lambda * q.sum() as f64 > 0.0);
    }

    #[test]
    fn rejects_zero_sum() {
        let err = build_quad(1, -1).unwrap_err();
        assert!(err.to_string().contains("M + N = 0"), "{err}");
    }

    #[test]
    fn nondegeneracy_examples() {
        assert!(check_nondegeneracy(&build_quad(5, -4).unwrap()).nondegenerate);
        assert!(check_nondegeneracy(&build_quad(101, -100).unwrap()).nondegenerate);
        let report = check_nondegeneracy(&build_quad(1, 0).unwrap());
        assert!(!report.nondegenerate);
        assert!(report.violations.contains(&PairCollision {
            first: (1, -1),
            second: (0, 0),
            sum: 0
        }));
    }

    #[test]
    fn repeated_frequencies_are_rejected() {
        // M = N gives alpha1 = beta1 and alpha2 = beta2.
        let q = build_quad(3, 3).unwrap();
        assert!(!check_nondegeneracy(&q).nondegenerate);
    }

    #[test]
    fn cubic_phase_examples() {
        assert_eq!(cubic_phase(3, 1, 0), 4);
        assert_eq!(cubic_phase(7, 7, -12), 0);
        assert_eq!(cubic_phase(101, -100, -203), 41406);
    }

    #[test]
    fn sextuple_examples() {
        let r = classify_sextuple([0, 1, 3, 1, 3, 4], None);
        assert_eq!(r.class, SextupleClass::ResonantDisjoint);
        assert_eq!(r.support, 4);
        assert!(r.disjoint_support_holds);

        let r = classify_sextuple([2, 2, 5, 5, 7, 7], None);
        assert_eq!(r.class, SextupleClass::Diagonal);

        let r = classify_sextuple([1, 0, 1, 0, 1, 0], None);
        assert_eq!(r.class, SextupleClass::NonResonant);
        assert_eq!(r.sum_defect, 3);
    }

    #[test]
    fn dichotomy_scan_on_large_cluster() {
        let scan = scan_dichotomy(&build_quad(101, -100).unwrap());
        assert_eq!(scan.checked, 1024);
        assert!(scan.violations.is_empty(), "{:?}", scan.violations);
        assert!(scan.applicable > 0);
    }

    #[test]
    fn gauge_gap_examples() {
        let q = build_quad(5, -4).unwrap();
        assert_eq!(gauge_corrected_gap(&q, 20.0), 0.0);
        assert_eq!(raw_gap(&q), 90);
        assert_eq!(gauge_corrected_gap(&q, 40.0), -90.0);
        let q = build_quad(101, -100).unwrap();
        assert_eq!(gauge_corrected_gap(&q, 20.0), 0.0);
        assert_eq!(raw_gap(&q), 2010);
    }

    #[test]
    fn small_sweep_has_no_failures() {
        let s = sweep_cluster_algebra(30, Execution::Sequential);
        assert_eq!(s.quads_checked, 61 * 61 - 61);
        assert!(s.failures.is_empty());
        assert_eq!(s, sweep_cluster_algebra(30, Execution::Parallel));
    }

    #[test]
    fn cluster_report_json_keys() {
        let q = build_quad(101, -100).unwrap();
        let v = serde_json::to_value(cluster_report(&q, 20.0, false)).unwrap();
        for key in [
            "M", "N", "alpha1", "alpha2", "beta1", "beta2", "lambda", "m_star", "nondegenerate",
            "violations", "raw_gap", "gauge_gap",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }

    // Random resonant sextuples are rare, so build them: pick the odd triple,
    // then search the even triple over a window for both constraints.
    fn resonant_even_triples(odd: [i64; 3]) -> Vec<[i64; 3]> {
        let s: i64 = odd.iter().sum();
        let q: i64 = odd.iter().map(|v| v * v).sum();
        let mut out = Vec::new();
        for a in -12..=12i64 {
            for b in a..=12 {
                let c = s - a - b;
                if c >= b && a * a + b * b + c * c == q {
                    out.push([a, b, c]);
                }
            }
        }
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(400))]

        #[test]
        fn cubic_phase_identity(a in -1_000_000i64..=1_000_000, b in -1_000_000i64..=1_000_000, c in -1_000_000i64..=1_000_000) {
            let xi = a as i128 - b as i128 + c as i128;
            let lhs = (a as i128).pow(2) - (b as i128).pow(2) + (c as i128).pow(2) - xi * xi;
            prop_assert_eq!(cubic_phase(a, b, c), lhs);
        }

        #[test]
        fn resonant_sextuples_have_disjoint_support(x1 in -4i64..=4, x3 in -4i64..=4, x5 in -4i64..=4) {
            for even in resonant_even_triples([x1, x3, x5]) {
                let r = classify_sextuple([x1, even[0], x3, even[1], x5, even[2]], None);
                prop_assert!(r.class != SextupleClass::NonResonant);
                prop_assert!(r.disjoint_support_holds, "{:?}", r);
            }
        }

        #[test]
        fn cluster_identities_hold(m in -1000i64..=1000, n in -1000i64..=1000) {
            prop_assume!(m + n != 0);
            let q = build_quad(m, n).unwrap();
            prop_assert_eq!(q.low_high_balance(), 0);
            prop_assert_eq!(q.exchange_balance(), 0);
            prop_assert_eq!(gauge_corrected_gap(&q, q.lambda), 0.0);
        }
    }
}
