// Independent reference computations used by the integration tests. None of
// these call into the library's own formulas.
#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;

pub fn cluster(m: i64, n: i64) -> [i64; 4] {
    [m, -3 * m - n, n, -3 * n - m]
}

/// Every pair of positions (with repetition) whose sums coincide.
pub fn pair_collisions(f: [i64; 4]) -> Vec<((i64, i64), (i64, i64))> {
    let mut pairs = Vec::new();
    for i in 0..4 {
        for j in i..4 {
            pairs.push((f[i], f[j]));
        }
    }
    let mut out = Vec::new();
    for a in 0..pairs.len() {
        for b in a + 1..pairs.len() {
            if pairs[a].0 + pairs[a].1 == pairs[b].0 + pairs[b].1 {
                out.push((pairs[a], pairs[b]));
            }
        }
    }
    out
}

pub fn h_closed(phi: f64, k: f64, mu: f64) -> f64 {
    let q = k * (1.0 - k);
    mu * (33.0 / 8.0 * (k * k + (1.0 - k) * (1.0 - k)) + 1.5 * q - 3.0 * q.powf(1.5) * phi.cos())
}

pub fn phi_dot(phi: f64, k: f64, mu: f64) -> f64 {
    9.0 * mu * (1.0 - 2.0 * k) * (1.5 + (k * (1.0 - k)).sqrt() * phi.cos())
}

/// Root of `H(phi, K) = h` on the lower branch `K < 1/2`.
pub fn lower_branch(phi: f64, h: f64, mu: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 0.5);
    let g = |k: f64| h_closed(phi, k, mu) - h;
    assert!(g(lo) * g(hi) < 0.0, "no lower branch at phi = {phi}");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(lo) * g(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Period of a rotation orbit through `(0, k0)` by trapezoidal quadrature of
/// `dphi / phidot` along the energy level.
pub fn rotation_period(k0: f64, mu: f64, nodes: usize) -> f64 {
    let h = h_closed(0.0, k0, mu);
    let dphi = 2.0 * PI / nodes as f64;
    (0..nodes)
        .map(|j| {
            let phi = j as f64 * dphi;
            dphi / phi_dot(phi, lower_branch(phi, h, mu), mu)
        })
        .sum::<f64>()
        .abs()
}

/// Time for a libration through `(0, k0)` to carry `K` from `k0` to `1 - k0`,
/// by Gauss-Chebyshev-like midpoint quadrature in `K = 1/2 - (1/2 - k0) cos(theta)`.
pub fn libration_half_period(k0: f64, mu: f64, nodes: usize) -> f64 {
    let h = h_closed(0.0, k0, mu);
    let amp = 0.5 - k0;
    let dtheta = PI / nodes as f64;
    (0..nodes)
        .map(|j| {
            let theta = (j as f64 + 0.5) * dtheta;
            let k = 0.5 - amp * theta.cos();
            let q = k * (1.0 - k);
            let cos_phi = (mu * (33.0 / 8.0 * (k * k + (1.0 - k) * (1.0 - k)) + 1.5 * q) - h)
                / (3.0 * mu * q.powf(1.5));
            let sin_phi = (1.0 - cos_phi * cos_phi).max(0.0).sqrt();
            amp * theta.sin() * dtheta / (6.0 * mu * q.powf(1.5) * sin_phi)
        })
        .sum()
}

/// Physical values of `u` and `u_x` on `len` equispaced points by direct
/// summation. Exact for products up to degree `len / Xi`.
pub fn direct_synthesis(coeffs: &[Complex64], cutoff: i64, len: usize) -> (Vec<Complex64>, Vec<Complex64>) {
    let table: Vec<Complex64> =
        (0..len).map(|r| Complex64::from_polar(1.0, 2.0 * PI * r as f64 / len as f64)).collect();
    let l = len as i64;
    let mut u = vec![Complex64::default(); len];
    let mut ux = vec![Complex64::default(); len];
    for j in 0..l {
        let (mut a, mut b) = (Complex64::default(), Complex64::default());
        for (idx, c) in coeffs.iter().enumerate() {
            if c.norm_sqr() == 0.0 {
                continue;
            }
            let xi = idx as i64 - cutoff;
            let w = table[(xi * j).rem_euclid(l) as usize] * c;
            a += w;
            b += w * Complex64::new(0.0, xi as f64);
        }
        u[j as usize] = a;
        ux[j as usize] = b;
    }
    (u, ux)
}

/// `(M, E, P)` evaluated on `6 Xi + 1` points, where every integrand is resolved exactly.
pub fn functionals(coeffs: &[Complex64], cutoff: i64, lambda: f64, mu: f64) -> [f64; 3] {
    let len = 6 * cutoff as usize + 1;
    let (u, ux) = direct_synthesis(coeffs, cutoff, len);
    let (mut m, mut e, mut p) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(&ux) {
        let i = a.norm_sqr();
        let im = (a.conj() * b).im;
        m += i;
        e += 0.5 * b.norm_sqr() + lambda / 4.0 * i * im + (lambda * lambda + 2.0 * mu) / 12.0 * i * i * i;
        p += -0.5 * im - lambda / 4.0 * i * i;
    }
    let n = len as f64;
    [m / n, e / n, p / n]
}

pub fn quartic_mean(coeffs: &[Complex64], cutoff: i64) -> f64 {
    let len = 4 * cutoff as usize + 1;
    let (u, _) = direct_synthesis(coeffs, cutoff, len);
    u.iter().map(|a| a.norm_sqr().powi(2)).sum::<f64>() / len as f64
}

pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}
