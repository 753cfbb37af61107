//! Pseudospectral solver for `i u_t + u_xx = -i lambda u^2 conj(u)_x + mu |u|^4 u`
//! on the circle of length `2 pi`.
//!
//! Coefficients are kept for `|xi| <= Xi` and nonlinear products are formed on
//! a zero-padded grid of `padding * n` points. With `n >= 2 Xi + 2` and padding
//! at least 3 the quintic products are alias-free on the retained modes.
//! Time stepping is Lawson (integrating-factor) RK4: the dispersion `exp(-i xi^2 t)`
//! is applied exactly and RK4 only sees the nonlinearity.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::resonance::ResonantQuad;
use crate::toy;

pub const DEFAULT_PADDING: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralField {
    pub cutoff: usize,
    pub grid_size: usize,
    /// `u_hat(xi)` stored at index `xi + cutoff`.
    pub coeffs: Vec<Complex64>,
    pub t: f64,
}

impl SpectralField {
    pub fn zeros(cutoff: usize, grid_size: usize) -> Result<Self> {
        if cutoff == 0 {
            return Err(LabError::invalid("spectral cutoff must be positive"));
        }
        if !grid_size.is_power_of_two() || grid_size < 2 * cutoff + 2 {
            return Err(LabError::invalid(format!(
                "grid size {grid_size} must be a power of two >= 2 Xi + 2 = {}",
                2 * cutoff + 2
            )));
        }
        Ok(Self {
            cutoff,
            grid_size,
            coeffs: vec![Complex64::default(); 2 * cutoff + 1],
            t: 0.0,
        })
    }

    /// A field on the default grid for this cutoff.
    pub fn with_cutoff(cutoff: usize) -> Result<Self> {
        Self::zeros(cutoff, (2 * cutoff + 2).next_power_of_two())
    }

    pub fn xi_max(&self) -> i64 {
        self.cutoff as i64
    }

    pub fn frequencies(&self) -> impl Iterator<Item = i64> {
        let c = self.cutoff as i64;
        -c..=c
    }

    fn index(&self, xi: i64) -> Option<usize> {
        (xi.unsigned_abs() as usize <= self.cutoff).then(|| (xi + self.cutoff as i64) as usize)
    }

    /// `u_hat(xi)`, zero outside the cutoff.
    pub fn coeff(&self, xi: i64) -> Complex64 {
        self.index(xi).map_or(Complex64::default(), |i| self.coeffs[i])
    }

    pub fn set(&mut self, xi: i64, value: Complex64) -> Result<()> {
        let i = self
            .index(xi)
            .ok_or_else(|| LabError::invalid(format!("|xi| = {} exceeds cutoff {}", xi.abs(), self.cutoff)))?;
        self.coeffs[i] = value;
        Ok(())
    }

    /// `sum |u_hat|^2`, the mass by Parseval.
    pub fn l2_squared(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// `|| <xi> u_hat ||_{l^2}`.
    pub fn weighted_l2(&self) -> f64 {
        self.frequencies()
            .zip(&self.coeffs)
            .map(|(xi, c)| (1.0 + (xi * xi) as f64) * c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// Default cutoff for a grid of `n` points: `floor(n / 3)`.
pub fn cutoff_for_grid(n: usize) -> usize {
    n / 3
}

/// Field supported on the cluster with the canonical toy amplitudes.
pub fn synthesize_field(
    quad: &ResonantQuad,
    k0: f64,
    phases: [f64; 4],
    cutoff: usize,
) -> Result<SpectralField> {
    synthesize_on_grid(quad, k0, phases, cutoff, (2 * cutoff + 2).next_power_of_two())
}

pub fn synthesize_on_grid(
    quad: &ResonantQuad,
    k0: f64,
    phases: [f64; 4],
    cutoff: usize,
    grid_size: usize,
) -> Result<SpectralField> {
    if (quad.max_abs_frequency() as usize) > cutoff {
        return Err(LabError::invalid(format!(
            "cutoff {cutoff} is smaller than the largest cluster frequency {}",
            quad.max_abs_frequency()
        )));
    }
    let amps = toy::canonical_amplitudes(k0, phases)?;
    let mut field = SpectralField::zeros(cutoff, grid_size)?;
    for (xi, a) in quad.frequencies().iter().zip(amps) {
        field.set(*xi, a)?;
    }
    Ok(field)
}

/// FFT plans and buffers for one cutoff and padded length.
pub struct Transform {
    cutoff: usize,
    len: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl Transform {
    pub fn new(cutoff: usize, len: usize) -> Result<Self> {
        if len < 6 * cutoff + 1 {
            return Err(LabError::invalid(format!(
                "padded length {len} aliases quintic products (needs >= {})",
                6 * cutoff + 1
            )));
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(len);
        let inv = planner.plan_fft_inverse(len);
        let scratch_len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Ok(Self {
            cutoff,
            len,
            fwd,
            inv,
            scratch: vec![Complex64::default(); scratch_len],
        })
    }

    pub fn for_field(field: &SpectralField, padding: usize) -> Result<Self> {
        Self::new(field.cutoff, padding * field.grid_size)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn slot(&self, xi: i64) -> usize {
        xi.rem_euclid(self.len as i64) as usize
    }

    /// Grid values of `sum w(xi) c(xi) e^{i xi x}`, or of the conjugate field
    /// when `conjugate` is set.
    fn synthesize<W>(&mut self, c: &[Complex64], conjugate: bool, weight: W, out: &mut [Complex64])
    where
        W: Fn(i64) -> Complex64,
    {
        out.fill(Complex64::default());
        let xi_max = self.cutoff as i64;
        for (i, &v) in c.iter().enumerate() {
            let xi = i as i64 - xi_max;
            if conjugate {
                // conj(c) e^{-i xi x}, then the weight acts on frequency -xi
                out[self.slot(-xi)] = weight(-xi) * v.conj();
            } else {
                out[self.slot(xi)] = weight(xi) * v;
            }
        }
        self.inv.process_with_scratch(out, &mut self.scratch);
    }

    pub fn to_grid(&mut self, c: &[Complex64], out: &mut [Complex64]) {
        self.synthesize(c, false, |_| Complex64::new(1.0, 0.0), out);
    }

    pub fn derivative_to_grid(&mut self, c: &[Complex64], out: &mut [Complex64]) {
        self.synthesize(c, false, |xi| Complex64::new(0.0, xi as f64), out);
    }

    /// `conj(u)_x`, built from `-i xi conj(u_hat(xi))` placed at `-xi`.
    pub fn conj_derivative_to_grid(&mut self, c: &[Complex64], out: &mut [Complex64]) {
        self.synthesize(c, true, |k| Complex64::new(0.0, k as f64), out);
    }

    /// Forward transform of grid values, truncated to `|xi| <= cutoff`.
    pub fn from_grid(&mut self, grid: &mut [Complex64], out: &mut [Complex64]) {
        self.fwd.process_with_scratch(grid, &mut self.scratch);
        let scale = 1.0 / self.len as f64;
        let xi_max = self.cutoff as i64;
        for (i, o) in out.iter_mut().enumerate() {
            *o = grid[self.slot(i as i64 - xi_max)] * scale;
        }
    }
}

struct Workspace {
    u: Vec<Complex64>,
    v: Vec<Complex64>,
}

impl Workspace {
    fn new(len: usize) -> Self {
        Self {
            u: vec![Complex64::default(); len],
            v: vec![Complex64::default(); len],
        }
    }
}

/// `N_hat(c)` for `N(u) = -i lambda u^2 conj(u)_x + mu |u|^4 u`.
fn nonlinearity(
    tr: &mut Transform,
    ws: &mut Workspace,
    c: &[Complex64],
    lambda: f64,
    mu: f64,
    out: &mut [Complex64],
) {
    tr.to_grid(c, &mut ws.u);
    tr.conj_derivative_to_grid(c, &mut ws.v);
    let mi_lambda = Complex64::new(0.0, -lambda);
    for (u, v) in ws.u.iter().zip(ws.v.iter_mut()) {
        let m = u.norm_sqr();
        *v = mi_lambda * u * u * *v + mu * m * m * u;
    }
    tr.from_grid(&mut ws.v, out);
}

/// Lawson RK4 stepper that owns its transform buffers.
pub struct Evolver {
    pub field: SpectralField,
    pub lambda: f64,
    pub mu: f64,
    pub dt: f64,
    pub steps_taken: usize,
    tr: Transform,
    ws: Workspace,
    half: Vec<Complex64>,
    full: Vec<Complex64>,
    k: [Vec<Complex64>; 4],
    stage: Vec<Complex64>,
}

impl Evolver {
    pub fn new(field: SpectralField, lambda: f64, mu: f64, dt: f64, padding: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(LabError::invalid(format!("time step must be positive, got {dt}")));
        }
        if padding < DEFAULT_PADDING {
            return Err(LabError::invalid(format!("padding factor {padding} < 3 aliases quintic terms")));
        }
        let tr = Transform::for_field(&field, padding)?;
        let ws = Workspace::new(tr.len());
        let phase = |tau: f64| -> Vec<Complex64> {
            field
                .frequencies()
                .map(|xi| Complex64::from_polar(1.0, -((xi * xi) as f64) * tau))
                .collect()
        };
        let (half, full) = (phase(0.5 * dt), phase(dt));
        let m = field.coeffs.len();
        let zeros = || vec![Complex64::default(); m];
        Ok(Self {
            field,
            lambda,
            mu,
            dt,
            steps_taken: 0,
            tr,
            ws,
            half,
            full,
            k: [zeros(), zeros(), zeros(), zeros()],
            stage: zeros(),
        })
    }

    // k = -i E^{-1} N_hat(E (a + h * k_prev)), with E = e^{-i xi^2 tau}.
    fn stage_rate(&mut self, which: usize, prev: Option<(usize, f64)>, phase: Option<&[Complex64]>) {
        let a = &self.field.coeffs;
        for i in 0..a.len() {
            let mut s = a[i];
            if let Some((p, h)) = prev {
                s += h * self.k[p][i];
            }
            if let Some(e) = phase {
                s *= e[i];
            }
            self.stage[i] = s;
        }
        let mut out = std::mem::take(&mut self.k[which]);
        nonlinearity(&mut self.tr, &mut self.ws, &self.stage, self.lambda, self.mu, &mut out);
        let mi = Complex64::new(0.0, -1.0);
        for i in 0..out.len() {
            let back = phase.map_or(Complex64::new(1.0, 0.0), |e| e[i].conj());
            out[i] = mi * back * out[i];
        }
        self.k[which] = out;
    }

    pub fn step(&mut self) -> Result<()> {
        let dt = self.dt;
        let half = std::mem::take(&mut self.half);
        let full = std::mem::take(&mut self.full);
        self.stage_rate(0, None, None);
        self.stage_rate(1, Some((0, 0.5 * dt)), Some(&half));
        self.stage_rate(2, Some((1, 0.5 * dt)), Some(&half));
        self.stage_rate(3, Some((2, dt)), Some(&full));
        let c = &mut self.field.coeffs;
        for i in 0..c.len() {
            let incr = self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i];
            c[i] = full[i] * (c[i] + dt / 6.0 * incr);
        }
        self.half = half;
        self.full = full;
        if !self.field.is_finite() {
            return Err(LabError::NonFinite {
                last_healthy_step: self.steps_taken,
                t: self.field.t,
            });
        }
        self.steps_taken += 1;
        self.field.t += dt;
        Ok(())
    }
}

/// Evolves `steps` steps and returns the field every `stride` steps, always
/// including the initial and final states.
pub fn evolve(
    field: &SpectralField,
    lambda: f64,
    mu: f64,
    dt: f64,
    steps: usize,
    stride: usize,
) -> Result<Vec<SpectralField>> {
    evolve_padded(field, lambda, mu, dt, steps, stride, DEFAULT_PADDING)
}

pub fn evolve_padded(
    field: &SpectralField,
    lambda: f64,
    mu: f64,
    dt: f64,
    steps: usize,
    stride: usize,
    padding: usize,
) -> Result<Vec<SpectralField>> {
    let stride = stride.max(1);
    let mut ev = Evolver::new(field.clone(), lambda, mu, dt, padding)?;
    let mut out = vec![field.clone()];
    for s in 1..=steps {
        ev.step()?;
        if s % stride == 0 || s == steps {
            out.push(ev.field.clone());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservedTriple {
    pub mass: f64,
    pub energy: f64,
    pub momentum: f64,
}

impl ConservedTriple {
    pub fn as_array(&self) -> [f64; 3] {
        [self.mass, self.energy, self.momentum]
    }
}

/// Grid samples of `u` and `u_x` on the padded grid.
pub fn physical_values(field: &SpectralField, padding: usize) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let mut tr = Transform::for_field(field, padding)?;
    let mut u = vec![Complex64::default(); tr.len()];
    let mut ux = vec![Complex64::default(); tr.len()];
    tr.to_grid(&field.coeffs, &mut u);
    tr.derivative_to_grid(&field.coeffs, &mut ux);
    Ok((u, ux))
}

/// Mass, energy and momentum as grid means (exact for the polynomial
/// densities on the padded grid).
pub fn conserved_triple(field: &SpectralField, lambda: f64, mu: f64) -> ConservedTriple {
    let (u, ux) = physical_values(field, DEFAULT_PADDING).expect("valid field");
    let n = u.len() as f64;
    let (mut m, mut e, mut p) = (0.0, 0.0, 0.0);
    for (u, ux) in u.iter().zip(&ux) {
        let r = u.norm_sqr();
        let im = (u.conj() * ux).im;
        m += r;
        e += 0.5 * ux.norm_sqr() + lambda / 4.0 * r * im + (lambda * lambda + 2.0 * mu) / 12.0 * r * r * r;
        p += -0.5 * im - lambda / 4.0 * r * r;
    }
    ConservedTriple {
        mass: m / n,
        energy: e / n,
        momentum: p / n,
    }
}

/// The same functionals evaluated with complex densities, whose imaginary
/// parts only vanish after averaging.
pub fn conserved_triple_complex(field: &SpectralField, lambda: f64, mu: f64) -> [Complex64; 3] {
    let (u, ux) = physical_values(field, DEFAULT_PADDING).expect("valid field");
    let n = u.len() as f64;
    let i = Complex64::i();
    let mut acc = [Complex64::default(); 3];
    for (u, ux) in u.iter().zip(&ux) {
        let r = u.conj() * u;
        let cur = u.conj() * ux / i;
        acc[0] += r;
        acc[1] += 0.5 * ux.conj() * ux + lambda / 4.0 * r * cur + (lambda * lambda + 2.0 * mu) / 12.0 * r * r * r;
        acc[2] += -0.5 * cur - lambda / 4.0 * r * r;
    }
    acc.map(|a| a / n)
}

/// `max_x |u|^2` on the padded grid.
pub fn max_intensity(field: &SpectralField) -> f64 {
    let (u, _) = physical_values(field, DEFAULT_PADDING).expect("valid field");
    u.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max)
}

/// `0.5 / (|lambda| max|u|^2 Xi + |mu| max|u|^4 + 1)`.
pub fn stable_dt(field: &SpectralField, lambda: f64, mu: f64) -> f64 {
    let m = max_intensity(field);
    0.5 / (lambda.abs() * m * field.cutoff as f64 + mu.abs() * m * m + 1.0)
}

/// `a_xi(t) = u_hat(xi, t) e^{+i xi^2 t}`, constant under free evolution.
pub fn interaction_coefficients(field: &SpectralField) -> Vec<Complex64> {
    field
        .frequencies()
        .zip(&field.coeffs)
        .map(|(xi, c)| c * Complex64::from_polar(1.0, (xi * xi) as f64 * field.t))
        .collect()
}

/// `mean |u|^4`, equal to the quartic convolution sum of the coefficients.
pub fn quartic_mean(field: &SpectralField) -> f64 {
    let (u, _) = physical_values(field, DEFAULT_PADDING).expect("valid field");
    u.iter().map(|v| v.norm_sqr().powi(2)).sum::<f64>() / u.len() as f64
}

/// `| sum xi |a_xi|^2 + lambda/2 sum a1 conj(a2) a3 conj(a4) e^{-2it(xi1-xi2)(xi1-xi4)} + 2 P0 |`.
///
/// The phased quartic sum equals `mean |u|^4`, which is how it is evaluated.
pub fn momentum_fourier_identity(field: &SpectralField, lambda: f64, p0: f64) -> f64 {
    let first: f64 = field
        .frequencies()
        .zip(&field.coeffs)
        .map(|(xi, c)| xi as f64 * c.norm_sqr())
        .sum();
    (first + 0.5 * lambda * quartic_mean(field) + 2.0 * p0).abs()
}

/// `max_t || <xi> u_hat(t) ||_{l^2} / M*`.
pub fn apriori_bound(trajectory: &[SpectralField], m_star: i64) -> f64 {
    trajectory
        .iter()
        .map(|f| f.weighted_l2() / m_star as f64)
        .fold(0.0, f64::max)
}

/// Sidecar of a binary checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub t: f64,
    #[serde(rename = "Xi")]
    pub xi_max: usize,
    pub n: usize,
    pub lambda: f64,
    pub mu: f64,
    pub quad: Option<ResonantQuad>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes little-endian `(re, im)` pairs for `xi = -Xi..=Xi` to `path` and
/// the metadata to `path.json`.
pub fn write_checkpoint(
    field: &SpectralField,
    lambda: f64,
    mu: f64,
    quad: Option<&ResonantQuad>,
    path: &Path,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| LabError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for c in &field.coeffs {
        w.write_all(&c.re.to_le_bytes())
            .and_then(|_| w.write_all(&c.im.to_le_bytes()))
            .map_err(|e| LabError::io(path, e))?;
    }
    w.flush().map_err(|e| LabError::io(path, e))?;
    let meta = CheckpointMeta {
        t: field.t,
        xi_max: field.cutoff,
        n: field.grid_size,
        lambda,
        mu,
        quad: quad.copied(),
    };
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(&meta).map_err(|e| LabError::Json {
        path: side.display().to_string(),
        source: e,
    })?;
    fs::write(&side, text).map_err(|e| LabError::io(&side, e))
}

pub fn read_checkpoint(path: &Path) -> Result<(SpectralField, CheckpointMeta)> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| LabError::io(&side, e))?;
    let meta: CheckpointMeta = serde_json::from_str(&text).map_err(|e| LabError::Json {
        path: side.display().to_string(),
        source: e,
    })?;
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| LabError::io(path, e))?;
    let mut field = SpectralField::zeros(meta.xi_max, meta.n)?;
    if bytes.len() != 16 * field.coeffs.len() {
        return Err(LabError::invalid(format!(
            "{} holds {} bytes, expected {} for Xi = {}",
            path.display(),
            bytes.len(),
            16 * field.coeffs.len(),
            meta.xi_max
        )));
    }
    for (c, chunk) in field.coeffs.iter_mut().zip(bytes.chunks_exact(16)) {
        let re = f64::from_le_bytes(chunk[..8].try_into().expect("8 bytes"));
        let im = f64::from_le_bytes(chunk[8..].try_into().expect("8 bytes"));
        *c = Complex64::new(re, im);
    }
    field.t = meta.t;
    Ok((field, meta))
}
