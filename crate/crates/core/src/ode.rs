//! Adaptive Dormand–Prince 5(4) integration with dense output.
//!
//! The stepper advances fixed-size real state vectors. Every accepted step is
//! exposed as a [`DenseStep`] carrying the fourth-order continuous extension,
//! which the period finder uses for bisection-refined event location.

use std::ops::ControlFlow;

use crate::error::{LabError, Result};

/// A first-order system `y' = f(t, y)` on `R^N`.
pub trait OdeSystem<const N: usize> {
    fn rhs(&self, t: f64, y: &[f64; N], dydt: &mut [f64; N]);
}

// Butcher tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// Error coefficients (5th minus embedded 4th order weights).
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Continuous extension.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Integrator settings. `rtol` and `atol` bound the local error per step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step size (0 means unbounded).
    pub h_max: f64,
    pub max_steps: usize,
}

impl Dopri5 {
    /// Equal absolute and relative tolerance.
    pub fn with_tol(tol: f64) -> Self {
        Dopri5 {
            rtol: tol,
            atol: tol,
            h_max: 0.0,
            max_steps: 50_000_000,
        }
    }

    pub fn h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }

    pub fn start<'s, S, const N: usize>(&self, sys: &'s S, t0: f64, y0: [f64; N]) -> Stepper<'s, S, N>
    where
        S: OdeSystem<N>,
    {
        let mut k1 = [0.0; N];
        sys.rhs(t0, &y0, &mut k1);
        Stepper {
            sys,
            cfg: *self,
            t: t0,
            y: y0,
            k1,
            h: 0.0,
            steps: 0,
            rejected: 0,
            evals: 1,
        }
    }

    /// Integrates from `t0` and returns the state at each of `times`
    /// (non-decreasing, all `>= t0`). The stepper lands exactly on every
    /// requested time.
    pub fn solve_at<S, const N: usize>(
        &self,
        sys: &S,
        t0: f64,
        y0: [f64; N],
        times: &[f64],
    ) -> Result<Vec<[f64; N]>>
    where
        S: OdeSystem<N>,
    {
        let mut stepper = self.start(sys, t0, y0);
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            stepper.advance_to(t, |_| ControlFlow::Continue(()))?;
            out.push(stepper.y);
        }
        Ok(out)
    }
}

/// One accepted step together with its continuous extension.
#[derive(Debug, Clone, Copy)]
pub struct DenseStep<const N: usize> {
    pub t0: f64,
    pub t1: f64,
    pub y0: [f64; N],
    pub y1: [f64; N],
    rcont: [[f64; N]; 5],
}

impl<const N: usize> DenseStep<N> {
    /// Fourth-order interpolant on `[t0, t1]`.
    pub fn eval(&self, t: f64) -> [f64; N] {
        let h = self.t1 - self.t0;
        let theta = if h == 0.0 { 0.0 } else { (t - self.t0) / h };
        let theta1 = 1.0 - theta;
        let r = &self.rcont;
        let mut y = [0.0; N];
        for i in 0..N {
            y[i] = r[0][i]
                + theta * (r[1][i] + theta1 * (r[2][i] + theta * (r[3][i] + theta1 * r[4][i])));
        }
        y
    }

    /// Locates a sign change of `g` inside the step by bisection on the
    /// interpolant. Returns `None` when `g` has the same sign at both ends.
    pub fn locate<G>(&self, g: G) -> Option<(f64, [f64; N])>
    where
        G: Fn(f64, &[f64; N]) -> f64,
    {
        let (mut a, mut b) = (self.t0, self.t1);
        let mut ga = g(a, &self.y0);
        let gb = g(b, &self.y1);
        if ga == 0.0 {
            return Some((a, self.y0));
        }
        if ga.signum() == gb.signum() {
            return None;
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            let ym = self.eval(m);
            let gm = g(m, &ym);
            if gm == 0.0 {
                return Some((m, ym));
            }
            if gm.signum() == ga.signum() {
                a = m;
                ga = gm;
            } else {
                b = m;
            }
        }
        let t = 0.5 * (a + b);
        Some((t, self.eval(t)))
    }
}

/// Live integration state.
pub struct Stepper<'s, S, const N: usize> {
    sys: &'s S,
    cfg: Dopri5,
    t: f64,
    y: [f64; N],
    k1: [f64; N],
    h: f64,
    pub steps: usize,
    pub rejected: usize,
    pub evals: usize,
}

impl<'s, S, const N: usize> Stepper<'s, S, N>
where
    S: OdeSystem<N>,
{
    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64; N] {
        &self.y
    }

    fn error_scale(&self, y0: f64, y1: f64) -> f64 {
        self.cfg.atol + self.cfg.rtol * y0.abs().max(y1.abs())
    }

    fn initial_step(&mut self, direction: f64) -> f64 {
        // Hairer, Nørsett & Wanner's starting-step heuristic.
        let (mut d0, mut d1) = (0.0, 0.0);
        for i in 0..N {
            let sk = self.error_scale(self.y[i], self.y[i]);
            d0 += (self.y[i] / sk).powi(2);
            d1 += (self.k1[i] / sk).powi(2);
        }
        let (d0, d1) = ((d0 / N as f64).sqrt(), (d1 / N as f64).sqrt());
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let mut y1 = [0.0; N];
        for i in 0..N {
            y1[i] = self.y[i] + direction * h0 * self.k1[i];
        }
        let mut f1 = [0.0; N];
        self.sys.rhs(self.t + direction * h0, &y1, &mut f1);
        self.evals += 1;
        let mut d2 = 0.0;
        for i in 0..N {
            let sk = self.error_scale(self.y[i], self.y[i]);
            d2 += ((f1[i] - self.k1[i]) / sk).powi(2);
        }
        let d2 = (d2 / N as f64).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / 5.0)
        };
        let mut h = (100.0 * h0).min(h1);
        if self.cfg.h_max > 0.0 {
            h = h.min(self.cfg.h_max);
        }
        h
    }

    /// Advances to exactly `t_target`, invoking `on_step` after every accepted
    /// step. A `Break` from the callback stops the integration at the end of
    /// that step, and the return value is then `true`.
    pub fn advance_to<F>(&mut self, t_target: f64, mut on_step: F) -> Result<bool>
    where
        F: FnMut(&DenseStep<N>) -> ControlFlow<()>,
    {
        if t_target == self.t {
            return Ok(false);
        }
        let direction = (t_target - self.t).signum();
        if self.h == 0.0 {
            self.h = self.initial_step(direction);
        }
        let sys = self.sys;
        let mut k2 = [0.0; N];
        let mut k3 = [0.0; N];
        let mut k4 = [0.0; N];
        let mut k5 = [0.0; N];
        let mut k6 = [0.0; N];
        let mut k7 = [0.0; N];
        let mut ys = [0.0; N];
        let mut y1 = [0.0; N];
        loop {
            if self.steps + self.rejected >= self.cfg.max_steps {
                return Err(LabError::TooManySteps {
                    t: self.t,
                    max_steps: self.cfg.max_steps,
                });
            }
            let remaining = (t_target - self.t) * direction;
            let mut h = self.h.abs();
            if self.cfg.h_max > 0.0 {
                h = h.min(self.cfg.h_max);
            }
            let last = h >= remaining;
            if last {
                h = remaining;
            }
            if h < 1e-14 * self.t.abs().max(1.0) && !last {
                return Err(LabError::StepUnderflow {
                    t: self.t,
                    h,
                    state: self.y.to_vec(),
                });
            }
            let hs = direction * h;
            let (t, y, k1) = (self.t, &self.y, &self.k1);

            for i in 0..N {
                ys[i] = y[i] + hs * A21 * k1[i];
            }
            sys.rhs(t + C2 * hs, &ys, &mut k2);
            for i in 0..N {
                ys[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i]);
            }
            sys.rhs(t + C3 * hs, &ys, &mut k3);
            for i in 0..N {
                ys[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            sys.rhs(t + C4 * hs, &ys, &mut k4);
            for i in 0..N {
                ys[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            sys.rhs(t + C5 * hs, &ys, &mut k5);
            for i in 0..N {
                ys[i] = y[i]
                    + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            let t_new = if last { t_target } else { t + hs };
            sys.rhs(t + hs, &ys, &mut k6);
            for i in 0..N {
                y1[i] = y[i]
                    + hs * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            sys.rhs(t_new, &y1, &mut k7);
            self.evals += 6;

            let mut err = 0.0;
            for i in 0..N {
                let e = hs
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sk = self.error_scale(y[i], y1[i]);
                err += (e / sk).powi(2);
            }
            let err = (err / N as f64).sqrt();
            if !err.is_finite() {
                self.rejected += 1;
                self.h = 0.2 * h;
                continue;
            }

            if err <= 1.0 {
                let mut rcont = [[0.0; N]; 5];
                for i in 0..N {
                    let dy = y1[i] - y[i];
                    let bspl = hs * k1[i] - dy;
                    rcont[0][i] = y[i];
                    rcont[1][i] = dy;
                    rcont[2][i] = bspl;
                    rcont[3][i] = dy - hs * k7[i] - bspl;
                    rcont[4][i] = hs
                        * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i]
                            + D7 * k7[i]);
                }
                let dense = DenseStep {
                    t0: t,
                    t1: t_new,
                    y0: *y,
                    y1,
                    rcont,
                };
                self.t = t_new;
                self.y = y1;
                self.k1 = k7;
                self.steps += 1;
                let fac = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 10.0);
                // A step shortened to hit the target says nothing about the next step.
                if !last {
                    self.h = h * fac;
                }
                if let ControlFlow::Break(()) = on_step(&dense) {
                    return Ok(true);
                }
                if last {
                    return Ok(false);
                }
            } else {
                self.rejected += 1;
                let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                self.h = h * fac;
            }
        }
    }
}
