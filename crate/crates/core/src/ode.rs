//! Adaptive Dormand–Prince 5(4) integrator with FSAL derivative reuse.
//!
//! The stepper never steps past a caller-supplied limit, so record times are
//! hit exactly. The derivative at the current point is always available,
//! which the solvers use for steady-state detection.

use crate::error::{Error, Result};

pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Smallest admissible step before the integration is declared failed.
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rtol: 1e-8,
            atol: 1e-10,
            h_min: 1e-12,
            h_max: 5.0,
            max_steps: 5_000_000,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        for (n, v) in [
            ("rtol", self.rtol),
            ("atol", self.atol),
            ("h_min", self.h_min),
            ("h_max", self.h_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("tolerance {n} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

// Dormand–Prince coefficients
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
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

pub struct Stepper<'a, S: OdeSystem + ?Sized> {
    sys: &'a S,
    tol: Tolerances,
    t: f64,
    y: Vec<f64>,
    dy: Vec<f64>,
    h: f64,
    k: [Vec<f64>; 6],
    ytmp: Vec<f64>,
    ynew: Vec<f64>,
    err_prev: f64,
    pub accepted: usize,
    pub rejected: usize,
}

impl<'a, S: OdeSystem + ?Sized> Stepper<'a, S> {
    pub fn new(sys: &'a S, t0: f64, y0: &[f64], tol: Tolerances) -> Self {
        let n = sys.dim();
        assert_eq!(y0.len(), n, "initial state has wrong dimension");
        let mut dy = vec![0.0; n];
        sys.rhs(t0, y0, &mut dy);
        let mut s = Stepper {
            sys,
            tol,
            t: t0,
            y: y0.to_vec(),
            dy,
            h: 0.0,
            k: std::array::from_fn(|_| vec![0.0; n]),
            ytmp: vec![0.0; n],
            ynew: vec![0.0; n],
            err_prev: 1e-4,
            accepted: 0,
            rejected: 0,
        };
        s.h = s.initial_step();
        s
    }

    fn initial_step(&mut self) -> f64 {
        let n = self.y.len();
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..n {
            let sc = self.tol.atol + self.tol.rtol * self.y[i].abs();
            d0 += (self.y[i] / sc).powi(2);
            d1 += (self.dy[i] / sc).powi(2);
        }
        d0 = (d0 / n as f64).sqrt();
        d1 = (d1 / n as f64).sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        for i in 0..n {
            self.ytmp[i] = self.y[i] + h0 * self.dy[i];
        }
        let (ytmp, k0) = (&self.ytmp, &mut self.k[0]);
        self.sys.rhs(self.t + h0, ytmp, k0);
        let mut d2 = 0.0;
        for i in 0..n {
            let sc = self.tol.atol + self.tol.rtol * self.y[i].abs();
            d2 += ((self.k[0][i] - self.dy[i]) / sc).powi(2);
        }
        d2 = (d2 / n as f64).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / 5.0)
        };
        (100.0 * h0).min(h1).min(self.tol.h_max)
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> &[f64] {
        &self.y
    }

    /// Derivative at the current point.
    pub fn derivative(&self) -> &[f64] {
        &self.dy
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    /// Replace the current state (e.g. after an external correction).
    pub fn reset_state(&mut self, y: &[f64]) {
        self.y.copy_from_slice(y);
        self.sys.rhs(self.t, &self.y, &mut self.dy);
    }

    /// Take one accepted step without passing `t_limit`.
    pub fn step(&mut self, t_limit: f64) -> Result<()> {
        let n = self.y.len();
        loop {
            if self.accepted + self.rejected >= self.tol.max_steps {
                return Err(Error::Integration {
                    time: self.t,
                    reason: format!("step budget of {} exhausted", self.tol.max_steps),
                });
            }
            let remaining = t_limit - self.t;
            let mut h = self.h.min(self.tol.h_max);
            let clipped = h >= remaining;
            if clipped {
                h = remaining;
            }
            if h < self.tol.h_min && !clipped {
                return Err(Error::Integration {
                    time: self.t,
                    reason: format!("step size underflow (h = {h:e})"),
                });
            }
            let t = self.t;
            let y = &self.y;
            let dy = &self.dy;
            let [k2, k3, k4, k5, k6, k7] = &mut self.k;
            let ytmp = &mut self.ytmp;
            let ynew = &mut self.ynew;

            for i in 0..n {
                ytmp[i] = y[i] + h * A21 * dy[i];
            }
            self.sys.rhs(t + C2 * h, ytmp, k2);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A31 * dy[i] + A32 * k2[i]);
            }
            self.sys.rhs(t + C3 * h, ytmp, k3);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A41 * dy[i] + A42 * k2[i] + A43 * k3[i]);
            }
            self.sys.rhs(t + C4 * h, ytmp, k4);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A51 * dy[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            self.sys.rhs(t + C5 * h, ytmp, k5);
            for i in 0..n {
                ytmp[i] = y[i]
                    + h * (A61 * dy[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            self.sys.rhs(t + h, ytmp, k6);
            for i in 0..n {
                ynew[i] =
                    y[i] + h * (B1 * dy[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
            }
            self.sys.rhs(t + h, ynew, k7);

            let mut err = 0.0;
            for i in 0..n {
                let e = h
                    * (E1 * dy[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]
                        + E7 * k7[i]);
                let sc = self.tol.atol + self.tol.rtol * y[i].abs().max(ynew[i].abs());
                err += (e / sc).powi(2);
            }
            err = (err / n as f64).sqrt();

            if !err.is_finite() {
                self.rejected += 1;
                self.h = h * 0.1;
                continue;
            }
            if err <= 1.0 {
                // PI controller
                let fac = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.7 / 5.0) * self.err_prev.powf(0.4 / 5.0)).clamp(0.2, 5.0)
                };
                self.err_prev = err.max(1e-4);
                self.t = if clipped { t_limit } else { t + h };
                std::mem::swap(&mut self.y, &mut self.ynew);
                std::mem::swap(&mut self.dy, &mut self.k[5]);
                self.accepted += 1;
                if !clipped || fac < 1.0 {
                    self.h = h * fac;
                }
                return Ok(());
            }
            self.rejected += 1;
            self.h = h * (0.9 * err.powf(-1.0 / 5.0)).clamp(0.1, 1.0);
        }
    }

    /// Advance to `t_target`, calling `observer` after every accepted step.
    /// Returns early (with `Ok(false)`) if the observer returns `false`.
    pub fn advance_to<F>(&mut self, t_target: f64, mut observer: F) -> Result<bool>
    where
        F: FnMut(f64, &[f64], &[f64]) -> bool,
    {
        while self.t < t_target {
            self.step(t_target)?;
            if !observer(self.t, &self.y, &self.dy) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Outcome of [`rk4_relax`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Relaxation {
    pub time: f64,
    pub residual: f64,
    pub converged: bool,
    pub steps: usize,
    /// Step size in use when the loop ended.
    pub h: f64,
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Fixed-step classical RK4 iteration towards a fixed point of `sys`.
///
/// Fixed points of the flow are exact fixed points of the RK4 map, so once
/// the step sits well inside the stability region the iteration contracts
/// to them without the error-controller noise of an adaptive scheme. The
/// step is halved (and the best state restored) whenever the residual grows
/// by more than a factor of 100 over the best seen so far.
pub fn rk4_relax<S, F>(
    sys: &S,
    t0: f64,
    y: &mut [f64],
    mut h: f64,
    steady_tol: f64,
    t_end: f64,
    mut observer: F,
) -> Result<Relaxation>
where
    S: OdeSystem + ?Sized,
    F: FnMut(f64, &[f64], &[f64]),
{
    let n = sys.dim();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut best = y.to_vec();
    let mut t = t0;
    let mut best_t = t0;
    let mut steps = 0usize;
    sys.rhs(t, y, &mut k1);
    let mut residual = max_norm(&k1);
    let mut best_res = residual;
    while residual >= steady_tol && t < t_end {
        if h < 1e-12 {
            return Err(Error::Integration {
                time: t,
                reason: "relaxation step collapsed".into(),
            });
        }
        let hh = h.min(t_end - t);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * hh * k1[i];
        }
        sys.rhs(t + 0.5 * hh, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * hh * k2[i];
        }
        sys.rhs(t + 0.5 * hh, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + hh * k3[i];
        }
        sys.rhs(t + hh, &tmp, &mut k4);
        for i in 0..n {
            y[i] += hh / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t += hh;
        steps += 1;
        sys.rhs(t, y, &mut k1);
        residual = max_norm(&k1);
        if !residual.is_finite() || residual > 100.0 * best_res {
            y.copy_from_slice(&best);
            t = best_t;
            h *= 0.5;
            sys.rhs(t, y, &mut k1);
            residual = best_res;
            continue;
        }
        if residual < best_res {
            best_res = residual;
            best.copy_from_slice(y);
            best_t = t;
        }
        observer(t, y, &k1);
    }
    Ok(Relaxation {
        time: t,
        residual,
        converged: residual < steady_tol,
        steps,
        h,
    })
}

/// Simple closure-backed system, handy for tests and small problems.
pub struct FnSystem<F: Fn(f64, &[f64], &mut [f64])> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(f64, &[f64], &mut [f64])> OdeSystem for FnSystem<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        (self.f)(t, y, dy)
    }
}
