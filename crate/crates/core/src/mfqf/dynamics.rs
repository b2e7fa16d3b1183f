use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::field::{outer, CorrelatorField, Stencil, Sym, XZ, YZ};
use super::terms::{f_sym, g_sym, local, pi_sym};
use super::MfqfState;
use crate::error::{Error, Result};
use crate::meanfield::Trajectory;
use crate::model::{BlochVector, ModelParams};
use crate::ode::{rk4_relax, OdeSystem, Stepper, Tolerances};

/// Classes per parallel work unit in the right-hand side.
const CHUNK: usize = 512;

/// The closure as an ODE over `[mu_x, mu_y, mu_z, eta(class 0), ...]`.
pub struct MfqfSystem {
    p: ModelParams,
    stencil: Arc<Stencil>,
}

impl MfqfSystem {
    pub fn new(p: ModelParams, stencil: Arc<Stencil>) -> Result<Self> {
        p.validate()?;
        Ok(MfqfSystem { p, stencil })
    }

    pub fn params(&self) -> &ModelParams {
        &self.p
    }

    pub fn stencil(&self) -> &Arc<Stencil> {
        &self.stencil
    }

    fn mu_rate(&self, mu: BlochVector, eta1: &Sym) -> BlochVector {
        let p = &self.p;
        let g = p.mf_coupling() * self.stencil.connectivity();
        BlochVector::new(
            -g * (mu.y * mu.z + eta1[YZ]) - p.delta * mu.y - 0.5 * p.gamma * mu.x,
            g * (mu.x * mu.z + eta1[XZ]) - 2.0 * p.omega * mu.z + p.delta * mu.x
                - 0.5 * p.gamma * mu.y,
            2.0 * p.omega * mu.y - p.gamma * (1.0 + mu.z),
        )
    }

    fn eval(&self, mu: BlochVector, eta: &[Sym], dmu_out: &mut [f64], deta: &mut [Sym]) {
        let p = &self.p;
        let st = &*self.stencil;
        let dmu = self.mu_rate(mu, &eta[st.unit_class()]);
        dmu_out.copy_from_slice(&dmu.to_array());
        let m = outer(mu);
        // d(mu_a mu_b)/dt
        let dm: Sym = [
            2.0 * mu.x * dmu.x,
            2.0 * mu.y * dmu.y,
            2.0 * mu.z * dmu.z,
            dmu.x * mu.y + mu.x * dmu.y,
            dmu.x * mu.z + mu.x * dmu.z,
            dmu.y * mu.z + mu.y * dmu.z,
        ];
        let j = p.coupling;
        let work = |k: usize, out: &mut Sym| {
            let l = local(st, eta, &m, k);
            let pi = pi_sym(p.delta, p.omega, &l.t);
            let f = f_sym(p.kind, j, mu, &l);
            let g = g_sym(mu, &l.t, p.gamma);
            for i in 0..6 {
                out[i] = pi[i] + f[i] + g[i] - dm[i];
            }
        };
        if deta.len() >= 2 * CHUNK && rayon::current_num_threads() > 1 {
            deta.par_chunks_mut(CHUNK)
                .enumerate()
                .for_each(|(c, chunk)| {
                    for (i, out) in chunk.iter_mut().enumerate() {
                        work(c * CHUNK + i, out);
                    }
                });
        } else {
            for (k, out) in deta.iter_mut().enumerate() {
                work(k, out);
            }
        }
    }
}

impl OdeSystem for MfqfSystem {
    fn dim(&self) -> usize {
        3 + 6 * self.stencil.len()
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let mu = BlochVector::new(y[0], y[1], y[2]);
        let eta: &[Sym] = bytemuck::cast_slice(&y[3..]);
        let (dmu, deta) = dy.split_at_mut(3);
        self.eval(mu, eta, dmu, bytemuck::cast_slice_mut(deta));
    }
}

/// Time derivative of an [`MfqfState`].
#[derive(Clone, Debug, PartialEq)]
pub struct MfqfRate {
    pub mu: BlochVector,
    pub eta: Vec<Sym>,
}

impl MfqfRate {
    pub fn max_abs_eta(&self) -> f64 {
        self.eta
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.eta
            .iter()
            .flat_map(|s| s.iter())
            .chain(self.mu.to_array().iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

pub fn mfqf_rhs(state: &MfqfState, p: &ModelParams) -> Result<MfqfRate> {
    let sys = MfqfSystem::new(*p, state.field.stencil().clone())?;
    let mut dmu = [0.0; 3];
    let mut deta = vec![[0.0; 6]; state.field.len()];
    sys.eval(state.mu, state.field.values(), &mut dmu, &mut deta);
    Ok(MfqfRate {
        mu: BlochVector::from_array(dmu),
        eta: deta,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MfqfOptions {
    pub tol: Tolerances,
    /// Steady state is declared once `|d state/dt|_inf` drops below this.
    pub steady_tol: f64,
    /// Largest tolerated excess of `|theta_ab(R)|` or `|mu|^2` over 1.
    pub physicality_tol: f64,
    /// Residual below which the adaptive integrator hands over to a
    /// fixed-step contraction onto the fixed point; 0 disables it.
    pub polish_below: f64,
}

impl Default for MfqfOptions {
    fn default() -> Self {
        MfqfOptions {
            tol: Tolerances {
                rtol: 1e-8,
                atol: 1e-10,
                ..Tolerances::default()
            },
            steady_tol: 1e-10,
            physicality_tol: 1e-6,
            polish_below: 1e-7,
        }
    }
}

impl MfqfOptions {
    pub fn validate(&self) -> Result<()> {
        self.tol.validate()?;
        for (name, v) in [
            ("steady_tol", self.steady_tol),
            ("physicality_tol", self.physicality_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.polish_below >= 0.0) {
            return Err(Error::Config("polish_below must be non-negative".into()));
        }
        Ok(())
    }
}

/// Magnetization history with its exact time derivative.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RelaxationTrace {
    pub times: Vec<f64>,
    pub mu: Vec<BlochVector>,
    pub dmu: Vec<BlochVector>,
}

impl RelaxationTrace {
    pub fn push(&mut self, t: f64, mu: BlochVector, dmu: BlochVector) {
        self.times.push(t);
        self.mu.push(mu);
        self.dmu.push(dmu);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn to_trajectory(&self) -> Trajectory {
        Trajectory {
            times: self.times.clone(),
            states: self.mu.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MfqfRun {
    /// States at the requested record times reached before termination.
    pub snapshots: Vec<MfqfState>,
    pub trace: RelaxationTrace,
    pub final_state: MfqfState,
    /// `|d state/dt|_inf` at the final state.
    pub residual: f64,
    pub steady: bool,
}

/// Aborted run with the state at which it stopped.
#[derive(Debug)]
pub struct MfqfFailure {
    pub error: Error,
    pub snapshot: MfqfState,
    pub trace: RelaxationTrace,
}

impl std::fmt::Display for MfqfFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (stopped at t = {})", self.error, self.snapshot.time)
    }
}

impl std::error::Error for MfqfFailure {}

impl From<MfqfFailure> for Error {
    fn from(f: MfqfFailure) -> Self {
        f.error
    }
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn state_from_flat(stencil: &Arc<Stencil>, y: &[f64], t: f64) -> MfqfState {
    let eta: &[Sym] = bytemuck::cast_slice(&y[3..]);
    MfqfState {
        mu: BlochVector::new(y[0], y[1], y[2]),
        field: CorrelatorField::from_values(stencil.clone(), eta.to_vec())
            .expect("flat state matches stencil"),
        time: t,
    }
}

fn physicality_excess(y: &[f64]) -> f64 {
    let mu = BlochVector::new(y[0], y[1], y[2]);
    let m = outer(mu);
    let eta: &[Sym] = bytemuck::cast_slice(&y[3..]);
    let theta = eta
        .iter()
        .flat_map(|s| s.iter().zip(m.iter()).map(|(e, mm)| (e + mm).abs()))
        .fold(0.0f64, f64::max);
    (theta - 1.0).max(mu.norm_sqr() - 1.0)
}

/// Integrate the closure from `state0` for a time `t_final`, stopping early
/// once the steady-state tolerance is met. `record_times` are absolute.
pub fn mfqf_integrate(
    state0: &MfqfState,
    p: &ModelParams,
    t_final: f64,
    opts: &MfqfOptions,
    record_times: &[f64],
) -> std::result::Result<MfqfRun, MfqfFailure> {
    let stencil = state0.field.stencil().clone();
    let fail = |error: Error, y: &[f64], t: f64, trace: RelaxationTrace| MfqfFailure {
        error,
        snapshot: state_from_flat(&stencil, y, t),
        trace,
    };
    let y0 = state0.to_flat();
    let t0 = state0.time;
    let mut trace = RelaxationTrace::default();
    if let Err(e) = opts.validate().and_then(|_| p.validate()) {
        return Err(fail(e, &y0, t0, trace));
    }
    if !(t_final > 0.0) {
        return Err(fail(
            Error::InvalidParams(format!("t_final must be positive, got {t_final}")),
            &y0,
            t0,
            trace,
        ));
    }
    let sys = MfqfSystem {
        p: *p,
        stencil: stencil.clone(),
    };
    let t_end = t0 + t_final;
    let mut stepper = Stepper::new(&sys, t0, &y0, opts.tol);
    {
        let d = stepper.derivative();
        trace.push(
            t0,
            state0.mu,
            BlochVector::new(d[0], d[1], d[2]),
        );
    }
    let mut residual = max_norm(stepper.derivative());
    let mut snapshots = Vec::new();
    let mut records: Vec<f64> = record_times
        .iter()
        .copied()
        .filter(|&t| t > t0 && t <= t_end)
        .collect();
    records.sort_by(f64::total_cmp);
    records.dedup();
    let last_record = records.last().copied().unwrap_or(t0);
    let mut steady = residual < opts.steady_tol;
    let mut handover = false;
    let mut violation = None;
    let mut targets = records.clone();
    targets.push(t_end);
    for &target in &targets {
        if steady || handover {
            break;
        }
        let res = stepper.advance_to(target, |t, y, dy| {
            let mu = BlochVector::new(y[0], y[1], y[2]);
            trace.push(t, mu, BlochVector::new(dy[0], dy[1], dy[2]));
            let excess = physicality_excess(y);
            if excess > opts.physicality_tol {
                violation = Some((t, excess));
                return false;
            }
            residual = max_norm(dy);
            if residual < opts.steady_tol {
                steady = true;
                return false;
            }
            if opts.polish_below > 0.0 && residual < opts.polish_below && t >= last_record {
                handover = true;
                return false;
            }
            true
        });
        if let Err(e) = res {
            let (t, y) = (stepper.time(), stepper.state().to_vec());
            return Err(fail(e, &y, t, trace));
        }
        if let Some((t, excess)) = violation {
            let y = stepper.state().to_vec();
            return Err(fail(
                Error::Integration {
                    time: t,
                    reason: format!("physicality violated by {excess:e}"),
                },
                &y,
                t,
                trace,
            ));
        }
        if !steady && !handover && records.contains(&target) {
            snapshots.push(state_from_flat(&stencil, stepper.state(), stepper.time()));
        }
    }
    let mut t = stepper.time();
    let mut y = stepper.state().to_vec();
    if handover && !steady {
        let h = (0.5 * stepper.step_size()).min(opts.tol.h_max);
        let mut bad = None;
        let relax = rk4_relax(&sys, t, &mut y, h, opts.steady_tol, t_end, |t, y, dy| {
            trace.push(
                t,
                BlochVector::new(y[0], y[1], y[2]),
                BlochVector::new(dy[0], dy[1], dy[2]),
            );
            if bad.is_none() {
                let excess = physicality_excess(y);
                if excess > opts.physicality_tol {
                    bad = Some((t, excess));
                }
            }
        });
        match relax {
            Ok(r) => {
                t = r.time;
                residual = r.residual;
                steady = r.converged;
            }
            Err(e) => return Err(fail(e, &y, t, trace)),
        }
        if let Some((tb, excess)) = bad {
            return Err(fail(
                Error::Integration {
                    time: tb,
                    reason: format!("physicality violated by {excess:e}"),
                },
                &y,
                t,
                trace,
            ));
        }
    }
    Ok(MfqfRun {
        snapshots,
        trace,
        final_state: state_from_flat(&stencil, &y, t),
        residual,
        steady,
    })
}
