//! Time evolution of density matrices under the full-space Liouvillian.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::liouvillian::Liouvillian;
use super::DensityMatrix;
use crate::error::Error;
use crate::ode::{OdeSystem, Stepper, Tolerances};

struct Flow<'a>(&'a Liouvillian);

impl OdeSystem for Flow<'_> {
    fn dim(&self) -> usize {
        2 * self.0.superdim()
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let rho: &[Complex64] = bytemuck::cast_slice(y);
        let out: &mut [Complex64] = bytemuck::cast_slice_mut(dy);
        self.0.apply(rho, out);
    }
}

#[derive(Clone, Debug)]
pub struct RhoTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

#[derive(Debug)]
pub struct RhoTrajectoryFailure {
    pub error: Error,
    pub partial: RhoTrajectory,
}

impl std::fmt::Display for RhoTrajectoryFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} after {} recorded states", self.error, self.partial.times.len())
    }
}

impl std::error::Error for RhoTrajectoryFailure {}

pub fn rho_tolerances() -> Tolerances {
    Tolerances {
        rtol: 1e-10,
        atol: 1e-12,
        h_max: 1.0,
        ..Tolerances::default()
    }
}

/// States at each of `record_times` (sorted, within `[0, t_final]`, time
/// measured from `rho0`), plus the final state at `t_final`.
pub fn evolve_rho(
    rho0: &DensityMatrix,
    l: &Liouvillian,
    t_final: f64,
    record_times: &[f64],
) -> std::result::Result<RhoTrajectory, RhoTrajectoryFailure> {
    evolve_rho_with(rho0, l, t_final, record_times, rho_tolerances())
}

pub fn evolve_rho_with(
    rho0: &DensityMatrix,
    l: &Liouvillian,
    t_final: f64,
    record_times: &[f64],
    tol: Tolerances,
) -> std::result::Result<RhoTrajectory, RhoTrajectoryFailure> {
    let mut traj = RhoTrajectory {
        times: Vec::new(),
        states: Vec::new(),
    };
    let fail = |error, partial| Err(RhoTrajectoryFailure { error, partial });
    if rho0.n_sites() != l.n_sites() {
        return fail(
            Error::InvalidParams("state and Liouvillian sizes differ".into()),
            traj,
        );
    }
    if let Err(e) = rho0.validate(1e-8) {
        return fail(e, traj);
    }
    if !(t_final >= 0.0) || record_times.windows(2).any(|w| w[1] < w[0]) {
        return fail(
            Error::InvalidParams("record times must be sorted and t_final non-negative".into()),
            traj,
        );
    }
    if record_times.iter().any(|&t| t < 0.0 || t > t_final) {
        return fail(
            Error::InvalidParams("record time outside [0, t_final]".into()),
            traj,
        );
    }
    let d = l.dim();
    let flow = Flow(l);
    let y0: &[f64] = bytemuck::cast_slice(rho0.as_slice());
    let mut st = Stepper::new(&flow, 0.0, y0, tol);
    let snapshot = |y: &[f64]| {
        let z: &[Complex64] = bytemuck::cast_slice(y);
        DensityMatrix::from_parts(l.n_sites(), DMatrix::from_column_slice(d, d, z))
    };
    let targets = record_times.iter().copied().chain(std::iter::once(t_final));
    for (k, t) in targets.enumerate() {
        if k == record_times.len() && record_times.last() == Some(&t_final) {
            break;
        }
        if let Err(e) = st.advance_to(t, |_, _, _| true) {
            return fail(e, traj);
        }
        traj.times.push(t);
        traj.states.push(snapshot(st.state()));
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::build_liouvillian;
    use crate::lattice::LatticeSpec;
    use crate::model::{Axis, ModelParams};

    #[test]
    fn single_spin_decay() {
        let lat = LatticeSpec::fully_connected(1).unwrap();
        let l = build_liouvillian(&lat, &ModelParams::xy(0.4, 0.0, 0.0)).unwrap();
        let up = DensityMatrix::product(&[crate::BlochVector::new(0.0, 0.0, 1.0)]).unwrap();
        let times = [0.5, 1.0, 2.0, 4.0];
        let tr = evolve_rho(&up, &l, 4.0, &times).unwrap();
        assert_eq!(tr.times, times);
        for (t, rho) in tr.times.iter().zip(&tr.states) {
            let mz = rho.site_expectation(0, Axis::Z);
            assert!((mz - (2.0 * (-t).exp() - 1.0)).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn final_state_is_appended() {
        let lat = LatticeSpec::fully_connected(2).unwrap();
        let l = build_liouvillian(&lat, &ModelParams::xy(0.4, 0.3, 0.2)).unwrap();
        let rho = DensityMatrix::all_down(2).unwrap();
        let tr = evolve_rho(&rho, &l, 1.0, &[0.5]).unwrap();
        assert_eq!(tr.times, vec![0.5, 1.0]);
        assert!(evolve_rho(&rho, &l, 1.0, &[2.0]).is_err());
    }
}
