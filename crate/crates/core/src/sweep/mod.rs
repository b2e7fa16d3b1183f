//! Parameter sweeps and hysteresis protocols over every solver tier.
//!
//! A forward sweep walks the grid in ascending order and seeds each point
//! with the previous converged state, a backward sweep does the same in
//! descending order. Running both exposes coexisting branches.

mod branches;
mod persist;

pub use branches::{
    detect_branches, Branch, BranchDiagram, Cluster, ExcludedPoint, PointClusters, MERGE_TOL,
};
pub use persist::{
    load_results, persist_diagram, persist_results, read_records, write_records, ResultFiles,
    Sidecar, DIAGRAM_FILE, DISTRIBUTIONS_FILE, INTERVALS_FILE, RECORDS_FILE, RECORD_COLUMNS,
    SIDECAR_FILE,
};
pub(crate) use persist::{fmt_f64, fmt_opt};

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{
    bimodality_index, build_liouvillian, liouvillian_spectrum_edge, magnetization_distribution,
    steady_state_with, DensityMatrix, MagnetizationDistribution, ReducedLiouvillian,
    SteadyOptions, DEFAULT_MAX_SITES, REDUCED_MAX_SITES,
};
use crate::exact::liouvillian::DENSE_MAX_SITES;
use crate::lattice::{Geometry, LatticeSpec};
use crate::meanfield::{classify, mf_relax};
use crate::mfqf::{mfqf_integrate, CorrelationObservables, MfqfOptions, MfqfState, RelaxationTrace};
use crate::model::{Axis, BlochVector, ModelParams, SweepParameter};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Mf,
    Mfqf,
    Exact,
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Mf => "mf",
            Tier::Mfqf => "mfqf",
            Tier::Exact => "exact",
        })
    }
}

impl FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mf" => Ok(Tier::Mf),
            "mfqf" => Ok(Tier::Mfqf),
            "exact" => Ok(Tier::Exact),
            other => Err(Error::Config(format!("unknown tier '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Every point starts from all spins down.
    ColdStart,
    WarmForward,
    WarmBackward,
    BothDirections,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Cold,
    Forward,
    Backward,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Cold => "cold",
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cold" => Ok(Direction::Cold),
            "forward" => Ok(Direction::Forward),
            "backward" => Ok(Direction::Backward),
            other => Err(Error::Config(format!("unknown sweep direction '{other}'"))),
        }
    }
}

/// Integration horizon per point. A point that has not met the steady-state
/// tolerance after `t_final` keeps integrating, doubling its elapsed time,
/// until `t_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Horizon {
    pub t_final: f64,
    pub t_max: f64,
}

impl Default for Horizon {
    fn default() -> Self {
        Horizon {
            t_final: 500.0,
            t_max: 8000.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExactMethod {
    /// Reduced solver on fully connected lattices, full space otherwise.
    Auto,
    Full,
    Reduced,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExactOptions {
    pub method: ExactMethod,
    /// Axis of the magnetization distribution and bimodality index.
    pub axis: Axis,
    /// Also compute the asymptotic decay rate `-Re lambda_E`, reported as kappa.
    pub spectrum: bool,
    pub steady: SteadyOptions,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions {
            method: ExactMethod::Auto,
            axis: Axis::X,
            spectrum: false,
            steady: SteadyOptions::default(),
        }
    }
}

/// Meanfield points count as converged once `|d mu/dt|_inf` is below this.
pub const DEFAULT_MF_STEADY_TOL: f64 = 1e-12;

fn default_mf_steady_tol() -> f64 {
    DEFAULT_MF_STEADY_TOL
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    pub tier: Tier,
    pub parameter: SweepParameter,
    pub grid: Vec<f64>,
    pub params: ModelParams,
    pub lattice: LatticeSpec,
    pub protocol: Protocol,
    #[serde(default)]
    pub horizon: Horizon,
    #[serde(default = "default_mf_steady_tol")]
    pub mf_steady_tol: f64,
    #[serde(default)]
    pub mfqf: MfqfOptions,
    #[serde(default)]
    pub exact: ExactOptions,
}

impl SweepPlan {
    pub fn new(
        tier: Tier,
        parameter: SweepParameter,
        grid: Vec<f64>,
        params: ModelParams,
        lattice: LatticeSpec,
        protocol: Protocol,
    ) -> Self {
        SweepPlan {
            tier,
            parameter,
            grid,
            params,
            lattice,
            protocol,
            horizon: Horizon::default(),
            mf_steady_tol: default_mf_steady_tol(),
            mfqf: MfqfOptions::default(),
            exact: ExactOptions::default(),
        }
    }

    /// Grid values in ascending order.
    pub fn ascending(&self) -> Vec<f64> {
        let mut g = self.grid.clone();
        if g.len() > 1 && g[0] > g[1] {
            g.reverse();
        }
        g
    }

    fn uses_reduced(&self) -> bool {
        let fc = matches!(self.lattice.geometry(), Geometry::FullyConnected { .. });
        match self.exact.method {
            ExactMethod::Auto => fc,
            ExactMethod::Reduced => true,
            ExactMethod::Full => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        if let Some(v) = g.iter().find(|v| !v.is_finite()) {
            return Err(Error::Config(format!("sweep grid holds non-finite value {v}")));
        }
        let up = g.windows(2).all(|w| w[1] > w[0]);
        let down = g.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            return Err(Error::Config("sweep grid must be strictly monotone".into()));
        }
        for &v in g {
            self.params.with(self.parameter, v).validate()?;
        }
        let h = self.horizon;
        if !(h.t_final > 0.0 && h.t_final.is_finite()) {
            return Err(Error::Config(format!("horizon.t_final must be positive, got {}", h.t_final)));
        }
        if !(h.t_max >= h.t_final && h.t_max.is_finite()) {
            return Err(Error::Config("horizon.t_max must be finite and at least t_final".into()));
        }
        if !(self.mf_steady_tol > 0.0 && self.mf_steady_tol.is_finite()) {
            return Err(Error::Config("mf_steady_tol must be positive".into()));
        }
        self.mfqf.validate()?;
        let s = self.exact.steady;
        for (name, v) in [
            ("exact.steady.residual_tol", s.residual_tol),
            ("exact.steady.rank_tol", s.rank_tol),
            ("exact.steady.agreement_tol", s.agreement_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        match self.tier {
            Tier::Mfqf if !self.lattice.is_translation_invariant() => Err(Error::Config(
                "the correlation closure needs a translation-invariant lattice".into(),
            )),
            Tier::Exact => self.check_exact_capacity(),
            _ => Ok(()),
        }
    }

    fn check_exact_capacity(&self) -> Result<()> {
        let n = self.lattice.num_sites();
        if self.uses_reduced() {
            if !matches!(self.lattice.geometry(), Geometry::FullyConnected { .. }) {
                return Err(Error::Config(
                    "the reduced solver needs a fully connected lattice".into(),
                ));
            }
            if n > REDUCED_MAX_SITES {
                return Err(Error::Capacity(format!(
                    "{n} sites exceed the reduced solver limit of {REDUCED_MAX_SITES}"
                )));
            }
        } else {
            if n > DEFAULT_MAX_SITES {
                return Err(Error::Capacity(format!(
                    "{n} sites exceed the full-space limit of {DEFAULT_MAX_SITES}"
                )));
            }
            if self.exact.spectrum && n > DENSE_MAX_SITES {
                return Err(Error::Capacity(format!(
                    "full-space spectrum limited to {DENSE_MAX_SITES} sites, lattice has {n}"
                )));
            }
        }
        Ok(())
    }
}

/// Steady state reached at one grid point in one sweep direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateRecord {
    pub tier: Tier,
    pub parameter: SweepParameter,
    pub params: ModelParams,
    pub dimension: usize,
    pub connectivity: usize,
    pub direction: Direction,
    pub mu: BlochVector,
    pub kappa: Option<f64>,
    pub lambda: [Option<f64>; 6],
    pub sigma: [Option<f64>; 6],
    pub distribution: Option<MagnetizationDistribution>,
    pub b_x: Option<f64>,
    /// Set only when the tier's steady-state tolerance was met.
    pub converged: bool,
    pub residual: Option<f64>,
    /// Integration time spent, for the time-stepping tiers.
    pub t_end: Option<f64>,
    pub error: Option<String>,
}

impl SteadyStateRecord {
    fn blank(plan: &SweepPlan, value: f64, direction: Direction) -> Self {
        SteadyStateRecord {
            tier: plan.tier,
            parameter: plan.parameter,
            params: plan.params.with(plan.parameter, value),
            dimension: plan.lattice.dimension(),
            connectivity: plan.lattice.connectivity(),
            direction,
            mu: BlochVector::down(),
            kappa: None,
            lambda: [None; 6],
            sigma: [None; 6],
            distribution: None,
            b_x: None,
            converged: false,
            residual: None,
            t_end: None,
            error: None,
        }
    }

    /// Value of the swept parameter.
    pub fn value(&self) -> f64 {
        self.params.get(self.parameter)
    }

    /// Records of one sweep direction form one branch.
    pub fn branch_label(&self) -> String {
        self.direction.to_string()
    }
}

#[derive(Clone)]
enum Seed {
    Mf(BlochVector),
    Mfqf(MfqfState),
    Exact(Option<DensityMatrix>),
}

struct PointSolver<'a> {
    plan: &'a SweepPlan,
    z: f64,
    cold: Seed,
}

impl<'a> PointSolver<'a> {
    fn new(plan: &'a SweepPlan) -> Result<Self> {
        let cold = match plan.tier {
            Tier::Mf => Seed::Mf(BlochVector::down()),
            Tier::Mfqf => Seed::Mfqf(MfqfState::down(&plan.lattice)?),
            Tier::Exact => Seed::Exact(None),
        };
        Ok(PointSolver {
            plan,
            z: plan.lattice.connectivity() as f64,
            cold,
        })
    }

    /// The record, and the seed for the next point when this one converged.
    fn solve(&self, value: f64, seed: &Seed, dir: Direction) -> (SteadyStateRecord, Option<Seed>) {
        let mut rec = SteadyStateRecord::blank(self.plan, value, dir);
        let p = rec.params;
        let next = match seed {
            Seed::Mf(mu) => self.mf_point(&mut rec, &p, *mu),
            Seed::Mfqf(state) => self.mfqf_point(&mut rec, &p, state),
            Seed::Exact(guess) => self.exact_point(&mut rec, &p, guess.as_ref()),
        };
        match next {
            Ok(s) if rec.converged => (rec, Some(s)),
            Ok(_) => (rec, None),
            Err(e) => {
                rec.converged = false;
                rec.error = Some(e.to_string());
                (rec, None)
            }
        }
    }

    fn mf_point(&self, rec: &mut SteadyStateRecord, p: &ModelParams, mu0: BlochVector) -> Result<Seed> {
        let h = self.plan.horizon;
        let mut mu = mu0;
        let mut elapsed = 0.0;
        let mut budget = h.t_final;
        loop {
            let r = mf_relax(mu, p, self.z, budget, self.plan.mf_steady_tol)?;
            mu = r.mu;
            elapsed += r.time;
            rec.residual = Some(r.residual);
            if r.converged || elapsed >= h.t_max {
                rec.converged = r.converged;
                break;
            }
            budget = elapsed.min(h.t_max - elapsed);
        }
        rec.mu = mu;
        rec.t_end = Some(elapsed);
        let fp = classify(mu, p, self.z);
        if rec.converged && fp.is_stable() {
            rec.kappa = Some(fp.slowest_rate());
        }
        Ok(Seed::Mf(mu))
    }

    fn mfqf_point(&self, rec: &mut SteadyStateRecord, p: &ModelParams, seed: &MfqfState) -> Result<Seed> {
        let h = self.plan.horizon;
        let mut state = seed.clone();
        state.time = 0.0;
        let mut trace = RelaxationTrace::default();
        let mut budget = h.t_final;
        loop {
            let run = match mfqf_integrate(&state, p, budget, &self.plan.mfqf, &[]) {
                Ok(run) => run,
                Err(f) => {
                    rec.mu = f.snapshot.mu;
                    rec.t_end = Some(f.snapshot.time);
                    return Err(f.error);
                }
            };
            let skip = usize::from(!trace.is_empty());
            for i in skip..run.trace.len() {
                trace.push(run.trace.times[i], run.trace.mu[i], run.trace.dmu[i]);
            }
            state = run.final_state;
            rec.residual = Some(run.residual);
            if run.steady || state.time >= h.t_max {
                rec.converged = run.steady;
                break;
            }
            budget = state.time.min(h.t_max - state.time);
        }
        let obs = CorrelationObservables::measure(&state.field, &trace);
        rec.mu = state.mu;
        rec.t_end = Some(state.time);
        rec.kappa = obs.kappa;
        rec.lambda = obs.lambda;
        rec.sigma = obs.sigma.map(Some);
        Ok(Seed::Mfqf(state))
    }

    fn exact_point(
        &self,
        rec: &mut SteadyStateRecord,
        p: &ModelParams,
        guess: Option<&DensityMatrix>,
    ) -> Result<Seed> {
        let opts = &self.plan.exact;
        let (mu, dist, residual, kappa, next) = if self.plan.uses_reduced() {
            let n = self.plan.lattice.num_sites();
            let l = ReducedLiouvillian::new(n, p)?;
            let state = l.steady_state()?;
            let kappa = if opts.spectrum {
                Some(-l.spectrum_edge(2)?[1].re)
            } else {
                None
            };
            let residual = l.residual(&state);
            (state.bloch(), state.distribution(opts.axis), residual, kappa, None)
        } else {
            let l = build_liouvillian(&self.plan.lattice, p)?;
            let ss = steady_state_with(&l, &opts.steady, guess)?;
            let kappa = if opts.spectrum {
                Some(-liouvillian_spectrum_edge(&l, 2)?[1].re)
            } else {
                None
            };
            let dist = magnetization_distribution(&ss.rho, opts.axis);
            (ss.rho.mean_bloch(), dist, ss.residual, kappa, Some(ss.rho))
        };
        rec.mu = mu;
        rec.b_x = Some(bimodality_index(&dist));
        rec.distribution = Some(dist);
        rec.residual = Some(residual);
        rec.kappa = kappa;
        rec.converged = residual < opts.steady.residual_tol;
        Ok(Seed::Exact(next))
    }
}

/// One record per grid point and direction, forward records first. Failed
/// points are recorded with `converged = false` and their error message;
/// warm chains then continue from the last converged state.
pub fn run_sweep(plan: &SweepPlan) -> Result<Vec<SteadyStateRecord>> {
    plan.validate()?;
    let solver = PointSolver::new(plan)?;
    let ascending = plan.ascending();
    let chain = |dir: Direction| -> Vec<SteadyStateRecord> {
        let values: Vec<f64> = match dir {
            Direction::Backward => ascending.iter().rev().copied().collect(),
            _ => ascending.clone(),
        };
        let mut seed = solver.cold.clone();
        values
            .into_iter()
            .map(|v| {
                let (rec, next) = solver.solve(v, &seed, dir);
                if let Some(s) = next {
                    seed = s;
                }
                rec
            })
            .collect()
    };
    Ok(match plan.protocol {
        Protocol::ColdStart => ascending
            .par_iter()
            .map(|&v| solver.solve(v, &solver.cold, Direction::Cold).0)
            .collect(),
        Protocol::WarmForward => chain(Direction::Forward),
        Protocol::WarmBackward => chain(Direction::Backward),
        Protocol::BothDirections => {
            let (f, b) = rayon::join(|| chain(Direction::Forward), || chain(Direction::Backward));
            f.into_iter().chain(b).collect()
        }
    })
}

/// Leading `count` generator eigenvalues at every grid point of an exact
/// plan, ascending in value.
pub fn spectrum_scan(plan: &SweepPlan, count: usize) -> Result<Vec<(f64, Vec<Complex64>)>> {
    if plan.tier != Tier::Exact {
        return Err(Error::Config("spectrum scans need the exact tier".into()));
    }
    let mut probe = plan.clone();
    probe.exact.spectrum = true;
    probe.validate()?;
    plan.ascending()
        .par_iter()
        .map(|&v| {
            let p = plan.params.with(plan.parameter, v);
            let ev = if plan.uses_reduced() {
                ReducedLiouvillian::new(plan.lattice.num_sites(), &p)?.spectrum_edge(count)?
            } else {
                liouvillian_spectrum_edge(&build_liouvillian(&plan.lattice, &p)?, count)?
            };
            Ok((v, ev))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::linspace;

    fn mf_plan(protocol: Protocol) -> SweepPlan {
        SweepPlan::new(
            Tier::Mf,
            SweepParameter::Delta,
            linspace(0.0, 3.0, 31),
            ModelParams::xy(0.0, 0.5, 1.0),
            LatticeSpec::cubic(2, 8).unwrap(),
            protocol,
        )
    }

    #[test]
    fn grid_must_be_monotone() {
        let mut plan = mf_plan(Protocol::ColdStart);
        plan.grid = vec![0.0, 1.0, 0.5];
        assert!(plan.validate().is_err());
        plan.grid = vec![2.0, 1.0, 0.0];
        plan.validate().unwrap();
        assert_eq!(plan.ascending(), vec![0.0, 1.0, 2.0]);
        plan.grid.clear();
        assert!(plan.validate().is_err());
    }

    #[test]
    fn grid_values_are_validated_as_parameters() {
        let mut plan = mf_plan(Protocol::ColdStart);
        plan.parameter = SweepParameter::Omega;
        plan.params.gamma = -1.0;
        assert!(plan.validate().is_err());
    }

    #[test]
    fn one_record_per_point_and_direction() {
        let plan = mf_plan(Protocol::BothDirections);
        let recs = run_sweep(&plan).unwrap();
        assert_eq!(recs.len(), 62);
        assert!(recs[..31].iter().all(|r| r.direction == Direction::Forward));
        assert!(recs[31..].iter().all(|r| r.direction == Direction::Backward));
        assert_eq!(recs[31].value(), 3.0);
        assert!(recs.iter().all(|r| r.converged && r.kappa.unwrap() > 0.0));
    }

    #[test]
    fn hysteresis_in_meanfield() {
        let recs = run_sweep(&mf_plan(Protocol::BothDirections)).unwrap();
        let (f, b) = recs.split_at(31);
        let gap = |v: f64| {
            let a = f.iter().find(|r| r.value() == v).unwrap();
            let c = b.iter().find(|r| r.value() == v).unwrap();
            a.mu.distance(c.mu)
        };
        assert!(gap(1.6) > 0.05);
        assert!(gap(0.0) < 1e-6 && gap(3.0) < 1e-6);
    }

    #[test]
    fn cold_start_is_deterministic_and_ordered() {
        let plan = mf_plan(Protocol::ColdStart);
        let a = run_sweep(&plan).unwrap();
        let b = run_sweep(&plan).unwrap();
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0].value() < w[1].value()));
    }

    #[test]
    fn failed_points_are_recorded() {
        let mut plan = mf_plan(Protocol::WarmForward);
        plan.horizon = Horizon {
            t_final: 1e-3,
            t_max: 1e-3,
        };
        let recs = run_sweep(&plan).unwrap();
        assert_eq!(recs.len(), 31);
        assert!(recs.iter().all(|r| !r.converged));
    }

    #[test]
    fn exact_capacity_is_refused_up_front() {
        let mut plan = mf_plan(Protocol::ColdStart);
        plan.tier = Tier::Exact;
        assert!(matches!(plan.validate(), Err(Error::Capacity(_))));
        plan.lattice = LatticeSpec::chain(6, crate::Boundary::Periodic).unwrap();
        plan.exact.spectrum = true;
        assert!(matches!(plan.validate(), Err(Error::Capacity(_))));
        plan.exact.method = ExactMethod::Reduced;
        assert!(plan.validate().is_err());
    }

    #[test]
    fn spectrum_scan_matches_recorded_kappa() {
        let mut plan = mf_plan(Protocol::ColdStart);
        plan.tier = Tier::Exact;
        plan.lattice = LatticeSpec::fully_connected(3).unwrap();
        plan.grid = vec![0.5, 1.5];
        plan.exact.spectrum = true;
        let rows = spectrum_scan(&plan, 3).unwrap();
        let recs = run_sweep(&plan).unwrap();
        for ((v, ev), r) in rows.iter().zip(&recs) {
            assert_eq!(*v, r.value());
            assert!(ev[0].norm() < 1e-9);
            assert!((-ev[1].re - r.kappa.unwrap()).abs() < 1e-12);
        }
        plan.tier = Tier::Mf;
        assert!(spectrum_scan(&plan, 3).is_err());
    }

    #[test]
    fn exact_tier_records_distributions() {
        let mut plan = mf_plan(Protocol::BothDirections);
        plan.tier = Tier::Exact;
        plan.lattice = LatticeSpec::fully_connected(4).unwrap();
        plan.grid = vec![0.5, 1.0, 1.5];
        plan.exact.spectrum = true;
        let recs = run_sweep(&plan).unwrap();
        assert_eq!(recs.len(), 6);
        for r in &recs {
            assert!(r.converged);
            let d = r.distribution.as_ref().unwrap();
            assert_eq!(d.probabilities.len(), 5);
            assert!((d.total() - 1.0).abs() < 1e-10);
            assert!(r.kappa.unwrap() > 0.0);
        }
    }
}
