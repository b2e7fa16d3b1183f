//! Meanfield limit: the magnetization equations with all connected
//! correlators dropped.
//!
//! ```text
//! d mu_x/dt = -g mu_y mu_z - delta mu_y - gamma mu_x / 2
//! d mu_y/dt =  g mu_x mu_z - 2 omega mu_z + delta mu_x - gamma mu_y / 2
//! d mu_z/dt =  2 omega mu_y - gamma (1 + mu_z)
//! ```
//!
//! with `g = J Z` for the XY kind and `g = -J_z Z` for the Ising kind.

use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BlochVector, ModelParams, SweepParameter};
use crate::ode::{FnSystem, Stepper, Tolerances};

/// Eigenvalue real parts within this margin of zero are reported as marginal.
pub const STABILITY_MARGIN: f64 = 1e-9;
/// Distance in Bloch space below which two fixed points are the same.
pub const DEDUP_TOL: f64 = 1e-7;
/// Residual max-norm a fixed point must satisfy.
pub const FIXED_POINT_TOL: f64 = 1e-10;
/// Default resolution of bisected bistability edges.
pub const EDGE_RESOLUTION: f64 = 1e-4;
/// Relaxation hands over to Newton iteration once `|d mu/dt|_inf` is below this.
pub const NEWTON_POLISH_BELOW: f64 = 1e-9;

pub fn mf_rhs(mu: BlochVector, p: &ModelParams, z: f64) -> BlochVector {
    let g = p.mf_coupling() * z;
    BlochVector::new(
        -g * mu.y * mu.z - p.delta * mu.y - 0.5 * p.gamma * mu.x,
        g * mu.x * mu.z - 2.0 * p.omega * mu.z + p.delta * mu.x - 0.5 * p.gamma * mu.y,
        2.0 * p.omega * mu.y - p.gamma * (1.0 + mu.z),
    )
}

pub fn mf_jacobian(mu: BlochVector, p: &ModelParams, z: f64) -> Matrix3<f64> {
    let g = p.mf_coupling() * z;
    let hg = 0.5 * p.gamma;
    Matrix3::new(
        -hg,
        -g * mu.z - p.delta,
        -g * mu.y,
        g * mu.z + p.delta,
        -hg,
        g * mu.x - 2.0 * p.omega,
        0.0,
        2.0 * p.omega,
        -p.gamma,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
    /// Leading eigenvalue within [`STABILITY_MARGIN`] of the imaginary axis.
    Marginal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub mu: BlochVector,
    pub stability: Stability,
    pub jacobian_eigenvalues: [Complex64; 3],
}

impl FixedPoint {
    pub fn is_stable(&self) -> bool {
        self.stability == Stability::Stable
    }

    /// Smallest decay rate `min |Re lambda|` of the linearized flow.
    pub fn slowest_rate(&self) -> f64 {
        self.jacobian_eigenvalues
            .iter()
            .map(|l| l.re.abs())
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn classify(mu: BlochVector, p: &ModelParams, z: f64) -> FixedPoint {
    let ev = mf_jacobian(mu, p, z).complex_eigenvalues();
    let mut eigs = [ev[0], ev[1], ev[2]];
    eigs.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    let lead = eigs[0].re;
    let stability = if lead < -STABILITY_MARGIN {
        Stability::Stable
    } else if lead > STABILITY_MARGIN {
        Stability::Unstable
    } else {
        Stability::Marginal
    };
    FixedPoint {
        mu,
        stability,
        jacobian_eigenvalues: eigs,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<BlochVector>,
}

impl Trajectory {
    pub fn last(&self) -> BlochVector {
        *self.states.last().expect("trajectory is never empty")
    }
}

/// Integration failure together with everything computed up to it.
#[derive(Debug)]
pub struct TrajectoryFailure {
    pub error: Error,
    pub partial: Trajectory,
}

impl std::fmt::Display for TrajectoryFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} (partial trajectory of {} samples)",
            self.error,
            self.partial.times.len()
        )
    }
}

impl std::error::Error for TrajectoryFailure {}

impl From<TrajectoryFailure> for Error {
    fn from(f: TrajectoryFailure) -> Self {
        f.error
    }
}

pub fn mf_tolerances() -> Tolerances {
    Tolerances {
        rtol: 1e-11,
        atol: 1e-13,
        h_max: 1.0,
        ..Default::default()
    }
}

/// Integrate the meanfield flow, recording every accepted step.
pub fn mf_integrate(
    mu0: BlochVector,
    p: &ModelParams,
    z: f64,
    t_final: f64,
    tol: Tolerances,
) -> std::result::Result<Trajectory, TrajectoryFailure> {
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![mu0],
    };
    if !(t_final > 0.0) {
        return Err(TrajectoryFailure {
            error: Error::InvalidParams(format!("t_final must be positive, got {t_final}")),
            partial: traj,
        });
    }
    let pc = *p;
    let sys = FnSystem {
        dim: 3,
        f: move |_t: f64, y: &[f64], dy: &mut [f64]| {
            let d = mf_rhs(BlochVector::new(y[0], y[1], y[2]), &pc, z);
            dy.copy_from_slice(&d.to_array());
        },
    };
    let mut st = Stepper::new(&sys, 0.0, &mu0.to_array(), tol);
    let res = st.advance_to(t_final, |t, y, _| {
        traj.times.push(t);
        traj.states.push(BlochVector::new(y[0], y[1], y[2]));
        true
    });
    match res {
        Ok(_) => Ok(traj),
        Err(error) => Err(TrajectoryFailure {
            error,
            partial: traj,
        }),
    }
}

/// Result of relaxing the meanfield flow to a fixed point.
#[derive(Clone, Debug)]
pub struct MfRelaxation {
    pub mu: BlochVector,
    pub residual: f64,
    pub converged: bool,
    pub time: f64,
    pub trajectory: Trajectory,
}

/// Integrate until `|d mu/dt|_inf < steady_tol` or `t_max` is reached.
/// Near the fixed point the flow is finished by Newton iteration, which
/// reaches residuals below the integrator's own error floor.
pub fn mf_relax(
    mu0: BlochVector,
    p: &ModelParams,
    z: f64,
    t_max: f64,
    steady_tol: f64,
) -> Result<MfRelaxation> {
    let pc = *p;
    let sys = FnSystem {
        dim: 3,
        f: move |_t: f64, y: &[f64], dy: &mut [f64]| {
            let d = mf_rhs(BlochVector::new(y[0], y[1], y[2]), &pc, z);
            dy.copy_from_slice(&d.to_array());
        },
    };
    let mut st = Stepper::new(&sys, 0.0, &mu0.to_array(), mf_tolerances());
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![mu0],
    };
    let mut polish = true;
    loop {
        let threshold = if polish { steady_tol.max(NEWTON_POLISH_BELOW) } else { steady_tol };
        let mut hit = false;
        st.advance_to(t_max, |t, y, dy| {
            traj.times.push(t);
            traj.states.push(BlochVector::new(y[0], y[1], y[2]));
            hit = dy.iter().fold(0.0f64, |m, v| m.max(v.abs())) < threshold;
            !hit
        })?;
        let mu = traj.last();
        if !hit || residual_norm(mu, p, z) < steady_tol || !polish {
            break;
        }
        polish = false;
        if let Some(m) = newton(mu, p, z, 20) {
            if m.distance(mu) < 1e-6 && residual_norm(m, p, z) < steady_tol {
                traj.times.push(st.time());
                traj.states.push(m);
                break;
            }
        }
    }
    let mu = traj.last();
    let residual = residual_norm(mu, p, z);
    Ok(MfRelaxation {
        mu,
        residual,
        converged: residual < steady_tol,
        time: st.time(),
        trajectory: traj,
    })
}

fn residual_norm(mu: BlochVector, p: &ModelParams, z: f64) -> f64 {
    let r = mf_rhs(mu, p, z);
    r.x.abs().max(r.y.abs()).max(r.z.abs())
}

/// Newton iteration on the meanfield right-hand side.
pub fn newton(mu0: BlochVector, p: &ModelParams, z: f64, max_iter: usize) -> Option<BlochVector> {
    let mut mu = mu0;
    for _ in 0..max_iter {
        let r = mf_rhs(mu, p, z);
        let rv = nalgebra::Vector3::new(r.x, r.y, r.z);
        if rv.amax() < 1e-14 {
            return Some(mu);
        }
        let jac = mf_jacobian(mu, p, z);
        let step = jac.lu().solve(&rv)?;
        mu = BlochVector::new(mu.x - step[0], mu.y - step[1], mu.z - step[2]);
        if !mu.norm_sqr().is_finite() || mu.norm_sqr() > 100.0 {
            return None;
        }
    }
    (residual_norm(mu, p, z) < FIXED_POINT_TOL).then_some(mu)
}

/// Real roots in `[-1, 1]` of the cubic in `mu_z` obtained by eliminating
/// `mu_x` and `mu_y` from the fixed-point conditions.
pub fn eliminated_mu_z_roots(p: &ModelParams, z: f64) -> Vec<f64> {
    let g = p.mf_coupling() * z;
    let d = p.delta;
    let c = d * d + 0.25 * p.gamma * p.gamma;
    // g^2 u^3 + (2 g d + g^2) u^2 + (c + 2 g d + 2 omega^2) u + c = 0
    let coeffs = [
        c,
        c + 2.0 * g * d + 2.0 * p.omega * p.omega,
        2.0 * g * d + g * g,
        g * g,
    ];
    let eval = |u: f64| ((coeffs[3] * u + coeffs[2]) * u + coeffs[1]) * u + coeffs[0];
    let deriv = |u: f64| (3.0 * coeffs[3] * u + 2.0 * coeffs[2]) * u + coeffs[1];
    let mut roots = polynomial_real_roots(&coeffs);
    for r in roots.iter_mut() {
        for _ in 0..50 {
            let dv = deriv(*r);
            if dv == 0.0 {
                break;
            }
            let step = eval(*r) / dv;
            *r -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
    }
    roots.retain(|r| r.abs() <= 1.0 + 1e-9);
    roots
}

/// Fixed point reconstructed from a root of the eliminated cubic.
pub fn fixed_point_from_mu_z(p: &ModelParams, z: f64, mu_z: f64) -> Option<BlochVector> {
    if p.omega == 0.0 {
        return None;
    }
    let g = p.mf_coupling() * z;
    let mu_y = p.gamma * (1.0 + mu_z) / (2.0 * p.omega);
    let mu_x = -2.0 * mu_y * (g * mu_z + p.delta) / p.gamma;
    Some(BlochVector::new(mu_x, mu_y, mu_z))
}

fn polynomial_real_roots(coeffs: &[f64; 4]) -> Vec<f64> {
    // strip vanishing leading coefficients
    let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs())).max(1e-300);
    let mut deg = 3;
    while deg > 0 && coeffs[deg].abs() <= 1e-14 * scale {
        deg -= 1;
    }
    match deg {
        0 => vec![],
        1 => vec![-coeffs[0] / coeffs[1]],
        _ => {
            let lead = coeffs[deg];
            let mut comp = nalgebra::DMatrix::<f64>::zeros(deg, deg);
            for i in 1..deg {
                comp[(i, i - 1)] = 1.0;
            }
            for i in 0..deg {
                comp[(i, deg - 1)] = -coeffs[i] / lead;
            }
            comp.complex_eigenvalues()
                .iter()
                .filter(|r| r.im.abs() < 1e-6 * (1.0 + r.re.abs()))
                .map(|r| r.re)
                .collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSet {
    pub points: Vec<FixedPoint>,
    /// Non-fatal diagnostics, e.g. an even number of fixed points.
    pub warnings: Vec<String>,
}

impl FixedPointSet {
    pub fn stable(&self) -> impl Iterator<Item = &FixedPoint> {
        self.points.iter().filter(|f| f.is_stable())
    }

    pub fn stable_count(&self) -> usize {
        self.stable().count()
    }
}

fn push_unique(points: &mut Vec<BlochVector>, mu: BlochVector) {
    if !points.iter().any(|q| q.distance(mu) < DEDUP_TOL) {
        points.push(mu);
    }
}

/// All physical fixed points of the meanfield flow, found by Newton
/// iteration from a 12^3 seed grid over the Bloch ball and cross-checked
/// against the roots of the eliminated cubic.
pub fn mf_fixed_points(p: &ModelParams, z: f64) -> Result<FixedPointSet> {
    p.validate()?;
    const SEEDS: usize = 12;
    let mut found: Vec<BlochVector> = Vec::new();
    for i in 0..SEEDS {
        for j in 0..SEEDS {
            for k in 0..SEEDS {
                let c = |n: usize| -1.0 + (2.0 * n as f64 + 1.0) / SEEDS as f64;
                let seed = BlochVector::new(c(i), c(j), c(k));
                if seed.norm_sqr() > 1.0 {
                    continue;
                }
                if let Some(mu) = newton(seed, p, z, 60) {
                    if mu.is_physical(1e-9) && residual_norm(mu, p, z) < FIXED_POINT_TOL {
                        push_unique(&mut found, mu);
                    }
                }
            }
        }
    }
    let mut warnings = Vec::new();
    let newton_count = found.len();
    let mut cubic = Vec::new();
    if p.omega != 0.0 {
        for u in eliminated_mu_z_roots(p, z) {
            if let Some(mu) = fixed_point_from_mu_z(p, z, u).and_then(|m| newton(m, p, z, 20)) {
                if mu.is_physical(1e-9) {
                    push_unique(&mut cubic, mu);
                }
            }
        }
        for &mu in &cubic {
            push_unique(&mut found, mu);
        }
        if found.len() != newton_count || cubic.len() != found.len() {
            warnings.push(format!(
                "seeded Newton found {newton_count} fixed points, elimination found {}",
                cubic.len()
            ));
        }
    }
    if found.is_empty() {
        return Err(Error::FixedPoints(format!(
            "no fixed point converged for {p:?} (z = {z})"
        )));
    }
    found.sort_by(|a, b| a.x.total_cmp(&b.x));
    let points: Vec<FixedPoint> = found.into_iter().map(|mu| classify(mu, p, z)).collect();
    if points.len() % 2 == 0 {
        warnings.push(format!(
            "even number ({}) of fixed points; parameters may sit on a fold",
            points.len()
        ));
    }
    Ok(FixedPointSet { points, warnings })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BistabilityRegion {
    pub parameter: SweepParameter,
    /// Sorted, disjoint intervals with at least two stable fixed points.
    pub intervals: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPointFixedPoints {
    pub value: f64,
    pub fixed_points: FixedPointSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BistabilityScan {
    pub region: BistabilityRegion,
    pub points: Vec<GridPointFixedPoints>,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::InvalidParams("scan grid needs at least two points".into()));
    }
    if !grid.windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::InvalidParams("scan grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Count stable fixed points over `grid` and bisect the edges of every run
/// with two or more of them.
pub fn mf_bistability_scan(
    base: &ModelParams,
    parameter: SweepParameter,
    grid: &[f64],
    z: f64,
) -> Result<BistabilityScan> {
    check_grid(grid)?;
    let points: Vec<GridPointFixedPoints> = grid
        .iter()
        .map(|&v| {
            mf_fixed_points(&base.with(parameter, v), z).map(|fixed_points| GridPointFixedPoints {
                value: v,
                fixed_points,
            })
        })
        .collect::<Result<_>>()?;
    let bistable: Vec<bool> = points
        .iter()
        .map(|g| g.fixed_points.stable_count() >= 2)
        .collect();
    let min_step = grid
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let resolution = EDGE_RESOLUTION.min(min_step / 10.0);
    let is_bistable = |v: f64| -> Result<bool> {
        Ok(mf_fixed_points(&base.with(parameter, v), z)?.stable_count() >= 2)
    };
    let refine = |mut out: f64, mut inside: f64| -> Result<f64> {
        while (inside - out).abs() > resolution {
            let mid = 0.5 * (inside + out);
            if is_bistable(mid)? {
                inside = mid;
            } else {
                out = mid;
            }
        }
        Ok(0.5 * (inside + out))
    };
    let mut intervals = Vec::new();
    let mut i = 0;
    while i < grid.len() {
        if !bistable[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < grid.len() && bistable[i + 1] {
            i += 1;
        }
        let end = i;
        let lo = if start == 0 {
            grid[0]
        } else {
            refine(grid[start - 1], grid[start])?
        };
        let hi = if end + 1 == grid.len() {
            grid[end]
        } else {
            refine(grid[end + 1], grid[end])?
        };
        intervals.push((lo, hi));
        i += 1;
    }
    Ok(BistabilityScan {
        region: BistabilityRegion {
            parameter,
            intervals,
        },
        points,
    })
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "linspace needs at least two points");
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}
