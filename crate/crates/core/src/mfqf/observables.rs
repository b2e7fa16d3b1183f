use serde::{Deserialize, Serialize};

use super::dynamics::RelaxationTrace;
use super::field::{CorrelatorField, Pair};
use crate::error::{Error, Result};
use crate::lattice::{Displacement, Geometry};

/// Correlator magnitudes at or below this are treated as numerical zero.
pub const CORRELATOR_FLOOR: f64 = 1e-14;
/// Relaxation signals at or below this are treated as numerical zero.
pub const RELAXATION_FLOOR: f64 = 1e-14;
pub const MIN_LENGTH_POINTS: usize = 4;
pub const MIN_RELAXATION_POINTS: usize = 10;

/// Least-squares line `y = slope x + intercept`; returns the RMS residual too.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - slope * a - intercept).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, intercept, rms)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthFit {
    /// Inverse correlation length.
    pub lambda: f64,
    /// RMS residual of `log|eta|`.
    pub residual: f64,
    pub points: usize,
    /// Sign changes of `eta` across the window, the signature of a
    /// density-wave modulation on top of the exponential envelope.
    pub sign_changes: usize,
}

/// Fit `|eta_ab(R)| ~ exp(-lambda R)` along `+axis` over `2 <= R <= L/4`.
pub fn fit_correlation_length(field: &CorrelatorField, pair: Pair, axis: usize) -> Result<LengthFit> {
    let l = match field.lattice().geometry() {
        Geometry::Hypercubic { sizes } if axis < sizes.len() => sizes[axis],
        Geometry::Chain { n, .. } if axis == 0 => *n,
        other => {
            return Err(Error::Fit(format!(
                "no distance axis {axis} on {other:?}"
            )))
        }
    };
    fit_correlation_length_in(field, pair, axis, 2, l / 4)
}

pub fn fit_correlation_length_in(
    field: &CorrelatorField,
    pair: Pair,
    axis: usize,
    r_min: usize,
    r_max: usize,
) -> Result<LengthFit> {
    let rank = field.lattice().displacement_rank();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut signs = Vec::new();
    for r in r_min..=r_max {
        let d = Displacement::unit(rank, axis, r as i64);
        let v = field.get(&d)?[pair.index()];
        if v.abs() > CORRELATOR_FLOOR {
            xs.push(r as f64);
            ys.push(v.abs().ln());
            signs.push(v.signum());
        }
    }
    if xs.len() < MIN_LENGTH_POINTS {
        return Err(Error::Fit(format!(
            "only {} usable distances for eta_{pair} (need {MIN_LENGTH_POINTS})",
            xs.len()
        )));
    }
    let (slope, _, residual) = linear_fit(&xs, &ys);
    if !(slope < 0.0) {
        return Err(Error::Fit(format!("eta_{pair} does not decay (slope {slope:e})")));
    }
    let sign_changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
    Ok(LengthFit {
        lambda: -slope,
        residual,
        points: xs.len(),
        sign_changes,
    })
}

/// `Sigma_ab = sum_{R != 0} eta_ab(R)`. On the fully-connected graph the
/// single class stands for all `N - 1` other sites.
pub fn total_correlation(field: &CorrelatorField, pair: Pair) -> f64 {
    let i = pair.index();
    let s: f64 = field.values().iter().map(|v| v[i]).sum();
    match field.lattice().geometry() {
        Geometry::FullyConnected { n } => s * (n - 1) as f64,
        _ => s,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelaxationSignal {
    /// `d(mu^2)/dt = 2 mu . dmu/dt`.
    MuSquaredRate,
    /// `|dmu/dt|^2`, used when the first signal changes sign.
    RateNormSquared,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaFit {
    pub kappa: f64,
    pub residual: f64,
    pub points: usize,
    pub signal: RelaxationSignal,
}

/// Fit `|d(mu^2)/dt| ~ exp(-kappa t)` over the last half of the trace.
pub fn fit_relaxation_rate(trace: &RelaxationTrace) -> Result<KappaFit> {
    if trace.len() < MIN_RELAXATION_POINTS {
        return Err(Error::Fit(format!("trace has only {} samples", trace.len())));
    }
    let t0 = trace.times[0];
    let t1 = *trace.times.last().expect("nonempty");
    let start = trace.times.partition_point(|&t| t < t0 + 0.5 * (t1 - t0));
    let window = start..trace.len();
    if window.len() < MIN_RELAXATION_POINTS {
        return Err(Error::Fit(format!(
            "late-time window holds {} samples (need {MIN_RELAXATION_POINTS})",
            window.len()
        )));
    }
    let collect = |signal: RelaxationSignal| {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut sign_changes = 0;
        let mut last_sign = 0.0;
        for i in window.clone() {
            let (mu, d) = (trace.mu[i], trace.dmu[i]);
            let v = match signal {
                RelaxationSignal::MuSquaredRate => 2.0 * mu.dot(d),
                RelaxationSignal::RateNormSquared => d.norm_sqr(),
            };
            let floor = match signal {
                RelaxationSignal::MuSquaredRate => RELAXATION_FLOOR,
                RelaxationSignal::RateNormSquared => RELAXATION_FLOOR * RELAXATION_FLOOR,
            };
            if v.abs() > floor {
                if last_sign != 0.0 && v.signum() != last_sign {
                    sign_changes += 1;
                }
                last_sign = v.signum();
                xs.push(trace.times[i]);
                ys.push(v.abs().ln());
            }
        }
        (xs, ys, sign_changes)
    };
    let (mut xs, mut ys, changes) = collect(RelaxationSignal::MuSquaredRate);
    let mut signal = RelaxationSignal::MuSquaredRate;
    if changes > 0 {
        (xs, ys, _) = collect(RelaxationSignal::RateNormSquared);
        signal = RelaxationSignal::RateNormSquared;
    }
    if xs.len() < MIN_RELAXATION_POINTS {
        return Err(Error::Fit(format!(
            "relaxation signal below floor at all but {} late samples",
            xs.len()
        )));
    }
    let (slope, _, residual) = linear_fit(&xs, &ys);
    if !(slope < 0.0) {
        return Err(Error::Fit(format!("relaxation signal does not decay (slope {slope:e})")));
    }
    // |dmu/dt|^2 is quadratic in the decaying amplitude
    let order = match signal {
        RelaxationSignal::MuSquaredRate => 1.0,
        RelaxationSignal::RateNormSquared => 2.0,
    };
    Ok(KappaFit {
        kappa: -slope / order,
        residual,
        points: xs.len(),
        signal,
    })
}

/// Steady-state correlation summary; failed fits are `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrelationObservables {
    pub lambda: [Option<f64>; 6],
    pub lambda_residual: [Option<f64>; 6],
    pub sigma: [f64; 6],
    pub kappa: Option<f64>,
    pub kappa_residual: Option<f64>,
}

impl CorrelationObservables {
    /// Correlation lengths are fitted along the first lattice axis.
    pub fn measure(field: &CorrelatorField, trace: &RelaxationTrace) -> Self {
        let mut out = CorrelationObservables::default();
        for pair in Pair::ALL {
            let i = pair.index();
            out.sigma[i] = total_correlation(field, pair);
            if let Ok(f) = fit_correlation_length(field, pair, 0) {
                out.lambda[i] = Some(f.lambda);
                out.lambda_residual[i] = Some(f.residual);
            }
        }
        if let Ok(k) = fit_relaxation_rate(trace) {
            out.kappa = Some(k.kappa);
            out.kappa_residual = Some(k.residual);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeSpec;
    use crate::model::BlochVector;

    fn chain_field(n: usize, f: impl Fn(i64) -> f64) -> CorrelatorField {
        let lat = LatticeSpec::cubic(1, n).unwrap();
        let mut field = CorrelatorField::zeros(&lat).unwrap();
        for r in 1..n as i64 {
            let d = lat.wrap(&Displacement::scalar(r));
            let v = f(d.0[0]);
            field.set(&d, [v, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        }
        field
    }

    #[test]
    fn exact_exponentials() {
        let f = chain_field(64, |r| (-2.0 * r.abs() as f64).exp());
        let fit = fit_correlation_length(&f, Pair::Xx, 0).unwrap();
        assert!((fit.lambda - 2.0).abs() < 1e-9);
        assert_eq!(fit.sign_changes, 0);
        let f = chain_field(64, |r| 0.5 * (-0.3 * r.abs() as f64).exp());
        let fit = fit_correlation_length(&f, Pair::Xx, 0).unwrap();
        assert!((fit.lambda - 0.3).abs() < 1e-9);
    }

    #[test]
    fn modulated_decay() {
        let f = chain_field(64, |r| {
            let s = if r.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            s * (-(r.abs() as f64)).exp()
        });
        let fit = fit_correlation_length(&f, Pair::Xx, 0).unwrap();
        assert!((fit.lambda - 1.0).abs() < 1e-9);
        assert_eq!(fit.sign_changes, fit.points - 1);
    }

    #[test]
    fn zero_field_is_a_fit_failure() {
        let f = chain_field(64, |_| 0.0);
        assert!(fit_correlation_length(&f, Pair::Xx, 0).is_err());
        assert!(fit_correlation_length(&f, Pair::Yz, 0).is_err());
    }

    #[test]
    fn growing_data_is_a_fit_failure() {
        let f = chain_field(64, |r| 1e-3 * (0.1 * r.abs() as f64).exp());
        assert!(fit_correlation_length(&f, Pair::Xx, 0).is_err());
    }

    #[test]
    fn fully_connected_has_no_length() {
        let f = CorrelatorField::zeros(&LatticeSpec::fully_connected(8).unwrap()).unwrap();
        assert!(fit_correlation_length(&f, Pair::Xx, 0).is_err());
    }

    #[test]
    fn total_correlation_sums() {
        assert_eq!(total_correlation(&chain_field(16, |_| 0.0), Pair::Xx), 0.0);
        let f = chain_field(16, |r| if r.abs() <= 2 { 0.25 } else { 0.0 });
        assert!((total_correlation(&f, Pair::Xx) - 1.0).abs() < 1e-15);
        let f = chain_field(200, |r| (-(r.abs() as f64)).exp());
        let q = (-1.0f64).exp();
        // sum over R = -100..=99, R != 0
        let oracle = 2.0 * q * (1.0 - q.powi(99)) / (1.0 - q) + q.powi(100);
        assert!((total_correlation(&f, Pair::Xx) - oracle).abs() < 1e-13);
    }

    fn synthetic_trace(rate: f64, n: usize, t_end: f64) -> RelaxationTrace {
        let mut tr = RelaxationTrace::default();
        for i in 0..n {
            let t = t_end * i as f64 / (n - 1) as f64;
            tr.push(
                t,
                BlochVector::new(0.0, 0.0, 1.0),
                BlochVector::new(0.0, 0.0, 0.5 * (-rate * t).exp()),
            );
        }
        tr
    }

    #[test]
    fn exact_relaxation_rate() {
        let fit = fit_relaxation_rate(&synthetic_trace(3.0, 200, 8.0)).unwrap();
        assert!((fit.kappa - 3.0).abs() < 1e-9);
        assert_eq!(fit.signal, RelaxationSignal::MuSquaredRate);
    }

    #[test]
    fn sign_changing_rate_falls_back_to_rate_norm() {
        let mut tr = RelaxationTrace::default();
        for i in 0..200 {
            let t = i as f64 * 0.04;
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            tr.push(
                t,
                BlochVector::new(0.0, 0.0, 1.0),
                BlochVector::new(0.0, 0.0, sign * 0.5 * (-2.5 * t).exp()),
            );
        }
        let fit = fit_relaxation_rate(&tr).unwrap();
        assert_eq!(fit.signal, RelaxationSignal::RateNormSquared);
        assert!((fit.kappa - 2.5).abs() < 1e-9, "{}", fit.kappa);
    }

    #[test]
    fn constant_trace_is_a_fit_failure() {
        let mut tr = RelaxationTrace::default();
        for i in 0..50 {
            tr.push(i as f64, BlochVector::new(0.0, 0.6, -0.2), BlochVector::default());
        }
        assert!(fit_relaxation_rate(&tr).is_err());
    }

    #[test]
    fn short_trace_is_a_fit_failure() {
        assert!(fit_relaxation_rate(&synthetic_trace(1.0, 12, 5.0)).is_err());
    }
}
