//! Probability distribution of the site-averaged magnetization and the
//! bimodality index built on it.

use serde::{Deserialize, Serialize};

use super::{axis_frame, DensityMatrix};
use crate::error::{Error, Result};
use crate::model::Axis;

/// Probabilities below this magnitude are round-off and are clipped to 0.
pub const PROBABILITY_CLIP: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MagnetizationDistribution {
    /// `m_k = (N - 2k)/N`, `k = 0..=N`
    pub values: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl MagnetizationDistribution {
    /// `probabilities[k]` belongs to `m_k = (N - 2k)/N`, `N = len - 1`.
    /// Entries above `-PROBABILITY_CLIP` but below zero are clipped.
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.len() < 2 {
            return Err(Error::InvalidParams("distribution needs at least two bins".into()));
        }
        if let Some(v) = probabilities
            .iter()
            .find(|v| !v.is_finite() || **v < -PROBABILITY_CLIP)
        {
            return Err(Error::InvalidParams(format!("invalid probability {v}")));
        }
        Ok(Self::from_raw(probabilities))
    }

    /// Like [`MagnetizationDistribution::new`] without validation.
    pub(crate) fn from_raw(mut p: Vec<f64>) -> Self {
        let n = (p.len() - 1) as f64;
        for v in &mut p {
            if *v < 0.0 && *v > -PROBABILITY_CLIP {
                *v = 0.0;
            }
        }
        let values = (0..p.len()).map(|k| (n - 2.0 * k as f64) / n).collect();
        MagnetizationDistribution {
            values,
            probabilities: p,
        }
    }

    pub fn n_sites(&self) -> usize {
        self.values.len() - 1
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.probabilities).map(|(m, p)| m * p).sum()
    }

    /// Indices of local maxima after merging equal neighbors into plateaus;
    /// a plateau reports its first index.
    pub fn local_maxima(&self) -> Vec<usize> {
        let p = &self.probabilities;
        let mut runs: Vec<(usize, f64)> = Vec::new();
        for (k, &v) in p.iter().enumerate() {
            match runs.last() {
                Some(&(_, w)) if w == v => {}
                _ => runs.push((k, v)),
            }
        }
        (0..runs.len())
            .filter(|&r| {
                let v = runs[r].1;
                let left = r == 0 || runs[r - 1].1 < v;
                let right = r + 1 == runs.len() || runs[r + 1].1 < v;
                left && right && runs.len() > 1
            })
            .map(|r| runs[r].0)
            .collect()
    }
}

/// `b = 2 (P_max2 - P_min) / (P_max1 + P_max2)` from the two largest local
/// maxima and the smallest probability strictly between them; 0 with fewer
/// than two maxima.
pub fn bimodality_index(dist: &MagnetizationDistribution) -> f64 {
    let peaks = dist.local_maxima();
    if peaks.len() < 2 {
        return 0.0;
    }
    let p = &dist.probabilities;
    let mut order = peaks.clone();
    order.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    let (i, j) = (order[0].min(order[1]), order[0].max(order[1]));
    let (p1, p2) = (p[order[0]], p[order[1]]);
    let pmin = p[i + 1..j].iter().copied().fold(f64::INFINITY, f64::min);
    let b = 2.0 * (p2 - pmin) / (p1 + p2);
    b.clamp(0.0, 1.0)
}

/// Rotate every site into the eigenbasis of `sigma^axis` and bin the
/// diagonal by the number of up spins along that axis.
pub fn magnetization_distribution(rho: &DensityMatrix, axis: Axis) -> MagnetizationDistribution {
    let n = rho.n_sites();
    let d = rho.dim();
    let u = axis_frame(axis);
    let mut m = rho.matrix().clone();
    if axis != Axis::Z {
        for s in 0..n {
            let bit = 1usize << s;
            // m <- U_s^dag m U_s, rows then columns
            for j in 0..d {
                for i in (0..d).filter(|i| i & bit == 0) {
                    let (a, b) = (m[(i, j)], m[(i | bit, j)]);
                    m[(i, j)] = u[0][0].conj() * a + u[1][0].conj() * b;
                    m[(i | bit, j)] = u[0][1].conj() * a + u[1][1].conj() * b;
                }
            }
            for j in (0..d).filter(|j| j & bit == 0) {
                for i in 0..d {
                    let (a, b) = (m[(i, j)], m[(i, j | bit)]);
                    m[(i, j)] = a * u[0][0] + b * u[1][0];
                    m[(i, j | bit)] = a * u[0][1] + b * u[1][1];
                }
            }
        }
    }
    let mut p = vec![0.0; n + 1];
    for i in 0..d {
        let ups = i.count_ones() as usize;
        p[n - ups] += m[(i, i)].re;
    }
    MagnetizationDistribution::from_raw(p)
}
