//! Grouping of sweep records into branches and bistable intervals.

use serde::{Deserialize, Serialize};

use super::{Direction, SteadyStateRecord};
use crate::error::{Error, Result};
use crate::model::{BlochVector, SweepParameter};

/// Steady states closer than this in `mu` are the same state.
pub const MERGE_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Magnetization of the first member.
    pub mu: BlochVector,
    pub directions: Vec<Direction>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointClusters {
    pub value: f64,
    pub clusters: Vec<Cluster>,
    /// Some record at this value did not converge.
    pub excluded: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcludedPoint {
    pub value: f64,
    pub direction: Direction,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub label: String,
    pub direction: Direction,
    pub records: Vec<SteadyStateRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchDiagram {
    pub parameter: SweepParameter,
    pub branches: Vec<Branch>,
    /// Ascending in value.
    pub points: Vec<PointClusters>,
    /// Grid-resolution edges of maximal runs of points with two or more
    /// clusters.
    pub intervals: Vec<(f64, f64)>,
    pub excluded: Vec<ExcludedPoint>,
}

impl BranchDiagram {
    pub fn branch(&self, direction: Direction) -> Option<&Branch> {
        self.branches.iter().find(|b| b.direction == direction)
    }

    /// `(value, kappa)` of the branch that vanishes at an edge of interval
    /// `k`, over the last `count` grid points inside it in approach order.
    /// The forward branch ends at the upper edge, the backward one at the
    /// lower edge.
    pub fn approach_kappas(&self, k: usize, direction: Direction, count: usize) -> Vec<(f64, Option<f64>)> {
        let (Some(&(lo, hi)), Some(b)) = (self.intervals.get(k), self.branch(direction)) else {
            return Vec::new();
        };
        let mut inside: Vec<&SteadyStateRecord> = b
            .records
            .iter()
            .filter(|r| (lo..=hi).contains(&r.value()))
            .collect();
        inside.sort_by(|a, b| a.value().total_cmp(&b.value()));
        if direction == Direction::Backward {
            inside.reverse();
        }
        let skip = inside.len().saturating_sub(count);
        inside[skip..].iter().map(|r| (r.value(), r.kappa)).collect()
    }

    /// Both branches of interval `k` show kappa strictly decreasing over the
    /// last three points before their edge.
    pub fn critical_slowing(&self, k: usize) -> bool {
        [Direction::Forward, Direction::Backward].iter().all(|&d| {
            let ks = self.approach_kappas(k, d, 3);
            ks.len() == 3
                && ks.iter().all(|(_, k)| k.is_some())
                && ks.windows(2).all(|w| w[1].1.unwrap() < w[0].1.unwrap())
        })
    }
}

fn cluster(records: &[&SteadyStateRecord]) -> Vec<Cluster> {
    // single linkage: a record joins every cluster it is close to
    let mut clusters: Vec<(Vec<BlochVector>, Cluster)> = Vec::new();
    for r in records {
        let near: Vec<usize> = clusters
            .iter()
            .enumerate()
            .filter(|(_, (pts, _))| pts.iter().any(|m| m.distance(r.mu) <= MERGE_TOL))
            .map(|(i, _)| i)
            .collect();
        match near.split_first() {
            None => clusters.push((
                vec![r.mu],
                Cluster {
                    mu: r.mu,
                    directions: vec![r.direction],
                },
            )),
            Some((&first, rest)) => {
                for &i in rest.iter().rev() {
                    let (pts, c) = clusters.remove(i);
                    clusters[first].0.extend(pts);
                    clusters[first].1.directions.extend(c.directions);
                }
                clusters[first].0.push(r.mu);
                clusters[first].1.directions.push(r.direction);
            }
        }
    }
    clusters
        .into_iter()
        .map(|(_, mut c)| {
            c.directions.sort();
            c
        })
        .collect()
}

/// Records of one sweep over one parameter, usually from both directions.
pub fn detect_branches(records: &[SteadyStateRecord]) -> Result<BranchDiagram> {
    let parameter = records.first().map_or(SweepParameter::Delta, |r| r.parameter);
    if records.iter().any(|r| r.parameter != parameter) {
        return Err(Error::InvalidParams("records sweep different parameters".into()));
    }
    let mut branches: Vec<Branch> = Vec::new();
    for r in records {
        match branches.iter_mut().find(|b| b.direction == r.direction) {
            Some(b) => b.records.push(r.clone()),
            None => branches.push(Branch {
                label: r.branch_label(),
                direction: r.direction,
                records: vec![r.clone()],
            }),
        }
    }
    branches.sort_by_key(|b| b.direction);

    let mut sorted: Vec<&SteadyStateRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.value().total_cmp(&b.value()).then(a.direction.cmp(&b.direction)));
    let mut points = Vec::new();
    let mut excluded = Vec::new();
    for group in sorted.chunk_by(|a, b| a.value() == b.value()) {
        let value = group[0].value();
        let mut ok = Vec::new();
        for r in group {
            if r.converged {
                ok.push(*r);
            } else {
                excluded.push(ExcludedPoint {
                    value,
                    direction: r.direction,
                    reason: r
                        .error
                        .clone()
                        .unwrap_or_else(|| "steady-state tolerance not met".into()),
                });
            }
        }
        points.push(PointClusters {
            value,
            clusters: cluster(&ok),
            excluded: ok.len() < group.len(),
        });
    }

    let bistable = |p: &PointClusters| !p.excluded && p.clusters.len() >= 2;
    let mut intervals = Vec::new();
    let mut i = 0;
    while i < points.len() {
        if !bistable(&points[i]) {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < points.len() && bistable(&points[i + 1]) {
            i += 1;
        }
        intervals.push((points[start].value, points[i].value));
        i += 1;
    }
    Ok(BranchDiagram {
        parameter,
        branches,
        points,
        intervals,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeSpec;
    use crate::model::ModelParams;
    use crate::sweep::{Protocol, SweepPlan, Tier};

    fn rec(value: f64, direction: Direction, mu_x: f64, kappa: f64) -> SteadyStateRecord {
        let plan = SweepPlan::new(
            Tier::Mfqf,
            SweepParameter::Delta,
            vec![value],
            ModelParams::xy(0.0, 0.5, 1.0),
            LatticeSpec::cubic(2, 4).unwrap(),
            Protocol::BothDirections,
        );
        let mut r = SteadyStateRecord::blank(&plan, value, direction);
        r.mu = BlochVector::new(mu_x, 0.0, -0.5);
        r.kappa = Some(kappa);
        r.converged = true;
        r
    }

    fn synthetic(lo: f64, hi: f64) -> Vec<SteadyStateRecord> {
        let grid: Vec<f64> = (0..=50).map(|i| i as f64 * 0.1).collect();
        let mut out = Vec::new();
        for (dir, upper) in [(Direction::Forward, true), (Direction::Backward, false)] {
            for &v in &grid {
                let inside = v >= lo - 1e-9 && v <= hi + 1e-9;
                let mu = if inside && !upper { -0.3 } else if v < lo { 0.5 } else if v > hi { -0.3 } else { 0.5 };
                let edge = if upper { hi - v } else { v - lo };
                out.push(rec(v, dir, mu, 0.01 + edge.abs()));
            }
        }
        out
    }

    #[test]
    fn single_cluster_everywhere_gives_no_interval() {
        let recs: Vec<_> = (0..10)
            .flat_map(|i| {
                let v = i as f64;
                [rec(v, Direction::Forward, 0.1 * v, 1.0), rec(v, Direction::Backward, 0.1 * v + 1e-6, 1.0)]
            })
            .collect();
        let d = detect_branches(&recs).unwrap();
        assert!(d.intervals.is_empty());
        assert_eq!(d.points.len(), 10);
        assert_eq!(d.branches.len(), 2);
    }

    #[test]
    fn two_branches_over_known_interval() {
        let d = detect_branches(&synthetic(2.0, 3.0)).unwrap();
        assert_eq!(d.intervals.len(), 1);
        let (lo, hi) = d.intervals[0];
        assert!((lo - 2.0).abs() < 1e-12 && (hi - 3.0).abs() < 1e-12, "{lo} {hi}");
        assert!(d.critical_slowing(0));
        let f = d.approach_kappas(0, Direction::Forward, 3);
        assert_eq!(f.len(), 3);
        assert!((f[2].0 - 3.0).abs() < 1e-12);
        let b = d.approach_kappas(0, Direction::Backward, 3);
        assert!((b[2].0 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn unconverged_points_break_intervals() {
        let mut recs = synthetic(2.0, 3.0);
        let last = recs
            .iter_mut()
            .find(|r| r.direction == Direction::Forward && (r.value() - 3.0).abs() < 1e-9)
            .unwrap();
        last.converged = false;
        let d = detect_branches(&recs).unwrap();
        assert_eq!(d.excluded.len(), 1);
        let (_, hi) = d.intervals[0];
        assert!((hi - 2.9).abs() < 1e-9);
    }

    #[test]
    fn non_monotone_kappa_is_not_critical_slowing() {
        let mut recs = synthetic(2.0, 3.0);
        for r in recs.iter_mut() {
            if r.direction == Direction::Forward && (r.value() - 2.9).abs() < 1e-9 {
                r.kappa = Some(0.001);
            }
        }
        assert!(!detect_branches(&recs).unwrap().critical_slowing(0));
    }

    #[test]
    fn chained_members_merge() {
        let a = rec(1.0, Direction::Forward, 0.0, 1.0);
        let b = rec(1.0, Direction::Backward, 2e-4, 1.0);
        let c = rec(1.0, Direction::Cold, 1e-4, 1.0);
        let cl = cluster(&[&a, &b, &c]);
        assert_eq!(cl.len(), 1);
        assert_eq!(cl[0].directions.len(), 3);
    }
}
