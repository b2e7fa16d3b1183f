//! Lattice geometries, displacements and nearest-neighbor bookkeeping.
//!
//! Displacements on periodic lattices are kept wrapped into the symmetric box
//! `[-L/2, L/2)` on every axis. Graph distance is the wrapped Manhattan norm.
//! On the fully-connected graph every pair of distinct sites is at distance 1
//! and a displacement is a scalar site-index offset in `0..N`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Open,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Geometry {
    /// All-to-all graph on `n` sites.
    FullyConnected { n: usize },
    /// Periodic hypercubic box with the given linear sizes, one per dimension.
    Hypercubic { sizes: Vec<usize> },
    /// Chain of `n` sites.
    Chain { n: usize, boundary: Boundary },
    /// Periodic two-dimensional `l1 x l2` cell whose second lattice vector is
    /// sheared by `shear` sites along the first axis. Used for small exact
    /// lattices whose site count is not a perfect square.
    Parallelogram { l1: usize, l2: usize, shear: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Geometry", into = "Geometry")]
pub struct LatticeSpec {
    geometry: Geometry,
}

impl TryFrom<Geometry> for LatticeSpec {
    type Error = Error;

    fn try_from(g: Geometry) -> Result<Self> {
        LatticeSpec::new(g)
    }
}

impl From<LatticeSpec> for Geometry {
    fn from(l: LatticeSpec) -> Self {
        l.geometry
    }
}

/// Integer offset between two sites.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Displacement(pub Vec<i64>);

impl Displacement {
    pub fn new(components: impl Into<Vec<i64>>) -> Self {
        Displacement(components.into())
    }

    pub fn scalar(offset: i64) -> Self {
        Displacement(vec![offset])
    }

    pub fn zero(dim: usize) -> Self {
        Displacement(vec![0; dim])
    }

    pub fn unit(dim: usize, axis: usize, sign: i64) -> Self {
        let mut c = vec![0; dim];
        c[axis] = sign;
        Displacement(c)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn components(&self) -> &[i64] {
        &self.0
    }

    pub fn neg(&self) -> Displacement {
        Displacement(self.0.iter().map(|c| -c).collect())
    }
}

impl fmt::Display for Displacement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

fn wrap_axis(x: i64, l: usize) -> i64 {
    let l = l as i64;
    let half = l / 2;
    (x + half).rem_euclid(l) - half
}

impl LatticeSpec {
    pub fn new(geometry: Geometry) -> Result<Self> {
        match &geometry {
            Geometry::FullyConnected { n } => {
                if *n < 1 {
                    return Err(Error::InvalidLattice(format!(
                        "fully-connected lattice needs at least 1 site, got {n}"
                    )));
                }
            }
            Geometry::Hypercubic { sizes } => {
                if sizes.is_empty() {
                    return Err(Error::InvalidLattice("hypercubic lattice needs D >= 1".into()));
                }
                if let Some(l) = sizes.iter().find(|&&l| l < 3) {
                    return Err(Error::InvalidLattice(format!(
                        "periodic linear sizes must be >= 3, got {l}"
                    )));
                }
            }
            Geometry::Chain { n, .. } => {
                if *n < 2 {
                    return Err(Error::InvalidLattice(format!(
                        "chain needs at least 2 sites, got {n}"
                    )));
                }
            }
            Geometry::Parallelogram { l1, l2, .. } => {
                if *l1 < 2 || *l2 < 2 {
                    return Err(Error::InvalidLattice(format!(
                        "parallelogram sides must be >= 2, got {l1}x{l2}"
                    )));
                }
            }
        }
        Ok(LatticeSpec { geometry })
    }

    pub fn fully_connected(n: usize) -> Result<Self> {
        Self::new(Geometry::FullyConnected { n })
    }

    pub fn hypercubic(sizes: &[usize]) -> Result<Self> {
        Self::new(Geometry::Hypercubic {
            sizes: sizes.to_vec(),
        })
    }

    /// Periodic `D`-dimensional box with linear size `l` on every axis.
    pub fn cubic(dim: usize, l: usize) -> Result<Self> {
        Self::hypercubic(&vec![l; dim])
    }

    pub fn chain(n: usize, boundary: Boundary) -> Result<Self> {
        Self::new(Geometry::Chain { n, boundary })
    }

    pub fn parallelogram(l1: usize, l2: usize, shear: usize) -> Result<Self> {
        Self::new(Geometry::Parallelogram { l1, l2, shear })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn num_sites(&self) -> usize {
        match &self.geometry {
            Geometry::FullyConnected { n } | Geometry::Chain { n, .. } => *n,
            Geometry::Hypercubic { sizes } => sizes.iter().product(),
            Geometry::Parallelogram { l1, l2, .. } => l1 * l2,
        }
    }

    /// Spatial dimension; the fully-connected graph is reported as 0.
    pub fn dimension(&self) -> usize {
        match &self.geometry {
            Geometry::FullyConnected { .. } => 0,
            Geometry::Hypercubic { sizes } => sizes.len(),
            Geometry::Chain { .. } => 1,
            Geometry::Parallelogram { .. } => 2,
        }
    }

    /// Number of components a displacement carries.
    pub fn displacement_rank(&self) -> usize {
        match &self.geometry {
            Geometry::FullyConnected { .. } | Geometry::Chain { .. } => 1,
            Geometry::Hypercubic { sizes } => sizes.len(),
            Geometry::Parallelogram { .. } => 2,
        }
    }

    /// Coordination number `Z`.
    pub fn connectivity(&self) -> usize {
        match &self.geometry {
            Geometry::FullyConnected { n } => n - 1,
            Geometry::Hypercubic { sizes } => 2 * sizes.len(),
            Geometry::Chain { .. } => 2,
            Geometry::Parallelogram { .. } => 4,
        }
    }

    /// True for geometries with translation invariance.
    pub fn is_translation_invariant(&self) -> bool {
        !matches!(
            self.geometry,
            Geometry::Chain {
                boundary: Boundary::Open,
                ..
            }
        )
    }

    /// Periodic box sizes for geometries that carry one (hypercubic and
    /// periodic chains).
    pub fn periodic_sizes(&self) -> Option<Vec<usize>> {
        match &self.geometry {
            Geometry::Hypercubic { sizes } => Some(sizes.clone()),
            Geometry::Chain {
                n,
                boundary: Boundary::Periodic,
            } => Some(vec![*n]),
            _ => None,
        }
    }

    pub fn wrap(&self, r: &Displacement) -> Displacement {
        match &self.geometry {
            Geometry::FullyConnected { n } => Displacement(
                r.0.iter().map(|&c| c.rem_euclid(*n as i64)).collect(),
            ),
            Geometry::Chain {
                boundary: Boundary::Open,
                ..
            } => r.clone(),
            Geometry::Parallelogram { l1, l2, shear } => {
                let (i, j) = canonical_cell(r.0[0], r.0[1], *l1, *l2, *shear);
                let (i, j) = (wrap_axis(i, *l1), j);
                Displacement(vec![i, j])
            }
            _ => {
                let sizes = self.periodic_sizes().expect("periodic geometry");
                Displacement(
                    r.0.iter()
                        .zip(&sizes)
                        .map(|(&c, &l)| wrap_axis(c, l))
                        .collect(),
                )
            }
        }
    }

    fn check(&self, r: &Displacement) -> Result<()> {
        let bad = |reason: &str| {
            Err(Error::InvalidDisplacement {
                components: r.0.clone(),
                reason: reason.to_string(),
            })
        };
        if r.0.len() != self.displacement_rank() {
            return bad("wrong number of components");
        }
        match &self.geometry {
            Geometry::FullyConnected { n } | Geometry::Chain { n, boundary: Boundary::Open } => {
                if r.0[0] < 0 || r.0[0] >= *n as i64 {
                    return bad("outside the site range");
                }
            }
            Geometry::Parallelogram { .. } => {
                if self.wrap(r) != *r {
                    return bad("outside the periodic cell");
                }
            }
            _ => {
                if self.wrap(r) != *r {
                    return bad("outside the periodic box");
                }
            }
        }
        Ok(())
    }

    /// Wrapped graph distance from the origin.
    pub fn norm(&self, r: &Displacement) -> u64 {
        match &self.geometry {
            Geometry::FullyConnected { n } => u64::from(r.0[0].rem_euclid(*n as i64) != 0),
            Geometry::Chain {
                boundary: Boundary::Open,
                ..
            } => r.0[0].unsigned_abs(),
            Geometry::Parallelogram { .. } => {
                // BFS distance on the small periodic graph
                let target = self.site_index(r);
                let n = self.num_sites();
                let adj = self.adjacency();
                let mut dist = vec![u64::MAX; n];
                dist[0] = 0;
                let mut queue = std::collections::VecDeque::from([0usize]);
                while let Some(s) = queue.pop_front() {
                    for &t in &adj[s] {
                        if dist[t] == u64::MAX {
                            dist[t] = dist[s] + 1;
                            queue.push_back(t);
                        }
                    }
                }
                dist[target]
            }
            _ => {
                let w = self.wrap(r);
                w.0.iter().map(|c| c.unsigned_abs()).sum()
            }
        }
    }

    /// All displacements at graph distance one from `r`, wrapped.
    pub fn neighbors(&self, r: &Displacement) -> Result<Vec<Displacement>> {
        self.check(r)?;
        let out = match &self.geometry {
            Geometry::FullyConnected { n } => (0..*n as i64)
                .filter(|&s| s != r.0[0])
                .map(Displacement::scalar)
                .collect(),
            Geometry::Chain {
                n,
                boundary: Boundary::Open,
            } => [r.0[0] - 1, r.0[0] + 1]
                .into_iter()
                .filter(|&s| s >= 0 && s < *n as i64)
                .map(Displacement::scalar)
                .collect(),
            Geometry::Parallelogram { .. } => {
                let s = self.site_index(r);
                let mut set = BTreeSet::new();
                for &t in &self.adjacency()[s] {
                    set.insert(self.site_displacement(t));
                }
                set.into_iter().collect()
            }
            _ => {
                let dim = r.0.len();
                let mut v = Vec::with_capacity(2 * dim);
                for axis in 0..dim {
                    for sign in [1, -1] {
                        let mut c = r.0.clone();
                        c[axis] += sign;
                        v.push(self.wrap(&Displacement(c)));
                    }
                }
                v
            }
        };
        Ok(out)
    }

    /// True iff `r` is a nearest-neighbor displacement; the zero displacement
    /// is rejected.
    pub fn is_nearest_neighbor(&self, r: &Displacement) -> Result<bool> {
        if r.0.len() != self.displacement_rank() {
            return Err(Error::InvalidDisplacement {
                components: r.0.clone(),
                reason: "wrong number of components".into(),
            });
        }
        let w = self.wrap(r);
        let zero = match &self.geometry {
            Geometry::Chain {
                boundary: Boundary::Open,
                ..
            } => false,
            _ => w.is_zero(),
        };
        if zero {
            return Err(Error::InvalidDisplacement {
                components: r.0.clone(),
                reason: "zero displacement has no correlator".into(),
            });
        }
        Ok(self.norm(&w) == 1)
    }

    /// Site coordinate of linear index `s` as a wrapped displacement from
    /// site 0.
    pub fn site_displacement(&self, s: usize) -> Displacement {
        match &self.geometry {
            Geometry::FullyConnected { .. } | Geometry::Chain { .. } => {
                self.wrap(&Displacement::scalar(s as i64))
            }
            Geometry::Parallelogram { l1, .. } => {
                self.wrap(&Displacement(vec![(s % l1) as i64, (s / l1) as i64]))
            }
            Geometry::Hypercubic { sizes } => {
                let mut rem = s;
                let mut c = Vec::with_capacity(sizes.len());
                for &l in sizes.iter().rev() {
                    c.push((rem % l) as i64);
                    rem /= l;
                }
                c.reverse();
                self.wrap(&Displacement(c))
            }
        }
    }

    /// Linear index of the site at displacement `r` from site 0.
    pub fn site_index(&self, r: &Displacement) -> usize {
        match &self.geometry {
            Geometry::FullyConnected { n } => r.0[0].rem_euclid(*n as i64) as usize,
            Geometry::Chain { n, .. } => r.0[0].rem_euclid(*n as i64) as usize,
            Geometry::Parallelogram { l1, l2, shear } => {
                let (i, j) = canonical_cell(r.0[0], r.0[1], *l1, *l2, *shear);
                (i as usize) + l1 * (j as usize)
            }
            Geometry::Hypercubic { sizes } => {
                let mut idx = 0usize;
                for (&c, &l) in r.0.iter().zip(sizes) {
                    idx = idx * l + c.rem_euclid(l as i64) as usize;
                }
                idx
            }
        }
    }

    /// Neighbor lists of every site (duplicates from wrapping removed).
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let n = self.num_sites();
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        match &self.geometry {
            Geometry::FullyConnected { n } => {
                for (s, a) in adj.iter_mut().enumerate() {
                    a.extend((0..*n).filter(|&t| t != s));
                }
            }
            Geometry::Chain { n, boundary } => {
                for s in 0..*n {
                    if s + 1 < *n {
                        adj[s].insert(s + 1);
                        adj[s + 1].insert(s);
                    } else if *boundary == Boundary::Periodic && *n > 1 {
                        adj[s].insert(0);
                        adj[0].insert(s);
                    }
                }
            }
            Geometry::Parallelogram { l1, l2, shear } => {
                for s in 0..n {
                    let (i, j) = ((s % l1) as i64, (s / l1) as i64);
                    for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                        let (a, b) = canonical_cell(i + di, j + dj, *l1, *l2, *shear);
                        let t = a as usize + l1 * b as usize;
                        if t != s {
                            adj[s].insert(t);
                        }
                    }
                }
            }
            Geometry::Hypercubic { .. } => {
                for s in 0..n {
                    let r = self.site_displacement(s);
                    for nb in self.neighbors(&r).expect("site displacement is in the box") {
                        let t = self.site_index(&nb);
                        if t != s {
                            adj[s].insert(t);
                        }
                    }
                }
            }
        }
        adj.into_iter().map(|a| a.into_iter().collect()).collect()
    }

    /// Unordered nearest-neighbor pairs `(i, j)` with `i < j`, each once.
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (s, a) in self.adjacency().iter().enumerate() {
            for &t in a {
                if s < t {
                    out.push((s, t));
                }
            }
        }
        out
    }
}

fn canonical_cell(i: i64, j: i64, l1: usize, l2: usize, shear: usize) -> (i64, i64) {
    let (l1, l2, shear) = (l1 as i64, l2 as i64, shear as i64);
    // (i, j) ~ (i + l1, j) ~ (i - shear, j + l2)
    let k = j.div_euclid(l2);
    let j = j - k * l2;
    let i = (i + k * shear).rem_euclid(l1);
    (i, j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(l: &LatticeSpec, v: Vec<Displacement>) -> BTreeSet<Displacement> {
        v.into_iter().map(|d| l.wrap(&d)).collect()
    }

    #[test]
    fn square_lattice_origin_neighbors() {
        let l = LatticeSpec::hypercubic(&[4, 4]).unwrap();
        let got = set(&l, l.neighbors(&Displacement::zero(2)).unwrap());
        let want = set(
            &l,
            vec![
                Displacement::new([1, 0]),
                Displacement::new([-1, 0]),
                Displacement::new([0, 1]),
                Displacement::new([0, -1]),
            ],
        );
        assert_eq!(got, want);
    }

    #[test]
    fn periodic_chain_neighbors() {
        let l = LatticeSpec::chain(4, Boundary::Periodic).unwrap();
        let got = set(&l, l.neighbors(&Displacement::scalar(1)).unwrap());
        let want = set(&l, vec![Displacement::scalar(0), Displacement::scalar(2)]);
        assert_eq!(got, want);
    }

    #[test]
    fn cubic_lattice_has_six_neighbors() {
        let l = LatticeSpec::hypercubic(&[4, 4, 4]).unwrap();
        let nb = l.neighbors(&Displacement::new([1, 1, 1])).unwrap();
        assert_eq!(nb.len(), 6);
        assert_eq!(set(&l, nb).len(), 6);
    }

    #[test]
    fn outside_box_is_rejected() {
        let l = LatticeSpec::hypercubic(&[4, 4]).unwrap();
        assert!(l.neighbors(&Displacement::new([3, 0])).is_err());
        assert!(l.neighbors(&Displacement::new([0])).is_err());
    }

    #[test]
    fn nearest_neighbor_identification() {
        let sq = LatticeSpec::hypercubic(&[4, 4]).unwrap();
        assert!(sq.is_nearest_neighbor(&Displacement::new([1, 0])).unwrap());
        assert!(!sq.is_nearest_neighbor(&Displacement::new([1, 1])).unwrap());
        assert!(sq.is_nearest_neighbor(&Displacement::new([0, 0])).is_err());
        let ring = LatticeSpec::chain(4, Boundary::Periodic).unwrap();
        assert!(ring.is_nearest_neighbor(&Displacement::scalar(3)).unwrap());
        assert!(!ring.is_nearest_neighbor(&Displacement::scalar(2)).unwrap());
        let fc = LatticeSpec::fully_connected(5).unwrap();
        assert!(fc.is_nearest_neighbor(&Displacement::scalar(3)).unwrap());
    }

    #[test]
    fn small_lattices_are_rejected() {
        assert!(LatticeSpec::hypercubic(&[2, 4]).is_err());
        assert!(LatticeSpec::fully_connected(0).is_err());
        assert!(LatticeSpec::fully_connected(1).unwrap().bonds().is_empty());
        assert_eq!(LatticeSpec::fully_connected(7).unwrap().connectivity(), 6);
        assert_eq!(LatticeSpec::cubic(3, 5).unwrap().connectivity(), 6);
    }

    #[test]
    fn bonds_count_each_pair_once() {
        assert_eq!(LatticeSpec::chain(2, Boundary::Periodic).unwrap().bonds(), vec![(0, 1)]);
        assert_eq!(LatticeSpec::chain(2, Boundary::Open).unwrap().bonds(), vec![(0, 1)]);
        assert_eq!(LatticeSpec::fully_connected(2).unwrap().bonds(), vec![(0, 1)]);
        assert_eq!(LatticeSpec::fully_connected(5).unwrap().bonds().len(), 10);
        assert_eq!(LatticeSpec::chain(8, Boundary::Periodic).unwrap().bonds().len(), 8);
        assert_eq!(LatticeSpec::chain(8, Boundary::Open).unwrap().bonds().len(), 7);
        assert_eq!(LatticeSpec::cubic(2, 3).unwrap().bonds().len(), 18);
    }

    #[test]
    fn parallelogram_is_four_regular() {
        for (l1, l2, shear) in [(4, 2, 1), (3, 3, 0), (5, 2, 2), (3, 3, 1)] {
            let p = LatticeSpec::parallelogram(l1, l2, shear).unwrap();
            let adj = p.adjacency();
            assert_eq!(adj.len(), l1 * l2);
            for (s, a) in adj.iter().enumerate() {
                assert_eq!(a.len(), 4, "site {s} of {l1}x{l2}+{shear}: {a:?}");
                for &t in a {
                    assert!(adj[t].contains(&s));
                }
            }
            assert_eq!(p.bonds().len(), 2 * l1 * l2);
        }
    }

    fn hypercubic_strategy() -> impl Strategy<Value = (Vec<usize>, Vec<i64>)> {
        prop::collection::vec(3usize..9, 1..4).prop_flat_map(|sizes| {
            let comps: Vec<_> = sizes.iter().map(|&l| -(l as i64) * 2..(l as i64) * 2).collect();
            (Just(sizes), comps)
        })
    }

    proptest! {
        #[test]
        fn wrap_is_idempotent((sizes, c) in hypercubic_strategy()) {
            let l = LatticeSpec::hypercubic(&sizes).unwrap();
            let once = l.wrap(&Displacement(c));
            prop_assert_eq!(l.wrap(&once), once);
        }

        #[test]
        fn hypercubic_neighbor_count_and_symmetry((sizes, c) in hypercubic_strategy()) {
            let l = LatticeSpec::hypercubic(&sizes).unwrap();
            let r = l.wrap(&Displacement(c));
            let nb = l.neighbors(&r).unwrap();
            prop_assert_eq!(nb.len(), 2 * sizes.len());
            for q in &nb {
                prop_assert!(l.neighbors(q).unwrap().contains(&r));
            }
        }
    }
}
