use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Boundary, Displacement, Geometry, LatticeSpec};
use crate::model::BlochVector;

/// Symmetric 3x3 matrix packed as `(xx, yy, zz, xy, xz, yz)`.
pub type Sym = [f64; 6];

pub const XX: usize = 0;
pub const YY: usize = 1;
pub const ZZ: usize = 2;
pub const XY: usize = 3;
pub const XZ: usize = 4;
pub const YZ: usize = 5;

/// Independent component of a symmetric correlator matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pair {
    Xx,
    Yy,
    Zz,
    Xy,
    Xz,
    Yz,
}

impl Pair {
    pub const ALL: [Pair; 6] = [Pair::Xx, Pair::Yy, Pair::Zz, Pair::Xy, Pair::Xz, Pair::Yz];

    /// Slot in a packed [`Sym`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn axes(self) -> (usize, usize) {
        match self {
            Pair::Xx => (0, 0),
            Pair::Yy => (1, 1),
            Pair::Zz => (2, 2),
            Pair::Xy => (0, 1),
            Pair::Xz => (0, 2),
            Pair::Yz => (1, 2),
        }
    }

    pub fn label(self) -> &'static str {
        ["xx", "yy", "zz", "xy", "xz", "yz"][self.index()]
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Pair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Pair::ALL
            .into_iter()
            .find(|p| p.label() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidParams(format!("unknown correlator pair '{s}'")))
    }
}

pub fn sym_to_matrix(s: &Sym) -> Matrix3<f64> {
    Matrix3::new(
        s[XX], s[XY], s[XZ], //
        s[XY], s[YY], s[YZ], //
        s[XZ], s[YZ], s[ZZ],
    )
}

/// Packs the upper triangle of `m`.
pub fn matrix_to_sym(m: &Matrix3<f64>) -> Sym {
    [m[(0, 0)], m[(1, 1)], m[(2, 2)], m[(0, 1)], m[(0, 2)], m[(1, 2)]]
}

/// `mu_a mu_b` in packed form.
pub fn outer(mu: BlochVector) -> Sym {
    let (x, y, z) = (mu.x, mu.y, mu.z);
    [x * x, y * y, z * z, x * y, x * z, y * z]
}

/// Displacement classes of a translation-invariant lattice together with
/// the neighbor table the closure needs.
///
/// Hypercubic lattices and periodic chains have one class per nonzero site
/// of the periodic box. The fully-connected graph has a single class.
#[derive(Debug)]
pub struct Stencil {
    lattice: LatticeSpec,
    classes: Vec<Displacement>,
    nbr_ptr: Vec<usize>,
    nbr_idx: Vec<usize>,
    nbr_w: Vec<f64>,
    nbr_wsum: Vec<f64>,
    nn: Vec<bool>,
    unit: usize,
    nn_classes: Vec<usize>,
}

impl Stencil {
    pub fn new(lattice: &LatticeSpec) -> Result<Self> {
        let fc = match lattice.geometry() {
            Geometry::FullyConnected { n } => Some(*n),
            Geometry::Hypercubic { .. }
            | Geometry::Chain {
                boundary: Boundary::Periodic,
                ..
            } => None,
            other => {
                return Err(Error::InvalidLattice(format!(
                    "correlator closure needs a periodic hypercubic, periodic chain or \
                     fully-connected lattice, got {other:?}"
                )))
            }
        };
        if let Some(n) = fc {
            if n < 3 {
                return Err(Error::InvalidLattice(
                    "fully-connected correlator closure needs at least 3 sites".into(),
                ));
            }
            return Ok(Stencil {
                lattice: lattice.clone(),
                classes: vec![Displacement::scalar(1)],
                nbr_ptr: vec![0, 1],
                nbr_idx: vec![0],
                nbr_w: vec![(n - 2) as f64],
                nbr_wsum: vec![(n - 2) as f64],
                nn: vec![true],
                unit: 0,
                nn_classes: vec![0],
            });
        }
        let n = lattice.num_sites();
        let classes: Vec<Displacement> = (1..n).map(|s| lattice.site_displacement(s)).collect();
        let mut nbr_ptr = Vec::with_capacity(classes.len() + 1);
        let mut nbr_idx = Vec::with_capacity(classes.len() * 2 * lattice.dimension());
        let mut nn = Vec::with_capacity(classes.len());
        nbr_ptr.push(0);
        for r in &classes {
            for q in lattice.neighbors(r)? {
                if !q.is_zero() {
                    nbr_idx.push(lattice.site_index(&q) - 1);
                }
            }
            nbr_ptr.push(nbr_idx.len());
            nn.push(lattice.is_nearest_neighbor(r)?);
        }
        let nbr_w = vec![1.0; nbr_idx.len()];
        let nbr_wsum = nbr_ptr.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
        let unit = lattice.site_index(&lattice.wrap(&Displacement::unit(
            lattice.displacement_rank(),
            0,
            1,
        ))) - 1;
        let nn_classes = nn
            .iter()
            .enumerate()
            .filter_map(|(k, &b)| b.then_some(k))
            .collect();
        Ok(Stencil {
            lattice: lattice.clone(),
            classes,
            nbr_ptr,
            nbr_idx,
            nbr_w,
            nbr_wsum,
            nn,
            unit,
            nn_classes,
        })
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[Displacement] {
        &self.classes
    }

    /// Coordination number `Z`.
    pub fn connectivity(&self) -> f64 {
        self.lattice.connectivity() as f64
    }

    /// Class of the `+x` unit displacement, whose correlator stands in for
    /// the nearest-neighbor value in the closure.
    pub fn unit_class(&self) -> usize {
        self.unit
    }

    pub fn nearest_neighbor_classes(&self) -> &[usize] {
        &self.nn_classes
    }

    pub fn is_nn(&self, k: usize) -> bool {
        self.nn[k]
    }

    /// `(class, weight)` pairs of the displacements one step from class `k`,
    /// the origin excluded.
    pub fn neighbors(&self, k: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.nbr_ptr[k]..self.nbr_ptr[k + 1];
        self.nbr_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.nbr_w[r].iter().copied())
    }

    /// Total neighbor weight of class `k`.
    pub fn neighbor_weight(&self, k: usize) -> f64 {
        self.nbr_wsum[k]
    }

    /// Class index of a nonzero displacement.
    pub fn class_of(&self, r: &Displacement) -> Result<usize> {
        if r.0.len() != self.lattice.displacement_rank() {
            return Err(Error::InvalidDisplacement {
                components: r.0.clone(),
                reason: "wrong number of components".into(),
            });
        }
        let w = self.lattice.wrap(r);
        if w.is_zero() {
            return Err(Error::InvalidDisplacement {
                components: r.0.clone(),
                reason: "zero displacement has no correlator".into(),
            });
        }
        if w != *r {
            return Err(Error::InvalidDisplacement {
                components: r.0.clone(),
                reason: "outside the periodic box".into(),
            });
        }
        match self.lattice.geometry() {
            Geometry::FullyConnected { .. } => Ok(0),
            _ => Ok(self.lattice.site_index(&w) - 1),
        }
    }
}

/// Translation-invariant connected correlators `eta_ab(R)` for `R != 0`.
#[derive(Clone, Debug)]
pub struct CorrelatorField {
    stencil: Arc<Stencil>,
    eta: Vec<Sym>,
}

impl PartialEq for CorrelatorField {
    fn eq(&self, other: &Self) -> bool {
        self.stencil.lattice == other.stencil.lattice && self.eta == other.eta
    }
}

impl CorrelatorField {
    pub fn zeros(lattice: &LatticeSpec) -> Result<Self> {
        Ok(Self::with_stencil(Arc::new(Stencil::new(lattice)?)))
    }

    pub fn with_stencil(stencil: Arc<Stencil>) -> Self {
        let n = stencil.len();
        CorrelatorField {
            stencil,
            eta: vec![[0.0; 6]; n],
        }
    }

    pub fn from_values(stencil: Arc<Stencil>, eta: Vec<Sym>) -> Result<Self> {
        if eta.len() != stencil.len() {
            return Err(Error::InvalidParams(format!(
                "field needs {} displacement classes, got {}",
                stencil.len(),
                eta.len()
            )));
        }
        Ok(CorrelatorField { stencil, eta })
    }

    pub fn stencil(&self) -> &Arc<Stencil> {
        &self.stencil
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.stencil.lattice
    }

    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    pub fn values(&self) -> &[Sym] {
        &self.eta
    }

    pub fn values_mut(&mut self) -> &mut [Sym] {
        &mut self.eta
    }

    pub fn class(&self, k: usize) -> &Sym {
        &self.eta[k]
    }

    pub fn get(&self, r: &Displacement) -> Result<Sym> {
        Ok(self.eta[self.stencil.class_of(r)?])
    }

    pub fn set(&mut self, r: &Displacement, value: Sym) -> Result<()> {
        let k = self.stencil.class_of(r)?;
        self.eta[k] = value;
        Ok(())
    }

    pub fn matrix(&self, r: &Displacement) -> Result<Matrix3<f64>> {
        Ok(sym_to_matrix(&self.get(r)?))
    }

    /// Unsubtracted moment `theta = eta + mu_a mu_b` at displacement `r`.
    pub fn theta(&self, mu: BlochVector, r: &Displacement) -> Result<Sym> {
        let e = self.get(r)?;
        let m = outer(mu);
        Ok(std::array::from_fn(|i| e[i] + m[i]))
    }

    /// Nearest-neighbor correlator read from the `+x` class.
    pub fn nearest(&self) -> &Sym {
        &self.eta[self.stencil.unit]
    }

    pub fn max_abs(&self) -> f64 {
        self.eta
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Largest `|theta_ab(R)|` over the field.
    pub fn max_abs_theta(&self, mu: BlochVector) -> f64 {
        let m = outer(mu);
        self.eta
            .iter()
            .flat_map(|s| s.iter().zip(m.iter()).map(|(e, mm)| (e + mm).abs()))
            .fold(0.0f64, f64::max)
    }

    /// Spread of the correlator over the nearest-neighbor classes.
    pub fn isotropy_defect(&self) -> f64 {
        let u = &self.eta[self.stencil.unit];
        self.stencil
            .nn_classes
            .iter()
            .flat_map(|&k| self.eta[k].iter().zip(u.iter()).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max)
    }

    /// Largest `|eta(R) - eta(-R)|`.
    pub fn inversion_defect(&self) -> f64 {
        let st = &self.stencil;
        let mut worst = 0.0f64;
        for (k, r) in st.classes.iter().enumerate() {
            let back = st.lattice.wrap(&r.neg());
            let j = match st.class_of(&back) {
                Ok(j) => j,
                Err(_) => continue,
            };
            for c in 0..6 {
                worst = worst.max((self.eta[k][c] - self.eta[j][c]).abs());
            }
        }
        worst
    }
}
