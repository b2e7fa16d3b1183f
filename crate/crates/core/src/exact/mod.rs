//! Exact Lindblad dynamics on small lattices.
//!
//! Density matrices live in the z-product basis with site `s` on bit `s` of
//! the basis index, bit value 1 meaning spin up. Vectorization is column
//! stacking: entry `(i, j)` sits at `i + j * 2^N`, which is also the storage
//! order of the nalgebra matrices used here.

pub mod distribution;
pub mod evolve;
pub mod liouvillian;
mod linalg;
pub mod permutation;
pub mod spectrum;
pub mod steady;

pub use distribution::{bimodality_index, magnetization_distribution, MagnetizationDistribution};
pub use evolve::{evolve_rho, RhoTrajectory, RhoTrajectoryFailure};
pub use liouvillian::{build_liouvillian, Liouvillian};
pub use permutation::{fc_permutation_reduced_solver, REDUCED_MAX_SITES, ReducedLiouvillian, ReducedState};
pub use spectrum::liouvillian_spectrum_edge;
pub use steady::{steady_state, steady_state_with, SteadyMethod, SteadyOptions, SteadyState};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{Axis, BlochVector};

/// Largest lattice accepted by [`build_liouvillian`].
pub const DEFAULT_MAX_SITES: usize = 10;

pub(crate) const C0: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const C1: Complex64 = Complex64::new(1.0, 0.0);
pub(crate) const CI: Complex64 = Complex64::new(0.0, 1.0);

/// Single-site Pauli matrix in the `(down, up)` basis.
pub(crate) fn pauli(axis: Axis) -> [[Complex64; 2]; 2] {
    match axis {
        Axis::X => [[C0, C1], [C1, C0]],
        Axis::Y => [[C0, CI], [-CI, C0]],
        Axis::Z => [[-C1, C0], [C0, C1]],
    }
}

/// Columns are the `-1` and `+1` eigenvectors of the Pauli matrix along
/// `axis`, so the second column plays the role of "up".
pub(crate) fn axis_frame(axis: Axis) -> [[Complex64; 2]; 2] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    match axis {
        Axis::Z => [[C1, C0], [C0, C1]],
        Axis::X => {
            let a = Complex64::new(h, 0.0);
            [[a, a], [-a, a]]
        }
        Axis::Y => {
            let a = Complex64::new(h, 0.0);
            let b = Complex64::new(0.0, h);
            [[-b, b], [a, a]]
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    n_sites: usize,
    data: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn new(n_sites: usize, data: DMatrix<Complex64>) -> Result<Self> {
        if n_sites == 0 || n_sites > 30 {
            return Err(Error::Capacity(format!("{n_sites} sites")));
        }
        let d = 1usize << n_sites;
        if data.nrows() != d || data.ncols() != d {
            return Err(Error::InvalidParams(format!(
                "density matrix is {}x{}, expected {d}x{d}",
                data.nrows(),
                data.ncols()
            )));
        }
        Ok(DensityMatrix { n_sites, data })
    }

    /// Product state with the given Bloch vector on every site.
    pub fn product(states: &[BlochVector]) -> Result<Self> {
        let n = states.len();
        if n == 0 || n > 16 {
            return Err(Error::Capacity(format!("{n} sites in a product state")));
        }
        let local: Vec<[[Complex64; 2]; 2]> = states
            .iter()
            .map(|b| {
                let [x, y, z] = b.to_array();
                // (I + x sx + y sy + z sz) / 2 in (down, up) order
                [
                    [Complex64::new((1.0 - z) / 2.0, 0.0), Complex64::new(x / 2.0, y / 2.0)],
                    [Complex64::new(x / 2.0, -y / 2.0), Complex64::new((1.0 + z) / 2.0, 0.0)],
                ]
            })
            .collect();
        let d = 1usize << n;
        let data = DMatrix::from_fn(d, d, |i, j| {
            local
                .iter()
                .enumerate()
                .map(|(s, m)| m[i >> s & 1][j >> s & 1])
                .product()
        });
        Ok(DensityMatrix { n_sites: n, data })
    }

    pub fn all_down(n_sites: usize) -> Result<Self> {
        Self::product(&vec![BlochVector::down(); n_sites])
    }

    pub fn maximally_mixed(n_sites: usize) -> Result<Self> {
        Self::product(&vec![BlochVector::new(0.0, 0.0, 0.0); n_sites])
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.data
    }

    /// Column-stacked entries.
    pub fn as_slice(&self) -> &[Complex64] {
        self.data.as_slice()
    }

    pub fn trace(&self) -> Complex64 {
        self.data.trace()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for j in 0..d {
            for i in 0..=j {
                worst = worst.max((self.data[(i, j)] - self.data[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.data + self.data.adjoint()) * Complex64::new(0.5, 0.0);
        h.symmetric_eigenvalues().min()
    }

    /// Hermitian, unit trace and positive up to `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let herm = self.hermiticity_defect();
        let tr = self.trace();
        if herm > tol || (tr - C1).norm() > tol {
            return Err(Error::InvalidParams(format!(
                "not a density matrix (hermiticity defect {herm:e}, trace {tr})"
            )));
        }
        let low = self.min_eigenvalue();
        if low < -tol.max(1e-8) {
            return Err(Error::InvalidParams(format!("negative eigenvalue {low:e}")));
        }
        Ok(())
    }

    /// `Tr(rho sigma^a_s)`.
    pub fn site_expectation(&self, site: usize, axis: Axis) -> f64 {
        let d = self.dim();
        let p = pauli(axis);
        let mut acc = C0;
        for i in 0..d {
            let b = i >> site & 1;
            match axis {
                Axis::Z => acc += self.data[(i, i)] * p[b][b],
                _ => {
                    let k = i ^ (1 << site);
                    // Tr(rho P) = sum_i rho_{i,k} P_{k,i}
                    acc += self.data[(i, k)] * p[1 - b][b];
                }
            }
        }
        acc.re
    }

    pub fn site_bloch(&self, site: usize) -> BlochVector {
        BlochVector::new(
            self.site_expectation(site, Axis::X),
            self.site_expectation(site, Axis::Y),
            self.site_expectation(site, Axis::Z),
        )
    }

    /// Site-averaged Bloch vector.
    pub fn mean_bloch(&self) -> BlochVector {
        let n = self.n_sites as f64;
        let mut a = [0.0; 3];
        for s in 0..self.n_sites {
            let b = self.site_bloch(s).to_array();
            for k in 0..3 {
                a[k] += b[k] / n;
            }
        }
        BlochVector::from_array(a)
    }

    /// Frobenius distance.
    pub fn distance(&self, other: &DensityMatrix) -> f64 {
        (&self.data - &other.data).norm()
    }

    pub(crate) fn from_parts(n_sites: usize, data: DMatrix<Complex64>) -> Self {
        DensityMatrix { n_sites, data }
    }

    /// Hermitian part rescaled to unit trace.
    pub(crate) fn normalized(mut data: DMatrix<Complex64>) -> DMatrix<Complex64> {
        let d = data.nrows();
        for j in 0..d {
            for i in 0..j {
                let v = 0.5 * (data[(i, j)] + data[(j, i)].conj());
                data[(i, j)] = v;
                data[(j, i)] = v.conj();
            }
            data[(j, j)] = Complex64::new(data[(j, j)].re, 0.0);
        }
        let tr = data.trace().re;
        data /= Complex64::new(tr, 0.0);
        data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_state_recovers_bloch_vectors() {
        let states = [
            BlochVector::new(0.3, -0.2, 0.5),
            BlochVector::new(-0.6, 0.1, -0.7),
            BlochVector::down(),
        ];
        let rho = DensityMatrix::product(&states).unwrap();
        rho.validate(1e-12).unwrap();
        for (s, b) in states.iter().enumerate() {
            assert!(rho.site_bloch(s).max_abs_diff(*b) < 1e-14);
        }
    }

    #[test]
    fn down_state_is_basis_state_zero() {
        let rho = DensityMatrix::all_down(3).unwrap();
        assert_eq!(rho.matrix()[(0, 0)], C1);
        assert!((rho.matrix().norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn axis_frames_diagonalize_paulis() {
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            let p = pauli(axis);
            let v = axis_frame(axis);
            for (col, ev) in [(0, -1.0), (1, 1.0)] {
                for r in 0..2 {
                    let pv = p[r][0] * v[0][col] + p[r][1] * v[1][col];
                    assert!((pv - v[r][col] * ev).norm() < 1e-15, "{axis:?}");
                }
            }
        }
    }

    #[test]
    fn rejects_wrong_shape() {
        assert!(DensityMatrix::new(2, DMatrix::zeros(3, 3)).is_err());
    }
}
