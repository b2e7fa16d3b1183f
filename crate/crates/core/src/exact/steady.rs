//! Stationary states of the full-space Liouvillian.
//!
//! Up to [`SteadyOptions::dense_max_sites`] the dense superoperator is
//! factorized directly and its kernel dimension read off the singular
//! values. Larger lattices solve `L0^-1 L rho + w Tr(rho) = w`, where `L0` is
//! the no-jump part of `L` and `w` a reference state, with restarted GMRES.
//! Uniqueness there is checked by repeating the solve from an unrelated
//! start and reference state.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::linalg::{gmres, NoJumpInverse};
use super::liouvillian::Liouvillian;
use super::{DensityMatrix, C0, C1};
use crate::error::{Error, Result};
use crate::model::BlochVector;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteadyOptions {
    /// target for `max |L[rho]|`
    pub residual_tol: f64,
    /// singular values below `rank_tol * sigma_max` count as zero
    pub rank_tol: f64,
    pub dense_max_sites: usize,
    pub max_iterations: usize,
    pub check_uniqueness: bool,
    /// two Krylov solutions closer than this count as the same state
    pub agreement_tol: f64,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        SteadyOptions {
            residual_tol: 1e-10,
            rank_tol: 1e-10,
            dense_max_sites: 4,
            max_iterations: 4000,
            check_uniqueness: true,
            agreement_tol: 1e-7,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteadyMethod {
    DenseLu,
    Krylov,
}

#[derive(Clone, Debug)]
pub struct SteadyState {
    pub rho: DensityMatrix,
    /// `max |L[rho]|`
    pub residual: f64,
    pub null_dimension: usize,
    pub method: SteadyMethod,
    pub iterations: usize,
}

pub fn steady_state(l: &Liouvillian) -> Result<DensityMatrix> {
    Ok(steady_state_with(l, &SteadyOptions::default(), None)?.rho)
}

/// `guess` seeds the Krylov iteration, typically the previous point of a sweep.
pub fn steady_state_with(
    l: &Liouvillian,
    opts: &SteadyOptions,
    guess: Option<&DensityMatrix>,
) -> Result<SteadyState> {
    if l.n_sites() <= opts.dense_max_sites {
        dense_steady(l, opts)
    } else {
        krylov_steady(l, opts, guess)
    }
}

/// Number of singular values of `m` below `rel_tol * sigma_max`.
pub(crate) fn nullity(m: &DMatrix<Complex64>, rel_tol: f64) -> usize {
    let sv = m.singular_values();
    let top = sv.max();
    sv.iter().filter(|&&s| s <= rel_tol * top).count()
}

fn dense_steady(l: &Liouvillian, opts: &SteadyOptions) -> Result<SteadyState> {
    let d = l.dim();
    let mut m = l.dense()?;
    let null = nullity(&m, opts.rank_tol);
    if null != 1 {
        return Err(Error::Degenerate { dimension: null });
    }
    // the (0,0) population equation is implied by the others; swap in Tr rho = 1
    m.row_mut(0).fill(C0);
    for i in 0..d {
        m[(0, i + i * d)] = C1;
    }
    let mut rhs = DVector::zeros(d * d);
    rhs[0] = C1;
    let lu = m.lu();
    let x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::NoConvergence("singular bordered Liouvillian".into()))?;
    let data = DensityMatrix::normalized(DMatrix::from_column_slice(d, d, x.as_slice()));
    let rho = DensityMatrix::from_parts(l.n_sites(), data);
    let residual = l.residual(&rho);
    if residual > opts.residual_tol {
        return Err(Error::NoConvergence(format!(
            "dense steady state residual {residual:e}"
        )));
    }
    Ok(SteadyState {
        rho,
        residual,
        null_dimension: 1,
        method: SteadyMethod::DenseLu,
        iterations: 0,
    })
}

struct KrylovSolve {
    rho: DensityMatrix,
    residual: f64,
    iterations: usize,
}

fn restart_length(len: usize) -> usize {
    (((1usize << 28) / (16 * len)).max(12)).min(60)
}

fn krylov_solve(
    l: &Liouvillian,
    inv: &NoJumpInverse,
    reference: &DensityMatrix,
    start: &DensityMatrix,
    opts: &SteadyOptions,
) -> Result<KrylovSolve> {
    let d = l.dim();
    let len = d * d;
    let w = reference.as_slice();
    let mut jx = vec![C0; len];
    let op = |x: &[Complex64], out: &mut [Complex64], jx: &mut [Complex64]| {
        l.apply_jumps(x, jx);
        inv.apply(jx, out);
        let tr: Complex64 = (0..d).map(|i| x[i + i * d]).sum();
        for ((o, xi), wi) in out.iter_mut().zip(x).zip(w) {
            *o += xi + wi * tr;
        }
    };
    let mut x = start.as_slice().to_vec();
    let mut iterations = 0;
    let mut tol = 1e-3 * opts.residual_tol;
    let mut out = vec![C0; len];
    loop {
        let left = opts.max_iterations.saturating_sub(iterations);
        let g = gmres(
            |v, o| op(v, o, &mut jx),
            w,
            &mut x,
            restart_length(len),
            tol,
            left,
        );
        iterations += g.iterations;
        let data = DensityMatrix::normalized(DMatrix::from_column_slice(d, d, &x));
        x.copy_from_slice(data.as_slice());
        l.apply(&x, &mut out);
        let residual = out.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if residual <= opts.residual_tol {
            return Ok(KrylovSolve {
                rho: DensityMatrix::from_parts(l.n_sites(), data),
                residual,
                iterations,
            });
        }
        if iterations >= opts.max_iterations || tol < 1e-22 {
            return Err(Error::NoConvergence(format!(
                "Krylov steady state stalled at residual {residual:e} after {iterations} iterations"
            )));
        }
        if g.residual <= tol {
            tol *= 0.1;
        }
    }
}

fn krylov_steady(
    l: &Liouvillian,
    opts: &SteadyOptions,
    guess: Option<&DensityMatrix>,
) -> Result<SteadyState> {
    let n = l.n_sites();
    let inv = NoJumpInverse::new(l)?;
    let mixed = DensityMatrix::maximally_mixed(n)?;
    let start = match guess {
        Some(g) if g.n_sites() == n => g.clone(),
        Some(_) => {
            return Err(Error::InvalidParams("guess has the wrong number of sites".into()))
        }
        None => mixed.clone(),
    };
    let first = krylov_solve(l, &inv, &mixed, &start, opts)?;
    let mut iterations = first.iterations;
    if opts.check_uniqueness {
        let other = DensityMatrix::product(&vec![BlochVector::new(0.35, -0.25, 0.2); n])?;
        let second = krylov_solve(l, &inv, &other, &other, opts)?;
        iterations += second.iterations;
        let gap = first.rho.distance(&second.rho);
        if gap > opts.agreement_tol {
            return Err(Error::Degenerate { dimension: 2 });
        }
    }
    Ok(SteadyState {
        rho: first.rho,
        residual: first.residual,
        null_dimension: 1,
        method: SteadyMethod::Krylov,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::build_liouvillian;
    use crate::lattice::{Boundary, LatticeSpec};
    use crate::model::ModelParams;

    #[test]
    fn single_spin_matches_bloch_fixed_point() {
        let l = build_liouvillian(
            &LatticeSpec::fully_connected(1).unwrap(),
            &ModelParams::xy(0.0, 0.5, 0.0),
        )
        .unwrap();
        let rho = steady_state(&l).unwrap();
        let b = rho.site_bloch(0);
        assert!(b.max_abs_diff(BlochVector::new(0.0, 2.0 / 3.0, -1.0 / 3.0)) < 1e-12, "{b:?}");
    }

    #[test]
    fn dark_state_without_drive() {
        let l = build_liouvillian(
            &LatticeSpec::fully_connected(1).unwrap(),
            &ModelParams::xy(0.3, 0.0, 0.0),
        )
        .unwrap();
        let rho = steady_state(&l).unwrap();
        assert!((rho.matrix()[(0, 0)] - C1).norm() < 1e-14);
        assert!(rho.matrix()[(1, 1)].norm() < 1e-14);
    }

    #[test]
    fn krylov_agrees_with_dense() {
        let lat = LatticeSpec::chain(4, Boundary::Periodic).unwrap();
        let l = build_liouvillian(&lat, &ModelParams::xy(0.8, 0.5, 0.7)).unwrap();
        let dense = steady_state_with(&l, &SteadyOptions::default(), None).unwrap();
        assert_eq!(dense.method, SteadyMethod::DenseLu);
        let opts = SteadyOptions {
            dense_max_sites: 0,
            ..Default::default()
        };
        let kr = steady_state_with(&l, &opts, None).unwrap();
        assert_eq!(kr.method, SteadyMethod::Krylov);
        assert!(kr.residual < 1e-10);
        assert!(kr.rho.distance(&dense.rho) < 1e-9);
    }

    #[test]
    fn nullity_counts_zero_singular_values() {
        let mut m = DMatrix::<Complex64>::identity(5, 5);
        m[(1, 1)] = C0;
        m[(3, 3)] = Complex64::new(1e-13, 0.0);
        assert_eq!(nullity(&m, 1e-10), 2);
    }
}
