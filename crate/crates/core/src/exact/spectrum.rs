//! Low-lying Liouvillian eigenvalues by dense Schur decomposition.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::liouvillian::Liouvillian;
use super::permutation::ReducedLiouvillian;
use crate::error::{Error, Result};

pub(crate) fn sorted_eigenvalues(m: DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    let scale = m.camax().max(1.0);
    let schur = nalgebra::Schur::try_new(m, 1e-15 * scale, 1000 * n.max(10)).ok_or_else(|| {
        Error::NoConvergence(format!("Schur iteration on a {n}x{n} generator"))
    })?;
    let (_, t) = schur.unpack();
    let below = (0..n)
        .flat_map(|j| (j + 1..n).map(move |i| (i, j)))
        .map(|ij| t[ij].norm())
        .fold(0.0, f64::max);
    if below > 1e-8 * scale {
        return Err(Error::NoConvergence(format!(
            "Schur form left subdiagonal residual {below:e}"
        )));
    }
    let mut ev: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();
    ev.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    Ok(ev)
}

fn edge(ev: Vec<Complex64>, count: usize) -> Result<Vec<Complex64>> {
    if count < 2 {
        return Err(Error::InvalidParams("spectrum edge needs count >= 2".into()));
    }
    Ok(ev.into_iter().take(count).collect())
}

/// The `count` eigenvalues with the largest real parts, in descending order;
/// entry 1 is the asymptotic decay rate `lambda_E`.
pub fn liouvillian_spectrum_edge(l: &Liouvillian, count: usize) -> Result<Vec<Complex64>> {
    if count < 2 {
        return Err(Error::InvalidParams("spectrum edge needs count >= 2".into()));
    }
    edge(sorted_eigenvalues(l.dense()?)?, count)
}

impl ReducedLiouvillian {
    /// Spectrum edge restricted to the permutation-symmetric sector.
    pub fn spectrum_edge(&self, count: usize) -> Result<Vec<Complex64>> {
        if count < 2 {
            return Err(Error::InvalidParams("spectrum edge needs count >= 2".into()));
        }
        edge(self.spectrum()?, count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::build_liouvillian;
    use crate::lattice::LatticeSpec;
    use crate::model::ModelParams;

    #[test]
    fn single_spin_spectrum() {
        let l = build_liouvillian(
            &LatticeSpec::fully_connected(1).unwrap(),
            &ModelParams::xy(0.7, 0.0, 0.0),
        )
        .unwrap();
        let ev = liouvillian_spectrum_edge(&l, 4).unwrap();
        let want = [
            Complex64::new(0.0, 0.0),
            Complex64::new(-0.5, 0.7),
            Complex64::new(-0.5, -0.7),
            Complex64::new(-1.0, 0.0),
        ];
        for (a, b) in ev.iter().zip(&want) {
            assert!((a - b).norm() < 1e-12, "{ev:?}");
        }
    }

    #[test]
    fn leading_eigenvalue_is_zero() {
        let l = build_liouvillian(
            &LatticeSpec::fully_connected(3).unwrap(),
            &ModelParams::xy(0.4, 0.5, 0.8),
        )
        .unwrap();
        let ev = liouvillian_spectrum_edge(&l, 3).unwrap();
        assert!(ev[0].norm() < 1e-9);
        assert!(ev.iter().all(|z| z.re <= 1e-10));
        assert!(liouvillian_spectrum_edge(&l, 1).is_err());
    }
}
