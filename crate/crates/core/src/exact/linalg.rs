//! Dense helpers for the Krylov steady-state solver.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::liouvillian::Liouvillian;
use super::{C0, CI};
use crate::error::{Error, Result};

/// Complex matrix stored as two real matrices so products go through the
/// blocked real kernel.
#[derive(Clone, Debug)]
pub(crate) struct Split {
    re: DMatrix<f64>,
    im: DMatrix<f64>,
}

impl Split {
    pub fn from_complex(m: &DMatrix<Complex64>) -> Self {
        Split {
            re: m.map(|z| z.re),
            im: m.map(|z| z.im),
        }
    }

    pub fn from_slice(d: usize, v: &[Complex64]) -> Self {
        Split {
            re: DMatrix::from_iterator(d, d, v.iter().map(|z| z.re)),
            im: DMatrix::from_iterator(d, d, v.iter().map(|z| z.im)),
        }
    }

    pub fn adjoint(&self) -> Self {
        Split {
            re: self.re.transpose(),
            im: -self.im.transpose(),
        }
    }

    pub fn mul(&self, o: &Split) -> Split {
        Split {
            re: &self.re * &o.re - &self.im * &o.im,
            im: &self.re * &o.im + &self.im * &o.re,
        }
    }

    pub fn write_to(&self, out: &mut [Complex64]) {
        for ((o, r), i) in out.iter_mut().zip(self.re.iter()).zip(self.im.iter()) {
            *o = Complex64::new(*r, *i);
        }
    }

    pub fn to_complex(&self) -> DMatrix<Complex64> {
        self.re.zip_map(&self.im, Complex64::new)
    }
}

/// Inverse of the no-jump generator `X -> -i (H_eff X - X H_eff^dag)` with
/// `H_eff = H - i Gamma/2 sum_s P_up,s`, solved as a triangular Sylvester
/// equation in the Schur basis of `H_eff`.
pub(crate) struct NoJumpInverse {
    d: usize,
    q: Split,
    qh: Split,
    t: DMatrix<Complex64>,
}

impl NoJumpInverse {
    pub fn new(l: &Liouvillian) -> Result<Self> {
        let d = l.dim();
        let g = l.gamma();
        let mut h = l.hamiltonian().map(|v| Complex64::new(v, 0.0));
        for (i, u) in l.up_counts().iter().enumerate() {
            h[(i, i)] -= CI * (0.5 * g * u);
        }
        let schur = nalgebra::Schur::try_new(h, 1e-15, 100 * d.max(10))
            .ok_or_else(|| Error::NoConvergence("Schur decomposition of H_eff".into()))?;
        let (q, t) = schur.unpack();
        for i in 0..d {
            for j in 0..i {
                if t[(i, j)].norm() > 1e-10 * (1.0 + t[(i, i)].norm()) {
                    return Err(Error::NoConvergence(
                        "Schur form of H_eff is not triangular".into(),
                    ));
                }
            }
        }
        let q = Split::from_complex(&q);
        let qh = q.adjoint();
        Ok(NoJumpInverse { d, q, qh, t })
    }

    pub fn apply(&self, b: &[Complex64], out: &mut [Complex64]) {
        let d = self.d;
        let ib: Vec<Complex64> = b.iter().map(|z| CI * z).collect();
        let c = self.qh.mul(&Split::from_slice(d, &ib)).mul(&self.q).to_complex();
        let mut y = c;
        let t = &self.t;
        // T Y - Y T^dag = C, columns from the last one down
        for j in (0..d).rev() {
            let (head, tail) = y.as_mut_slice().split_at_mut((j + 1) * d);
            let yj = &mut head[j * d..];
            for k in j + 1..d {
                let coef = t[(j, k)].conj();
                if coef == C0 {
                    continue;
                }
                let yk = &tail[(k - j - 1) * d..(k - j) * d];
                for (a, b) in yj.iter_mut().zip(yk) {
                    *a += b * coef;
                }
            }
            let shift = t[(j, j)].conj();
            for i in (0..d).rev() {
                let v = yj[i] / (t[(i, i)] - shift);
                yj[i] = v;
                let col = &t.as_slice()[i * d..i * d + i];
                for (a, tv) in yj[..i].iter_mut().zip(col) {
                    *a -= tv * v;
                }
            }
        }
        let x = self.q.mul(&Split::from_complex(&y)).mul(&self.qh);
        x.write_to(out);
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) struct GmresOutcome {
    pub iterations: usize,
    pub residual: f64,
}

/// Restarted GMRES for `A x = b`, stopping at `|A x - b| <= tol`.
pub(crate) fn gmres<F>(
    mut apply: F,
    b: &[Complex64],
    x: &mut [Complex64],
    restart: usize,
    tol: f64,
    max_iter: usize,
) -> GmresOutcome
where
    F: FnMut(&[Complex64], &mut [Complex64]),
{
    let n = b.len();
    let mut total = 0;
    let mut w = vec![C0; n];
    loop {
        apply(x, &mut w);
        let r: Vec<Complex64> = b.iter().zip(&w).map(|(bi, wi)| bi - wi).collect();
        let beta = norm(&r);
        if beta <= tol || total >= max_iter {
            return GmresOutcome {
                iterations: total,
                residual: beta,
            };
        }
        let m = restart.min(max_iter - total).max(1);
        let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|z| z / beta).collect());
        let mut h = DMatrix::<Complex64>::zeros(m + 1, m);
        let mut cs = vec![0.0; m];
        let mut sn = vec![C0; m];
        let mut g = DVector::<Complex64>::zeros(m + 1);
        g[0] = Complex64::new(beta, 0.0);
        let mut k_used = 0;
        for k in 0..m {
            apply(&basis[k], &mut w);
            total += 1;
            for (i, v) in basis.iter().enumerate() {
                let hik = dot(v, &w);
                h[(i, k)] = hik;
                for (a, b) in w.iter_mut().zip(v) {
                    *a -= b * hik;
                }
            }
            let hn = norm(&w);
            h[(k + 1, k)] = Complex64::new(hn, 0.0);
            for i in 0..k {
                let t = h[(i, k)] * cs[i] + sn[i] * h[(i + 1, k)];
                h[(i + 1, k)] = -sn[i].conj() * h[(i, k)] + h[(i + 1, k)] * cs[i];
                h[(i, k)] = t;
            }
            let (a, bb) = (h[(k, k)], h[(k + 1, k)]);
            let r = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if a.norm() == 0.0 {
                cs[k] = 0.0;
                sn[k] = Complex64::new(1.0, 0.0);
            } else {
                cs[k] = a.norm() / r;
                sn[k] = a / a.norm() * bb.conj() / r;
            }
            h[(k, k)] = h[(k, k)] * cs[k] + sn[k] * h[(k + 1, k)];
            h[(k + 1, k)] = C0;
            g[k + 1] = -sn[k].conj() * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            if g[k + 1].norm() <= tol || hn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|z| z / hn).collect());
        }
        let mut y = vec![C0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[(i, j)] * y[j];
            }
            y[i] = s / h[(i, i)];
        }
        for (j, yj) in y.iter().enumerate() {
            for (a, v) in x.iter_mut().zip(&basis[j]) {
                *a += v * yj;
            }
        }
    }
}
