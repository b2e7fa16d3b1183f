//! Matrix-free Lindblad generator `L[rho] = -i[H, rho] + D[rho]` with
//! `D[rho] = Gamma sum_s (s-_s rho s+_s - {P_up,s, rho}/2)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use super::{DensityMatrix, C0, DEFAULT_MAX_SITES};
use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;
use crate::model::{InteractionKind, ModelParams};

/// Largest lattice for which the dense superoperator may be assembled.
pub const DENSE_MAX_SITES: usize = 5;

#[derive(Clone, Debug)]
pub struct Liouvillian {
    n_sites: usize,
    lattice: LatticeSpec,
    params: ModelParams,
    /// real symmetric Hamiltonian, CSR
    h_ptr: Vec<usize>,
    h_idx: Vec<usize>,
    h_val: Vec<f64>,
    ups: Vec<f64>,
}

pub fn build_liouvillian(lattice: &LatticeSpec, p: &ModelParams) -> Result<Liouvillian> {
    Liouvillian::with_capacity(lattice, p, DEFAULT_MAX_SITES)
}

impl Liouvillian {
    pub fn with_capacity(lattice: &LatticeSpec, p: &ModelParams, max_sites: usize) -> Result<Self> {
        p.validate()?;
        let n = lattice.num_sites();
        if n > max_sites {
            return Err(Error::Capacity(format!(
                "{n} sites exceed the exact-solver limit of {max_sites}"
            )));
        }
        let d = 1usize << n;
        let bonds = lattice.bonds();
        let mut h_ptr = Vec::with_capacity(d + 1);
        let mut h_idx = Vec::new();
        let mut h_val = Vec::new();
        let mut ups = Vec::with_capacity(d);
        h_ptr.push(0);
        for i in 0..d {
            let spin = |s: usize| if i >> s & 1 == 1 { 1.0 } else { -1.0 };
            let mut diag = (0..n).map(|s| 0.5 * p.delta * spin(s)).sum::<f64>();
            let mut row: Vec<(usize, f64)> = Vec::new();
            if p.kind == InteractionKind::Ising {
                diag -= bonds
                    .iter()
                    .map(|&(a, b)| 0.5 * p.coupling * spin(a) * spin(b))
                    .sum::<f64>();
            }
            row.push((i, diag));
            for s in 0..n {
                if p.omega != 0.0 {
                    row.push((i ^ (1 << s), p.omega));
                }
            }
            if p.kind == InteractionKind::Xy && p.coupling != 0.0 {
                for &(a, b) in &bonds {
                    if (i >> a & 1) != (i >> b & 1) {
                        // -J/2 (sx sx + sy sy) = -J (s+ s- + s- s+)
                        row.push((i ^ (1 << a) ^ (1 << b), -p.coupling));
                    }
                }
            }
            row.sort_by_key(|e| e.0);
            for (k, v) in row {
                if let Some(last) = h_idx.last() {
                    if *last == k && h_idx.len() > h_ptr[i] {
                        *h_val.last_mut().unwrap() += v;
                        continue;
                    }
                }
                h_idx.push(k);
                h_val.push(v);
            }
            h_ptr.push(h_idx.len());
            ups.push(i.count_ones() as f64);
        }
        Ok(Liouvillian {
            n_sites: n,
            lattice: lattice.clone(),
            params: *p,
            h_ptr,
            h_idx,
            h_val,
            ups,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    /// Hilbert-space dimension `2^N`.
    pub fn dim(&self) -> usize {
        1 << self.n_sites
    }

    /// Superoperator dimension `4^N`.
    pub fn superdim(&self) -> usize {
        self.dim() * self.dim()
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn gamma(&self) -> f64 {
        self.params.gamma
    }

    pub(crate) fn up_counts(&self) -> &[f64] {
        &self.ups
    }

    pub fn hamiltonian(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut h = DMatrix::zeros(d, d);
        for i in 0..d {
            for e in self.h_ptr[i]..self.h_ptr[i + 1] {
                h[(i, self.h_idx[e])] += self.h_val[e];
            }
        }
        h
    }

    /// Largest row sum of `|H|`, a bound on the spectral radius of `H`.
    pub fn hamiltonian_bound(&self) -> f64 {
        (0..self.dim())
            .map(|i| {
                self.h_val[self.h_ptr[i]..self.h_ptr[i + 1]]
                    .iter()
                    .map(|v| v.abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// `out = L[rho]` on column-stacked matrices.
    pub fn apply(&self, rho: &[Complex64], out: &mut [Complex64]) {
        self.apply_parts(rho, out, true, true);
    }

    /// Quantum-jump part `Gamma sum_s s-_s rho s+_s` only.
    pub(crate) fn apply_jumps(&self, rho: &[Complex64], out: &mut [Complex64]) {
        self.apply_parts(rho, out, false, true);
    }

    fn apply_parts(&self, rho: &[Complex64], out: &mut [Complex64], coherent: bool, jumps: bool) {
        let d = self.dim();
        assert_eq!(rho.len(), d * d);
        assert_eq!(out.len(), d * d);
        let gamma = self.params.gamma;
        let n = self.n_sites;
        let column = |j: usize, col: &mut [Complex64]| {
            col.fill(C0);
            if coherent {
                let rj = &rho[j * d..(j + 1) * d];
                // -i H rho, and the anticommutator with the up projectors
                for i in 0..d {
                    let mut acc = C0;
                    for e in self.h_ptr[i]..self.h_ptr[i + 1] {
                        acc += rj[self.h_idx[e]] * self.h_val[e];
                    }
                    let decay = -0.5 * gamma * (self.ups[i] + self.ups[j]);
                    col[i] = Complex64::new(acc.im, -acc.re) + rj[i] * decay;
                }
                // +i rho H: column j of rho H is sum_k H_kj rho[:, k]
                for e in self.h_ptr[j]..self.h_ptr[j + 1] {
                    let k = self.h_idx[e];
                    let h = self.h_val[e];
                    let rk = &rho[k * d..(k + 1) * d];
                    for (c, r) in col.iter_mut().zip(rk) {
                        *c += Complex64::new(-r.im * h, r.re * h);
                    }
                }
            }
            if jumps {
                for s in 0..n {
                    let bit = 1usize << s;
                    if j & bit != 0 {
                        continue;
                    }
                    let jj = j | bit;
                    let src = &rho[jj * d..(jj + 1) * d];
                    for i in (0..d).filter(|i| i & bit == 0) {
                        col[i] += src[i | bit] * gamma;
                    }
                }
            }
        };
        if d >= 64 {
            out.par_chunks_mut(d).enumerate().for_each(|(j, col)| column(j, col));
        } else {
            out.chunks_mut(d).enumerate().for_each(|(j, col)| column(j, col));
        }
    }

    pub fn apply_matrix(&self, rho: &DensityMatrix) -> DMatrix<Complex64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        self.apply(rho.as_slice(), out.as_mut_slice());
        out
    }

    /// `max |L[rho]|` entrywise.
    pub fn residual(&self, rho: &DensityMatrix) -> f64 {
        self.apply_matrix(rho).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Dense `4^N x 4^N` superoperator in the column-stacking convention.
    pub fn dense(&self) -> Result<DMatrix<Complex64>> {
        if self.n_sites > DENSE_MAX_SITES {
            return Err(Error::Capacity(format!(
                "dense superoperator limited to {DENSE_MAX_SITES} sites"
            )));
        }
        let m = self.superdim();
        let mut out = DMatrix::zeros(m, m);
        let mut e = vec![C0; m];
        let mut col = vec![C0; m];
        for c in 0..m {
            e[c] = Complex64::new(1.0, 0.0);
            self.apply(&e, &mut col);
            out.column_mut(c).copy_from_slice(&col);
            e[c] = C0;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Boundary;

    fn random_matrix(d: usize, seed: u64) -> Vec<Complex64> {
        let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        (0..d * d).map(|_| Complex64::new(next(), next())).collect()
    }

    #[test]
    fn single_spin_bloch_equations() {
        let p = ModelParams::xy(0.7, 0.4, 0.0);
        let l = build_liouvillian(&LatticeSpec::fully_connected(1).unwrap(), &p).unwrap();
        let rho = DensityMatrix::product(&[crate::BlochVector::new(0.2, -0.3, 0.4)]).unwrap();
        let dr = DensityMatrix::from_parts(1, l.apply_matrix(&rho));
        let got = crate::BlochVector::new(
            dr.site_expectation(0, crate::Axis::X),
            dr.site_expectation(0, crate::Axis::Y),
            dr.site_expectation(0, crate::Axis::Z),
        );
        let want = crate::meanfield::mf_rhs(rho.site_bloch(0), &p, 0.0);
        assert!(got.max_abs_diff(want) < 1e-14, "{got:?} vs {want:?}");
    }

    #[test]
    fn trace_is_conserved() {
        let lat = LatticeSpec::chain(4, Boundary::Periodic).unwrap();
        for (k, p) in [ModelParams::xy(0.3, 0.8, 1.1), ModelParams::ising(-0.5, 0.2, 0.9)]
            .iter()
            .enumerate()
        {
            let l = build_liouvillian(&lat, p).unwrap();
            let rho = random_matrix(16, k as u64 + 3);
            let mut out = vec![C0; 256];
            l.apply(&rho, &mut out);
            let tr: Complex64 = (0..16).map(|i| out[i + 16 * i]).sum();
            assert!(tr.norm() < 1e-12);
        }
    }

    #[test]
    fn dense_matches_matrix_free() {
        let lat = LatticeSpec::chain(3, Boundary::Open).unwrap();
        let l = build_liouvillian(&lat, &ModelParams::xy(0.3, 0.5, 0.8)).unwrap();
        let dense = l.dense().unwrap();
        let v = random_matrix(8, 11);
        let mut out = vec![C0; 64];
        l.apply(&v, &mut out);
        let w = &dense * nalgebra::DVector::from_vec(v);
        for (a, b) in out.iter().zip(w.iter()) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn capacity_is_enforced() {
        let lat = LatticeSpec::fully_connected(11).unwrap();
        let err = build_liouvillian(&lat, &ModelParams::xy(0.0, 0.5, 0.1)).unwrap_err();
        assert!(matches!(err, Error::Capacity(_)));
    }

    #[test]
    fn hamiltonian_is_symmetric() {
        let lat = LatticeSpec::fully_connected(4).unwrap();
        let h = build_liouvillian(&lat, &ModelParams::xy(0.4, 0.5, 0.7))
            .unwrap()
            .hamiltonian();
        assert!((&h - h.transpose()).amax() < 1e-15);
    }
}
