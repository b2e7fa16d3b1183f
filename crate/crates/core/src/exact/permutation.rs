//! Permutation-symmetric sector of the fully connected model.
//!
//! A symmetric operator is `sum_n c_n S_n`, where `S_n` sums every tensor
//! product of single-site units `e_00, e_01, e_10, e_11` (`e_ab = |a><b|`)
//! holding `n = (n_00, n_01, n_10, n_11)` of each, so the sector has
//! dimension `C(N+3, 3)`. Entry `(i, j)` of the full matrix equals `c_n` for
//! the `n` counting the per-site bit pairs of `i` and `j`.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::distribution::MagnetizationDistribution;
use super::steady::nullity;
use super::{axis_frame, pauli, DensityMatrix, C0, C1, CI};
use crate::error::{Error, Result};
use crate::lattice::{Geometry, LatticeSpec};
use crate::model::{Axis, BlochVector, InteractionKind, ModelParams};

/// Single-site superoperator on the unit basis, `t[l][k]` maps `e_k -> e_l`.
type Local = [[Complex64; 4]; 4];

/// Unit index of `|a><b|`.
fn unit(a: usize, b: usize) -> usize {
    2 * a + b
}

fn left(m: &[[Complex64; 2]; 2]) -> Local {
    let mut t = [[C0; 4]; 4];
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                t[unit(c, b)][unit(a, b)] += m[c][a];
            }
        }
    }
    t
}

fn right(m: &[[Complex64; 2]; 2]) -> Local {
    let mut t = [[C0; 4]; 4];
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                t[unit(a, c)][unit(a, b)] += m[b][c];
            }
        }
    }
    t
}

fn scaled(t: &Local, s: Complex64) -> Local {
    t.map(|row| row.map(|z| z * s))
}

fn add(a: &Local, b: &Local) -> Local {
    let mut out = *a;
    for l in 0..4 {
        for k in 0..4 {
            out[l][k] += b[l][k];
        }
    }
    out
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

#[derive(Debug)]
struct Basis {
    n_sites: usize,
    states: Vec<[usize; 4]>,
    index: HashMap<[usize; 4], usize>,
}

impl Basis {
    fn new(n: usize) -> Self {
        let mut states = Vec::new();
        for a in 0..=n {
            for b in 0..=n - a {
                for c in 0..=n - a - b {
                    states.push([a, b, c, n - a - b - c]);
                }
            }
        }
        let index = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        Basis {
            n_sites: n,
            states,
            index,
        }
    }

    fn multinomial(&self, n: &[usize; 4]) -> f64 {
        factorial(self.n_sites) / n.iter().map(|&k| factorial(k)).product::<f64>()
    }
}

/// Largest fully connected lattice the reduced solver accepts; the sector
/// dimension is `C(N+3, 3)` and the generator is stored densely.
pub const REDUCED_MAX_SITES: usize = 24;

/// Generator of the permutation-symmetric sector, stored densely.
#[derive(Clone, Debug)]
pub struct ReducedLiouvillian {
    basis: Arc<Basis>,
    params: ModelParams,
    matrix: DMatrix<Complex64>,
}

impl ReducedLiouvillian {
    pub fn new(n_sites: usize, p: &ModelParams) -> Result<Self> {
        p.validate()?;
        if n_sites == 0 || n_sites > REDUCED_MAX_SITES {
            return Err(Error::Capacity(format!("{n_sites} sites in the reduced solver")));
        }
        let basis = Arc::new(Basis::new(n_sites));
        let dim = basis.states.len();
        let mut matrix = DMatrix::zeros(dim, dim);

        let h1 = {
            let (sz, sx) = (pauli(Axis::Z), pauli(Axis::X));
            let mut h = [[C0; 2]; 2];
            for a in 0..2 {
                for b in 0..2 {
                    h[a][b] = sz[a][b] * (0.5 * p.delta) + sx[a][b] * p.omega;
                }
            }
            h
        };
        let g = p.gamma;
        let mut single = add(&scaled(&left(&h1), -CI), &scaled(&right(&h1), CI));
        // Gamma (s- e s+ - {P_up, e}/2)
        single[unit(0, 0)][unit(1, 1)] += C1 * g;
        for a in 0..2 {
            for b in 0..2 {
                single[unit(a, b)][unit(a, b)] -= C1 * (0.5 * g * (a + b) as f64);
            }
        }

        // ordered-pair products (coefficient, first site, second site)
        let splus = [[C0, C0], [C1, C0]];
        let sminus = [[C0, C1], [C0, C0]];
        let pairs: Vec<(Complex64, Local, Local)> = match p.kind {
            // -J sum_{i != j} s+_i s-_j
            InteractionKind::Xy => vec![
                (CI * p.coupling, left(&splus), left(&sminus)),
                (-CI * p.coupling, right(&splus), right(&sminus)),
            ],
            // -J/4 sum_{i != j} sz_i sz_j
            InteractionKind::Ising => {
                let sz = pauli(Axis::Z);
                vec![
                    (CI * (0.25 * p.coupling), left(&sz), left(&sz)),
                    (-CI * (0.25 * p.coupling), right(&sz), right(&sz)),
                ]
            }
        };

        for (col, n) in basis.states.iter().enumerate() {
            for k in 0..4 {
                if n[k] == 0 {
                    continue;
                }
                for l in 0..4 {
                    let t = single[l][k];
                    if t == C0 {
                        continue;
                    }
                    let mut m = *n;
                    m[k] -= 1;
                    m[l] += 1;
                    let row = basis.index[&m];
                    matrix[(row, col)] += t * m[l] as f64;
                }
            }
            if p.coupling == 0.0 {
                continue;
            }
            for (coef, t1, t2) in &pairs {
                for k1 in 0..4 {
                    for k2 in 0..4 {
                        let need2 = 1 + usize::from(k1 == k2);
                        if n[k1] == 0 || n[k2] < need2 {
                            continue;
                        }
                        for l1 in 0..4 {
                            if t1[l1][k1] == C0 {
                                continue;
                            }
                            for l2 in 0..4 {
                                if t2[l2][k2] == C0 {
                                    continue;
                                }
                                let mut m = *n;
                                m[k1] -= 1;
                                m[k2] -= 1;
                                m[l1] += 1;
                                m[l2] += 1;
                                let mult = m[l1] as f64 * (m[l2] - usize::from(l1 == l2)) as f64;
                                let row = basis.index[&m];
                                matrix[(row, col)] += coef * t1[l1][k1] * t2[l2][k2] * mult;
                            }
                        }
                    }
                }
            }
        }
        Ok(ReducedLiouvillian {
            basis,
            params: *p,
            matrix,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.basis.n_sites
    }

    /// `C(N+3, 3)`.
    pub fn dim(&self) -> usize {
        self.basis.states.len()
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    /// Coefficients of `Tr S_n`.
    fn trace_row(&self) -> Vec<f64> {
        self.basis
            .states
            .iter()
            .map(|n| {
                if n[1] == 0 && n[2] == 0 {
                    self.basis.multinomial(n)
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Unique stationary state; errors if the kernel is degenerate.
    pub fn steady_state(&self) -> Result<ReducedState> {
        let null = nullity(&self.matrix, 1e-10);
        if null != 1 {
            return Err(Error::Degenerate { dimension: null });
        }
        let dim = self.dim();
        let tr = self.trace_row();
        let mut m = self.matrix.clone();
        // the equation for the all-down population is implied by the rest
        let replace = self.basis.index[&[self.n_sites(), 0, 0, 0]];
        for c in 0..dim {
            m[(replace, c)] = Complex64::new(tr[c], 0.0);
        }
        let mut rhs = DVector::zeros(dim);
        rhs[replace] = C1;
        let c = m
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::NoConvergence("singular reduced Liouvillian".into()))?;
        let state = ReducedState {
            basis: self.basis.clone(),
            coeffs: c,
        };
        Ok(state.normalized())
    }

    /// `max |L[rho]|` in full-space entries.
    pub fn residual(&self, state: &ReducedState) -> f64 {
        (&self.matrix * &state.coeffs).camax()
    }

    /// All eigenvalues of the symmetric sector, largest real part first.
    pub fn spectrum(&self) -> Result<Vec<Complex64>> {
        super::spectrum::sorted_eigenvalues(self.matrix.clone())
    }
}

/// Permutation-symmetric density matrix in the `S_n` expansion.
#[derive(Clone, Debug)]
pub struct ReducedState {
    basis: Arc<Basis>,
    coeffs: DVector<Complex64>,
}

impl ReducedState {
    pub fn n_sites(&self) -> usize {
        self.basis.n_sites
    }

    pub fn coefficients(&self) -> &DVector<Complex64> {
        &self.coeffs
    }

    pub fn trace(&self) -> Complex64 {
        self.basis
            .states
            .iter()
            .zip(self.coeffs.iter())
            .filter(|(n, _)| n[1] == 0 && n[2] == 0)
            .map(|(n, c)| c * self.basis.multinomial(n))
            .sum()
    }

    /// Hermitian part (`c_n -> conj c_{n*}`, with `n*` swapping 01 and 10)
    /// at unit trace.
    fn normalized(mut self) -> Self {
        let c = self.coeffs.clone();
        for (i, n) in self.basis.states.iter().enumerate() {
            let j = self.basis.index[&[n[0], n[2], n[1], n[3]]];
            self.coeffs[i] = 0.5 * (c[i] + c[j].conj());
        }
        let tr = self.trace();
        self.coeffs /= tr;
        self
    }

    /// Distribution of `M_axis` from `sum_n c_n multinomial(n) prod_k
    /// (Tr e_k A(z))^n_k` with `A(z) = z P_+ + P_-`.
    pub fn distribution(&self, axis: Axis) -> MagnetizationDistribution {
        let n = self.n_sites();
        let u = axis_frame(axis);
        // Tr(e_ab A) = A_ba, split into z^0 and z^1 parts
        let mut lin = [[C0; 2]; 4];
        for a in 0..2 {
            for b in 0..2 {
                let proj = |col: usize| u[b][col] * u[a][col].conj();
                lin[unit(a, b)] = [proj(0), proj(1)];
            }
        }
        let mut acc = vec![C0; n + 1];
        for (state, c) in self.basis.states.iter().zip(self.coeffs.iter()) {
            if *c == C0 {
                continue;
            }
            let mut poly = vec![C0; n + 1];
            poly[0] = C1;
            let mut deg = 0;
            for k in 0..4 {
                for _ in 0..state[k] {
                    for d in (0..=deg).rev() {
                        let v = poly[d];
                        poly[d + 1] += v * lin[k][1];
                        poly[d] = v * lin[k][0];
                    }
                    deg += 1;
                }
            }
            let w = c * self.basis.multinomial(state);
            for (a, p) in acc.iter_mut().zip(&poly) {
                *a += w * p;
            }
        }
        // coefficient of z^u has u spins up along the axis, m = (2u - N)/N
        let p: Vec<f64> = (0..=n).map(|k| acc[n - k].re).collect();
        MagnetizationDistribution::from_raw(p)
    }

    pub fn bloch(&self) -> BlochVector {
        BlochVector::new(
            self.distribution(Axis::X).mean(),
            self.distribution(Axis::Y).mean(),
            self.distribution(Axis::Z).mean(),
        )
    }

    /// Expand into the full `2^N x 2^N` matrix.
    pub fn to_full(&self) -> Result<DensityMatrix> {
        let n = self.n_sites();
        if n > 12 {
            return Err(Error::Capacity(format!("{n} sites is too large to expand")));
        }
        let d = 1usize << n;
        let data = DMatrix::from_fn(d, d, |i, j| {
            let mut cnt = [0usize; 4];
            for s in 0..n {
                cnt[unit(i >> s & 1, j >> s & 1)] += 1;
            }
            self.coeffs[self.basis.index[&cnt]]
        });
        DensityMatrix::new(n, data)
    }
}

/// Stationary state of a fully connected lattice in its symmetric sector.
pub fn fc_permutation_reduced_solver(lattice: &LatticeSpec, p: &ModelParams) -> Result<ReducedState> {
    match lattice.geometry() {
        Geometry::FullyConnected { n } => ReducedLiouvillian::new(*n, p)?.steady_state(),
        other => Err(Error::InvalidLattice(format!(
            "permutation-reduced solver needs a fully connected lattice, got {other:?}"
        ))),
    }
}
