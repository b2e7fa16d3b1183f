//! Brute-force Heisenberg-picture derivation of one- and two-site moment
//! equations on a finite lattice. Pauli strings are multiplied symbolically,
//! every resulting expectation value is reduced with the two-point closure,
//! and nothing is shared with the library's hand-written term formulas.

use std::collections::BTreeMap;

use num_complex::Complex64;

use ddspin::mfqf::{CorrelatorField, Sym};
use ddspin::{BlochVector, Displacement, InteractionKind, LatticeSpec, ModelParams};

/// site -> axis (0 = x, 1 = y, 2 = z)
pub type PauliString = BTreeMap<usize, usize>;

fn levi(a: usize, b: usize, c: usize) -> f64 {
    match (a, b, c) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

/// `s1 s2` as a phase times a string.
fn multiply(s1: &PauliString, s2: &PauliString) -> (Complex64, PauliString) {
    let mut phase = Complex64::new(1.0, 0.0);
    let mut out = s1.clone();
    for (&site, &b) in s2 {
        match out.get(&site).copied() {
            None => {
                out.insert(site, b);
            }
            Some(a) if a == b => {
                out.remove(&site);
            }
            Some(a) => {
                let c = 3 - a - b;
                phase *= Complex64::new(0.0, levi(a, b, c));
                out.insert(site, c);
            }
        }
    }
    (phase, out)
}

pub struct Oracle {
    lattice: LatticeSpec,
    hamiltonian: Vec<(f64, PauliString)>,
    gamma: f64,
}

impl Oracle {
    pub fn new(lattice: &LatticeSpec, p: &ModelParams) -> Self {
        let mut h = Vec::new();
        for s in 0..lattice.num_sites() {
            h.push((p.delta / 2.0, PauliString::from([(s, 2)])));
            h.push((p.omega, PauliString::from([(s, 0)])));
        }
        for (i, j) in lattice.bonds() {
            match p.kind {
                InteractionKind::Xy => {
                    h.push((-p.coupling / 2.0, PauliString::from([(i, 0), (j, 0)])));
                    h.push((-p.coupling / 2.0, PauliString::from([(i, 1), (j, 1)])));
                }
                InteractionKind::Ising => {
                    h.push((-p.coupling / 2.0, PauliString::from([(i, 2), (j, 2)])));
                }
            }
        }
        Oracle {
            lattice: lattice.clone(),
            hamiltonian: h,
            gamma: p.gamma,
        }
    }

    /// `d op / dt` in the Heisenberg picture as a list of weighted strings.
    fn derivative(&self, op: &PauliString) -> Vec<(Complex64, PauliString)> {
        let mut out = Vec::new();
        let i = Complex64::new(0.0, 1.0);
        for (c, h) in &self.hamiltonian {
            if !h.keys().any(|s| op.contains_key(s)) {
                continue;
            }
            let (p1, s1) = multiply(h, op);
            let (p2, s2) = multiply(op, h);
            out.push((i * *c * p1, s1));
            out.push((-i * *c * p2, s2));
        }
        for (&site, &axis) in op {
            if axis == 2 {
                let mut rest = op.clone();
                rest.remove(&site);
                out.push((Complex64::new(-self.gamma, 0.0), rest));
                out.push((Complex64::new(-self.gamma, 0.0), op.clone()));
            } else {
                out.push((Complex64::new(-self.gamma / 2.0, 0.0), op.clone()));
            }
        }
        out
    }

    fn theta(&self, mu: BlochVector, eta: &CorrelatorField, s1: usize, a: usize, s2: usize, b: usize) -> f64 {
        let r1 = self.lattice.site_displacement(s1);
        let r2 = self.lattice.site_displacement(s2);
        let d = match self.lattice.geometry() {
            ddspin::Geometry::FullyConnected { .. } => Displacement::scalar(1),
            _ => {
                let c: Vec<i64> = r1.0.iter().zip(&r2.0).map(|(x, y)| x - y).collect();
                self.lattice.wrap(&Displacement(c))
            }
        };
        let e = eta.get(&d).expect("nonzero displacement");
        let idx = match (a.min(b), a.max(b)) {
            (0, 0) => 0,
            (1, 1) => 1,
            (2, 2) => 2,
            (0, 1) => 3,
            (0, 2) => 4,
            _ => 5,
        };
        let m = mu.to_array();
        e[idx] + m[a] * m[b]
    }

    fn expect(&self, mu: BlochVector, eta: &CorrelatorField, s: &PauliString) -> f64 {
        let m = mu.to_array();
        let items: Vec<(usize, usize)> = s.iter().map(|(&k, &v)| (k, v)).collect();
        match items.as_slice() {
            [] => 1.0,
            [(_, a)] => m[*a],
            [(s1, a), (s2, b)] => self.theta(mu, eta, *s1, *a, *s2, *b),
            [(s1, a), (s2, b), (s3, c)] => {
                m[*a] * self.theta(mu, eta, *s2, *b, *s3, *c)
                    + m[*b] * self.theta(mu, eta, *s1, *a, *s3, *c)
                    + m[*c] * self.theta(mu, eta, *s1, *a, *s2, *b)
                    - 2.0 * m[*a] * m[*b] * m[*c]
            }
            _ => panic!("closure never needs four-site strings"),
        }
    }

    fn rate(&self, mu: BlochVector, eta: &CorrelatorField, op: &PauliString) -> f64 {
        let v: Complex64 = self
            .derivative(op)
            .iter()
            .map(|(c, s)| c * self.expect(mu, eta, s))
            .sum();
        assert!(v.im.abs() < 1e-12, "imaginary rate {v}");
        v.re
    }

    /// `d mu / dt` at site 0.
    pub fn mu_rate(&self, mu: BlochVector, eta: &CorrelatorField) -> BlochVector {
        let r = |a| self.rate(mu, eta, &PauliString::from([(0, a)]));
        BlochVector::new(r(0), r(1), r(2))
    }

    /// `d theta_ab(R) / dt` for the site at displacement `r` and site 0,
    /// packed `(xx, yy, zz, xy, xz, yz)`.
    pub fn theta_rate(&self, mu: BlochVector, eta: &CorrelatorField, r: &Displacement) -> Sym {
        let site = self.lattice.site_index(r);
        assert_ne!(site, 0);
        let pairs = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];
        pairs.map(|(a, b)| self.rate(mu, eta, &PauliString::from([(site, a), (0, b)])))
    }
}

/// Random correlator field invariant under the lattice point group and
/// under transposition, plus a random Bloch vector inside the ball.
pub fn random_symmetric_state(
    lattice: &LatticeSpec,
    rng: &mut impl rand::Rng,
    scale: f64,
) -> (BlochVector, CorrelatorField) {
    let mut field = CorrelatorField::zeros(lattice).unwrap();
    let classes = field.stencil().classes().to_vec();
    let raw: Vec<[f64; 9]> = classes
        .iter()
        .map(|_| std::array::from_fn(|_| rng.gen_range(-scale..scale)))
        .collect();
    let rank = lattice.displacement_rank();
    let sizes = lattice.periodic_sizes();
    let perms = permutations(rank);
    for (k, r) in classes.iter().enumerate() {
        let mut acc = [0.0; 9];
        let mut count = 0.0;
        for perm in &perms {
            if let Some(sz) = &sizes {
                if (0..rank).any(|i| sz[i] != sz[perm[i]]) {
                    continue;
                }
            }
            for signs in 0..(1u32 << rank) {
                let c: Vec<i64> = (0..rank)
                    .map(|i| {
                        let s = if signs >> i & 1 == 1 { -1 } else { 1 };
                        s * r.0[perm[i]]
                    })
                    .collect();
                let img = lattice.wrap(&Displacement(c));
                let j = field.stencil().class_of(&img).unwrap();
                for i in 0..9 {
                    acc[i] += raw[j][i];
                }
                count += 1.0;
            }
        }
        let m: [f64; 9] = acc.map(|v| v / count);
        // symmetrize the 3x3 block (row-major)
        let s = |a: usize, b: usize| 0.5 * (m[3 * a + b] + m[3 * b + a]);
        field.values_mut()[k] = [s(0, 0), s(1, 1), s(2, 2), s(0, 1), s(0, 2), s(1, 2)];
    }
    let mu = loop {
        let v = BlochVector::new(
            rng.gen_range(-0.7..0.7),
            rng.gen_range(-0.7..0.7),
            rng.gen_range(-0.7..0.7),
        );
        if v.norm_sqr() < 0.9 {
            break v;
        }
    };
    (mu, field)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}
