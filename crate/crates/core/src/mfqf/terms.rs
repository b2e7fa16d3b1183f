//! Building blocks of the correlator equations
//!
//! ```text
//! d theta_ab(R)/dt = (Pi theta + theta Pi^T)_ab + f_ab(R) + g_ab(R)
//! ```
//!
//! `Pi` carries the single-site Hamiltonian, `f` the interaction with the
//! three-point connected correlator dropped, and `g` the loss.

use nalgebra::Matrix3;

use super::field::{
    matrix_to_sym, outer, sym_to_matrix, CorrelatorField, Stencil, Sym, XX, XY, XZ, YY, YZ, ZZ,
};
use crate::error::Result;
use crate::lattice::Displacement;
use crate::model::{BlochVector, InteractionKind, ModelParams};

pub fn pi_matrix(p: &ModelParams) -> Matrix3<f64> {
    Matrix3::new(
        0.0, -p.delta, 0.0, //
        p.delta, 0.0, -2.0 * p.omega, //
        0.0, 2.0 * p.omega, 0.0,
    )
}

/// `Pi theta + theta Pi^T` for symmetric `theta`, packed.
pub(crate) fn pi_sym(delta: f64, omega: f64, t: &Sym) -> Sym {
    let w = 2.0 * omega;
    [
        -2.0 * delta * t[XY],
        2.0 * delta * t[XY] - 2.0 * w * t[YZ],
        2.0 * w * t[YZ],
        delta * (t[XX] - t[YY]) - w * t[XZ],
        -delta * t[YZ] + w * t[XY],
        delta * t[XZ] + w * (t[YY] - t[ZZ]),
    ]
}

pub(crate) fn g_sym(mu: BlochVector, t: &Sym, gamma: f64) -> Sym {
    [
        -gamma * t[XX],
        -gamma * t[YY],
        -gamma * (2.0 * t[ZZ] + 2.0 * mu.z),
        -gamma * t[XY],
        -gamma * (1.5 * t[XZ] + mu.x),
        -gamma * (1.5 * t[YZ] + mu.y),
    ]
}

/// Loss contribution to the two-site moment equations.
///
/// Each site relaxes independently: transverse components at `gamma/2`,
/// `sz` towards `-1` at `gamma`, so a pair of transverse components decays
/// at `gamma`, a mixed transverse-longitudinal pair at `3 gamma / 2` with a
/// source `-gamma mu_a`, and `zz` at `2 gamma` with a source
/// `-2 gamma mu_z`.
pub fn g_terms(mu: BlochVector, theta: &Matrix3<f64>, gamma: f64) -> Matrix3<f64> {
    sym_to_matrix(&g_sym(mu, &matrix_to_sym(theta), gamma))
}

/// Local inputs of the interaction terms at one displacement.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Local {
    /// `theta(R)`.
    pub t: Sym,
    /// Nearest-neighbor `theta(1)`.
    pub t1: Sym,
    /// Weighted sum of `theta(R')` over `|R' - R| = 1`, `R' != 0`.
    pub s: Sym,
    /// `delta_{|R|,1}`.
    pub nn: f64,
    /// `Z - delta_{|R|,1}`.
    pub f: f64,
}

pub(crate) fn f_sym_xy(j: f64, mu: BlochVector, l: &Local) -> Sym {
    let (mx, my, mz) = (mu.x, mu.y, mu.z);
    let (t, t1, s, nn, f) = (&l.t, &l.t1, &l.s, l.nn, l.f);
    let mxyz = 2.0 * mx * my * mz;
    [
        2.0 * j * (mxyz - mx * t1[YZ] - my * t[XZ]) * f - 2.0 * j * mz * s[XY],
        -2.0 * j * (mxyz - my * t1[XZ] - mx * t[YZ]) * f + 2.0 * j * mz * s[XY],
        -2.0 * j * (mx * t[YZ] - my * t[XZ]) * f - 2.0 * j * (my * s[XZ] - mx * s[YZ]),
        j * (2.0 * my * my * mz - 2.0 * mx * mx * mz - my * t1[YZ] - my * t[YZ]
            + mx * t1[XZ]
            + mx * t[XZ])
            * f
            - j * mz * (s[YY] - s[XX]),
        -j * my * nn
            + j * (2.0 * mz * mz * my - mz * t1[YZ] - my * t[ZZ] - mx * t[XY] + my * t[XX]) * f
            - j * (mz * s[YZ] + my * s[XX] - mx * s[XY]),
        j * mx * nn
            + j * (-2.0 * mz * mz * mx + mz * t1[XZ] + mx * t[ZZ] - mx * t[YY] + my * t[XY]) * f
            + j * (mz * s[XZ] - my * s[XY] + mx * s[YY]),
    ]
}

pub(crate) fn f_sym_ising(j: f64, mu: BlochVector, l: &Local) -> Sym {
    let (mx, my, mz) = (mu.x, mu.y, mu.z);
    let (t, t1, s, nn, f) = (&l.t, &l.t1, &l.s, l.nn, l.f);
    let mxyz = 2.0 * mx * my * mz;
    [
        -2.0 * j * (mxyz - mx * t1[YZ] - mz * t[XY]) * f + 2.0 * j * my * s[XZ],
        2.0 * j * (mxyz - my * t1[XZ] - mz * t[XY]) * f - 2.0 * j * mx * s[YZ],
        0.0,
        j * (2.0 * mx * mx * mz - 2.0 * my * my * mz - mx * t1[XZ] - mz * t[XX]
            + my * t1[YZ]
            + mz * t[YY])
            * f
            + j * (my * s[YZ] - mx * s[XZ]),
        j * my * nn - j * (2.0 * mz * mz * my - mz * t1[YZ] - mz * t[YZ]) * f + j * my * s[ZZ],
        -j * mx * nn + j * (2.0 * mz * mz * mx - mz * t1[XZ] - mz * t[XZ]) * f - j * mx * s[ZZ],
    ]
}

pub(crate) fn f_sym(kind: InteractionKind, j: f64, mu: BlochVector, l: &Local) -> Sym {
    match kind {
        InteractionKind::Xy => f_sym_xy(j, mu, l),
        InteractionKind::Ising => f_sym_ising(j, mu, l),
    }
}

/// Gathers `theta(R)`, `theta(1)` and the neighbor sum for class `k`, with
/// `m = mu_a mu_b` packed.
pub(crate) fn local(st: &Stencil, vals: &[Sym], m: &Sym, k: usize) -> Local {
    let t = std::array::from_fn(|i| vals[k][i] + m[i]);
    let t1 = std::array::from_fn(|i| vals[st.unit_class()][i] + m[i]);
    let mut s = [0.0; 6];
    for (q, w) in st.neighbors(k) {
        for i in 0..6 {
            s[i] += w * vals[q][i];
        }
    }
    let wsum = st.neighbor_weight(k);
    for i in 0..6 {
        s[i] += wsum * m[i];
    }
    let nn = if st.is_nn(k) { 1.0 } else { 0.0 };
    Local {
        t,
        t1,
        s,
        nn,
        f: st.connectivity() - nn,
    }
}

fn field_local(field: &CorrelatorField, mu: BlochVector, k: usize) -> Local {
    local(field.stencil(), field.values(), &outer(mu), k)
}

/// Interaction terms of the XY model at displacement `r` for hopping `j`.
pub fn f_terms_xy(
    r: &Displacement,
    mu: BlochVector,
    field: &CorrelatorField,
    j: f64,
) -> Result<Matrix3<f64>> {
    let k = field.stencil().class_of(r)?;
    Ok(sym_to_matrix(&f_sym_xy(j, mu, &field_local(field, mu, k))))
}

/// Interaction terms of the Ising model at displacement `r` for coupling
/// `j_z`.
pub fn f_terms_ising(
    r: &Displacement,
    mu: BlochVector,
    field: &CorrelatorField,
    j_z: f64,
) -> Result<Matrix3<f64>> {
    let k = field.stencil().class_of(r)?;
    Ok(sym_to_matrix(&f_sym_ising(j_z, mu, &field_local(field, mu, k))))
}
