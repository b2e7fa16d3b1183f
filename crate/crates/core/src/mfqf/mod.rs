//! Meanfield with quantum fluctuations: the magnetization equations coupled
//! to translation-invariant connected two-point correlators, with connected
//! three-point correlators set to zero.

pub mod dynamics;
pub mod field;
pub mod observables;
pub mod terms;

pub use dynamics::{
    mfqf_integrate, mfqf_rhs, MfqfFailure, MfqfOptions, MfqfRate, MfqfRun, MfqfSystem,
    RelaxationTrace,
};
pub use field::{CorrelatorField, Pair, Stencil, Sym};
pub use observables::{
    fit_correlation_length, fit_relaxation_rate, total_correlation, CorrelationObservables,
    KappaFit, LengthFit, RelaxationSignal,
};
pub use terms::{f_terms_ising, f_terms_xy, g_terms, pi_matrix};

use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;
use crate::model::BlochVector;

#[derive(Clone, Debug, PartialEq)]
pub struct MfqfState {
    pub mu: BlochVector,
    pub field: CorrelatorField,
    pub time: f64,
}

impl MfqfState {
    /// All spins down and uncorrelated.
    pub fn down(lattice: &LatticeSpec) -> Result<Self> {
        Ok(MfqfState {
            mu: BlochVector::down(),
            field: CorrelatorField::zeros(lattice)?,
            time: 0.0,
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(3 + 6 * self.field.len());
        y.extend_from_slice(&self.mu.to_array());
        for s in self.field.values() {
            y.extend_from_slice(s);
        }
        y
    }

    /// Checks `|mu| <= 1` and `|theta_ab(R)| <= 1` up to `tol`.
    pub fn check_physical(&self, tol: f64) -> Result<()> {
        if !self.mu.is_physical(tol) {
            return Err(Error::InvalidParams(format!(
                "Bloch vector {:?} outside the unit ball",
                self.mu
            )));
        }
        let worst = self.field.max_abs_theta(self.mu);
        if worst > 1.0 + tol {
            return Err(Error::InvalidParams(format!(
                "two-site moment of magnitude {worst} exceeds 1"
            )));
        }
        Ok(())
    }
}
