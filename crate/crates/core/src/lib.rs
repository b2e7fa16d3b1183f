//! Driven-dissipative spin-1/2 lattices with coherent drive and local loss.
//!
//! Three solver tiers share one parameter model: the [`meanfield`] flow of
//! the uniform magnetization, the [`mfqf`] closure that also evolves
//! connected two-point correlators, and the [`exact`] Lindblad solver for
//! small lattices. [`sweep`] runs hysteresis protocols over any tier.

pub mod config;
pub mod error;
pub mod exact;
pub mod export;
pub mod lattice;
pub mod meanfield;
pub mod mfqf;
pub mod model;
pub mod ode;
pub mod sweep;

pub use error::{Error, Result};
pub use lattice::{Boundary, Displacement, Geometry, LatticeSpec};
pub use model::{Axis, BlochVector, InteractionKind, ModelParams, SweepParameter};
