//! Physical parameters and the single-site Bloch vector.
//!
//! All frequencies are measured in units of the loss rate, which is 1 in the
//! canonical choice. The Hamiltonian in the frame rotating with the drive is
//!
//! ```text
//! H = sum_R [ delta/2 sz_R + omega sx_R ] + H_int
//! H_int(XY)    = - sum_<R,R'> J/2   (sx_R sx_R' + sy_R sy_R')
//! H_int(Ising) = - sum_<R,R'> J_z/2  sz_R sz_R'
//! ```
//!
//! and every site loses excitations with rate `gamma` through `s-_R`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractionKind {
    /// Flip-flop hopping with amplitude `J`.
    Xy,
    /// Longitudinal coupling `J_z`.
    Ising,
}

impl fmt::Display for InteractionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InteractionKind::Xy => write!(f, "xy"),
            InteractionKind::Ising => write!(f, "ising"),
        }
    }
}

impl FromStr for InteractionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "xy" => Ok(InteractionKind::Xy),
            "ising" => Ok(InteractionKind::Ising),
            other => Err(Error::InvalidParams(format!("unknown interaction kind '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Detuning of the drive.
    pub delta: f64,
    /// Rabi frequency.
    pub omega: f64,
    /// `J` for the XY kind, `J_z` for the Ising kind.
    pub coupling: f64,
    /// Loss rate.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub kind: InteractionKind,
}

fn default_gamma() -> f64 {
    1.0
}

impl ModelParams {
    pub fn new(
        delta: f64,
        omega: f64,
        coupling: f64,
        gamma: f64,
        kind: InteractionKind,
    ) -> Result<Self> {
        let p = ModelParams {
            delta,
            omega,
            coupling,
            gamma,
            kind,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn xy(delta: f64, omega: f64, j: f64) -> Self {
        ModelParams {
            delta,
            omega,
            coupling: j,
            gamma: 1.0,
            kind: InteractionKind::Xy,
        }
    }

    pub fn ising(delta: f64, omega: f64, jz: f64) -> Self {
        ModelParams {
            delta,
            omega,
            coupling: jz,
            gamma: 1.0,
            kind: InteractionKind::Ising,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("delta", self.delta),
            ("omega", self.omega),
            ("coupling", self.coupling),
            ("gamma", self.gamma),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} must be finite, got {v}")));
            }
        }
        if self.gamma <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        Ok(())
    }

    /// Coupling as it enters the magnetization equations: `J` for XY and
    /// `-J_z` for Ising.
    pub fn mf_coupling(&self) -> f64 {
        match self.kind {
            InteractionKind::Xy => self.coupling,
            InteractionKind::Ising => -self.coupling,
        }
    }

    pub fn get(&self, which: SweepParameter) -> f64 {
        match which {
            SweepParameter::Delta => self.delta,
            SweepParameter::Omega => self.omega,
            SweepParameter::Coupling => self.coupling,
        }
    }

    pub fn with(mut self, which: SweepParameter, value: f64) -> Self {
        match which {
            SweepParameter::Delta => self.delta = value,
            SweepParameter::Omega => self.omega = value,
            SweepParameter::Coupling => self.coupling = value,
        }
        self
    }
}

/// Parameter that a scan or sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    Delta,
    Omega,
    Coupling,
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SweepParameter::Delta => "delta",
            SweepParameter::Omega => "omega",
            SweepParameter::Coupling => "coupling",
        };
        f.write_str(s)
    }
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "delta" => Ok(SweepParameter::Delta),
            "omega" => Ok(SweepParameter::Omega),
            "coupling" => Ok(SweepParameter::Coupling),
            other => Err(Error::InvalidParams(format!("unknown sweep parameter '{other}'"))),
        }
    }
}

/// Uniform mean magnetization `(<sx>, <sy>, <sz>)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        BlochVector { x, y, z }
    }

    /// All spins pointing down, the empty state of the loss channel.
    pub const fn down() -> Self {
        BlochVector::new(0.0, 0.0, -1.0)
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        BlochVector::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn norm_sqr(self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn norm(self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn dot(self, o: BlochVector) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn max_abs_diff(self, o: BlochVector) -> f64 {
        (self.x - o.x)
            .abs()
            .max((self.y - o.y).abs())
            .max((self.z - o.z).abs())
    }

    pub fn distance(self, o: BlochVector) -> f64 {
        ((self.x - o.x).powi(2) + (self.y - o.y).powi(2) + (self.z - o.z).powi(2)).sqrt()
    }

    pub fn is_physical(self, tol: f64) -> bool {
        self.norm_sqr() <= 1.0 + tol
    }

    pub fn component(self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
            Axis::Z => self.z,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            other => Err(Error::InvalidParams(format!("unknown axis '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_rejects_bad_gamma() {
        assert!(ModelParams::new(1.0, 0.5, 1.0, 0.0, InteractionKind::Xy).is_err());
        assert!(ModelParams::new(1.0, 0.5, 1.0, -1.0, InteractionKind::Xy).is_err());
        assert!(ModelParams::new(f64::NAN, 0.5, 1.0, 1.0, InteractionKind::Xy).is_err());
        assert!(ModelParams::new(1.0, 0.5, 1.0, 1.0, InteractionKind::Ising).is_ok());
    }

    #[test]
    fn ising_enters_with_opposite_sign() {
        assert_eq!(ModelParams::ising(0.0, 1.0, 0.7).mf_coupling(), -0.7);
        assert_eq!(ModelParams::xy(0.0, 1.0, 0.7).mf_coupling(), 0.7);
    }

    #[test]
    fn params_reject_unknown_json_keys() {
        let ok = r#"{"delta":1.0,"omega":0.5,"coupling":1.0,"kind":"xy"}"#;
        let p: ModelParams = serde_json::from_str(ok).unwrap();
        assert_eq!(p.gamma, 1.0);
        let bad = r#"{"delta":1.0,"omega":0.5,"coupling":1.0,"kind":"xy","jj":2}"#;
        assert!(serde_json::from_str::<ModelParams>(bad).is_err());
    }
}
