//! Run configuration: strict JSON with dotted `key=value` overrides.
//!
//! The coupling is given either directly (`model.coupling`, which is `J` or
//! `J_z`) or as the product with the coordination number
//! (`model.coupling_times_z`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;
use crate::meanfield::linspace;
use crate::mfqf::MfqfOptions;
use crate::model::{InteractionKind, ModelParams, SweepParameter};
use crate::sweep::{ExactOptions, DEFAULT_MF_STEADY_TOL, Horizon, Protocol, SweepPlan, Tier};

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: InteractionKind,
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub omega: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling_times_z: Option<f64>,
}

/// Either explicit `values` or `start`/`stop` with `points` or `step`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
}

impl GridConfig {
    pub fn resolve(&self) -> Result<Vec<f64>> {
        match (self, &self.values) {
            (
                GridConfig {
                    start: None,
                    stop: None,
                    points: None,
                    step: None,
                    ..
                },
                Some(v),
            ) => Ok(v.clone()),
            (_, Some(_)) => Err(Error::Config(
                "sweep.grid: 'values' excludes start/stop/points/step".into(),
            )),
            (
                GridConfig {
                    start: Some(a),
                    stop: Some(b),
                    ..
                },
                None,
            ) => match (self.points, self.step) {
                (Some(n), None) if n >= 2 => Ok(linspace(*a, *b, n)),
                (None, Some(h)) if h > 0.0 && b > a => {
                    let n = ((b - a) / h + 1e-9).floor() as usize + 1;
                    Ok((0..n).map(|i| a + h * i as f64).collect())
                }
                _ => Err(Error::Config(
                    "sweep.grid needs either points >= 2 or a positive step with stop > start"
                        .into(),
                )),
            },
            _ => Err(Error::Config("sweep.grid needs 'values' or 'start' and 'stop'".into())),
        }
    }
}

fn both() -> Protocol {
    Protocol::BothDirections
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    pub grid: GridConfig,
    #[serde(default = "both")]
    pub protocol: Protocol,
}

/// Single trajectory settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub t_final: f64,
    /// Times at which correlator snapshots are written.
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

fn default_mf_steady_tol() -> f64 {
    DEFAULT_MF_STEADY_TOL
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    #[serde(default)]
    pub horizon: Horizon,
    #[serde(default = "default_mf_steady_tol")]
    pub mf_steady_tol: f64,
    #[serde(default)]
    pub mfqf: MfqfOptions,
    #[serde(default)]
    pub exact: ExactOptions,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig {
            horizon: Horizon::default(),
            mf_steady_tol: default_mf_steady_tol(),
            mfqf: MfqfOptions::default(),
            exact: ExactOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub tier: Tier,
    pub model: ModelConfig,
    pub lattice: LatticeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Set `a.b.c=value` in a JSON tree. The value is read as JSON when it
/// parses, as a bare string otherwise.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{spec}' is not key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("override key '{key}' is malformed")));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override '{key}': '{}' is not an object", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("key has at least one part")
}

impl RunConfig {
    /// Parse, apply overrides in order, then validate.
    pub fn from_json(text: &str, overrides: &[String]) -> Result<Self> {
        let mut v: Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("not valid JSON: {e}")))?;
        for o in overrides {
            apply_override(&mut v, o)?;
        }
        let cfg: RunConfig = serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, overrides).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Pretty JSON that parses back to an equal config.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Model parameters with the coupling resolved against the lattice.
    pub fn params(&self) -> Result<ModelParams> {
        let m = &self.model;
        let z = self.lattice.connectivity();
        let coupling = match (m.coupling, m.coupling_times_z) {
            (Some(j), None) => j,
            (None, Some(jz)) if z > 0 => jz / z as f64,
            (None, Some(_)) => {
                return Err(Error::Config(
                    "model.coupling_times_z needs a lattice with neighbours".into(),
                ))
            }
            _ => {
                return Err(Error::Config(
                    "set exactly one of model.coupling and model.coupling_times_z".into(),
                ))
            }
        };
        ModelParams::new(m.delta, m.omega, coupling, m.gamma, m.kind)
    }

    pub fn sweep_plan(&self) -> Result<SweepPlan> {
        let s = self
            .sweep
            .as_ref()
            .ok_or_else(|| Error::Config("missing 'sweep' section".into()))?;
        let t = &self.tolerances;
        let plan = SweepPlan {
            tier: self.tier,
            parameter: s.parameter,
            grid: s.grid.resolve()?,
            params: self.params()?,
            lattice: self.lattice.clone(),
            protocol: s.protocol,
            horizon: t.horizon,
            mf_steady_tol: t.mf_steady_tol,
            mfqf: t.mfqf,
            exact: t.exact,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        if self.sweep.is_some() {
            self.sweep_plan()?;
        }
        if let Some(r) = &self.run {
            if !(r.t_final > 0.0 && r.t_final.is_finite()) {
                return Err(Error::Config(format!("run.t_final must be positive, got {}", r.t_final)));
            }
            if r.snapshot_times.iter().any(|t| !(*t >= 0.0 && *t <= r.t_final)) {
                return Err(Error::Config("run.snapshot_times must lie in [0, t_final]".into()));
            }
        }
        self.tolerances.mfqf.validate()?;
        let h = self.tolerances.horizon;
        if !(h.t_final > 0.0 && h.t_max >= h.t_final) {
            return Err(Error::Config("tolerances.horizon needs 0 < t_final <= t_max".into()));
        }
        if !(self.tolerances.mf_steady_tol > 0.0) {
            return Err(Error::Config("tolerances.mf_steady_tol must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "tier": "mf",
        "model": {"kind": "xy", "omega": 0.5, "coupling_times_z": 4.0},
        "lattice": {"type": "hypercubic", "sizes": [64, 64]},
        "sweep": {"parameter": "delta", "grid": {"start": 0.0, "stop": 6.0, "points": 61}}
    }"#;

    #[test]
    fn coupling_times_z_divides_by_connectivity() {
        let c = RunConfig::from_json(BASE, &[]).unwrap();
        assert_eq!(c.params().unwrap().coupling, 1.0);
        let plan = c.sweep_plan().unwrap();
        assert_eq!(plan.grid.len(), 61);
        assert_eq!(plan.protocol, Protocol::BothDirections);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::from_json(BASE, &["model.gama=2".into()]).unwrap_err();
        assert!(err.to_string().contains("gama"), "{err}");
        let err = RunConfig::from_json(BASE, &["colour=1".into()]).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }

    #[test]
    fn overrides_apply_in_order() {
        let c = RunConfig::from_json(
            BASE,
            &["model.omega=0.7".into(), "model.omega=0.9".into(), "tier=mfqf".into()],
        )
        .unwrap();
        assert_eq!(c.model.omega, 0.9);
        assert_eq!(c.tier, Tier::Mfqf);
        let c = RunConfig::from_json(BASE, &["tolerances.horizon.t_final=50".into()]).unwrap();
        assert_eq!(c.tolerances.horizon.t_final, 50.0);
        assert!(RunConfig::from_json(BASE, &["model".into()]).is_err());
        assert!(RunConfig::from_json(BASE, &["model.omega.x=1".into()]).is_err());
    }

    #[test]
    fn negative_gamma_is_rejected() {
        assert!(RunConfig::from_json(BASE, &["model.gamma=-1".into()]).is_err());
    }

    #[test]
    fn both_couplings_is_ambiguous() {
        assert!(RunConfig::from_json(BASE, &["model.coupling=1".into()]).is_err());
    }

    #[test]
    fn nonpositive_tolerance_is_rejected() {
        assert!(RunConfig::from_json(BASE, &["tolerances.mfqf.steady_tol=0".into()]).is_err());
        assert!(RunConfig::from_json(BASE, &["tolerances.exact.steady.residual_tol=-1".into()]).is_err());
    }

    #[test]
    fn echo_round_trips() {
        let c = RunConfig::from_json(BASE, &["seed=42".into(), "output=\"out\"".into()]).unwrap();
        let back = RunConfig::from_json(&c.to_json(), &[]).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.output, Some(PathBuf::from("out")));
    }

    #[test]
    fn grid_forms() {
        let g = GridConfig {
            start: Some(1.0),
            stop: Some(2.0),
            step: Some(0.25),
            ..Default::default()
        };
        assert_eq!(g.resolve().unwrap(), vec![1.0, 1.25, 1.5, 1.75, 2.0]);
        let g = GridConfig {
            values: Some(vec![3.0]),
            start: Some(1.0),
            ..Default::default()
        };
        assert!(g.resolve().is_err());
        assert!(GridConfig::default().resolve().is_err());
    }
}
