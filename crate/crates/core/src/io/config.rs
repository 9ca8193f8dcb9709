//! Run configuration: JSON parsing with defaults, validation and `key=value` overrides.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::constitutive::ModelParams;
use crate::dynamics::StepConfig;
use crate::error::{Error, Result};
use crate::fields::Grid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub dim: usize,
    pub n: usize,
    pub length: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            dim: 2,
            n: 32,
            length: 2.0 * PI,
        }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.dim, self.n, self.length)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    #[default]
    Equilibrium,
    ShearPerturbation,
    RandomSmooth,
    TwinRun,
    Manufactured,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Equilibrium => "equilibrium",
            Scenario::ShearPerturbation => "shear-perturbation",
            Scenario::RandomSmooth => "random-smooth",
            Scenario::TwinRun => "twin-run",
            Scenario::Manufactured => "manufactured",
        }
    }
}

/// Body force selection. `shear` is `f = (A sin(m y), 0, 0)`; `compressive` is
/// `f_i = A sin(m x_i)`, which drives the divergence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingSpec {
    #[default]
    None,
    Shear {
        amplitude: f64,
        mode: u32,
    },
    Compressive {
        amplitude: f64,
        mode: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub params: ModelParams,
    pub step: StepConfig,
    pub end_time: f64,
    /// Steps between CSV rows.
    pub csv_every: usize,
    /// Steps between snapshot sets.
    pub snapshot_every: usize,
    pub scenario: Scenario,
    pub seed: u64,
    /// Run a refined twin and report the relative entropy against it.
    pub twin_run: bool,
    /// Time step of the twin relative to `step.dt`.
    pub twin_dt_factor: f64,
    pub out_dir: String,
    pub forcing: ForcingSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            grid: GridSpec::default(),
            params: ModelParams::default(),
            step: StepConfig::default(),
            end_time: 0.1,
            csv_every: 1,
            snapshot_every: 100,
            scenario: Scenario::default(),
            seed: 0,
            twin_run: false,
            twin_dt_factor: 0.25,
            out_dir: "out".into(),
            forcing: ForcingSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.build()?;
        self.params.validate()?;
        self.step.validate()?;
        if !(self.end_time > 0.0 && self.end_time.is_finite()) {
            return Err(Error::config("end_time", format!("must be positive, got {}", self.end_time)));
        }
        if self.csv_every < 1 {
            return Err(Error::config("csv_every", "must be at least 1"));
        }
        if self.snapshot_every < 1 {
            return Err(Error::config("snapshot_every", "must be at least 1"));
        }
        if !(self.twin_dt_factor > 0.0 && self.twin_dt_factor <= 1.0) {
            return Err(Error::config("twin_dt_factor", "must lie in (0, 1]"));
        }
        if self.scenario == Scenario::Manufactured {
            if self.params.alpha != 0.0 {
                return Err(Error::config("params.alpha", "the manufactured scenario needs alpha = 0"));
            }
            if self.forcing != ForcingSpec::None {
                return Err(Error::config("forcing", "the manufactured scenario supplies its own sources"));
            }
        }
        if let ForcingSpec::Shear { amplitude, .. } | ForcingSpec::Compressive { amplitude, .. } = self.forcing {
            if !amplitude.is_finite() {
                return Err(Error::config("forcing.amplitude", "must be finite"));
            }
        }
        Ok(())
    }

    /// Whether a refined twin runs alongside.
    pub fn twin_enabled(&self) -> bool {
        self.twin_run || self.scenario == Scenario::TwinRun
    }

    /// Number of `step.dt` intervals needed to reach `end_time`.
    pub fn steps(&self) -> usize {
        ((self.end_time / self.step.dt).round() as usize).max(1)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Parses a JSON document, fills defaults and validates.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::config("", format!("invalid JSON: {e}")))?;
    config_from_value(value)
}

/// Like [`parse_config`] but applies `key.path=value` overrides first.
pub fn parse_config_with_overrides(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| Error::config("", format!("invalid JSON: {e}")))?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    config_from_value(value)
}

pub fn config_from_value(value: Value) -> Result<RunConfig> {
    let cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        Error::config(if path == "." { String::new() } else { path }, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Sets a dotted key to a value; the value is read as JSON when possible and as a string otherwise.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(spec, "override must look like key=value"))?;
    let parsed: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::config(key, "empty path segment"));
        }
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::config(parts[..i].join("."), "not an object"))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), parsed);
            return Ok(());
        }
        cur = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}
