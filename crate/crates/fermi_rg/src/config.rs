//! Scenario configuration: flat `key = value` scale parameters plus one
//! `[section]` per scenario kind.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hoelder::ScaleBounds;
use crate::model_scales::ScaleParams;

pub const SECTIONS: [&str; 5] = ["jump-sweep", "ladder-demo", "resum", "norm-budget", "hoelder-check"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct JumpSweepSpec {
    pub lambda: f64,
    #[serde(alias = "g-profile")]
    pub g_profile: String,
    pub n_points: usize,
    pub deltas: Vec<f64>,
    pub tolerance: f64,
}

impl Default for JumpSweepSpec {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            g_profile: "constant".into(),
            n_points: 16,
            deltas: vec![0.04, 0.02, 0.01, 0.005],
            tolerance: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct LadderDemoSpec {
    /// Number of scales `j0 ..= j0 + scales - 1`.
    pub scales: i32,
    /// Grid size `N`.
    pub grid: usize,
    pub lmax: usize,
    pub amplitude: f64,
    pub counterterm_total: f64,
    pub tolerance: f64,
}

impl Default for LadderDemoSpec {
    fn default() -> Self {
        Self {
            scales: 2,
            grid: 2,
            lmax: 4,
            amplitude: 1e-4,
            counterterm_total: 0.05,
            tolerance: 1e-12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct FamilySpec {
    /// `saturating`, `saturating:<factor>`, `zero` or a path to a family file.
    pub family: String,
    /// Highest scale of a generated family; defaults to `min(Jmax, j0 + 6)`.
    pub top: Option<i32>,
    pub samples: usize,
}

impl Default for FamilySpec {
    fn default() -> Self {
        Self {
            family: "saturating".into(),
            top: None,
            samples: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct HoelderSpec {
    pub alpha: f64,
    pub beta: f64,
    pub c0: f64,
    pub c1: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub m_min: u32,
    pub m_max: u32,
    pub per_m: usize,
    pub exponent_tolerance: f64,
}

impl Default for HoelderSpec {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            c0: 1.0,
            c1: 1.0,
            m: 2.0,
            m_min: 2,
            m_max: 24,
            per_m: 200,
            exponent_tolerance: 0.05,
        }
    }
}

impl HoelderSpec {
    pub fn bounds(&self) -> ScaleBounds {
        ScaleBounds {
            alpha: self.alpha,
            beta: self.beta,
            c0: self.c0,
            c1: self.c1,
            m: self.m,
        }
    }
}

/// Parsed configuration file.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct RunConfig {
    pub params: ScaleParams,
    pub model: String,
    pub seed: Option<u64>,
    pub jump_sweep: Option<JumpSweepSpec>,
    pub ladder_demo: Option<LadderDemoSpec>,
    pub resum: Option<FamilySpec>,
    pub norm_budget: Option<FamilySpec>,
    pub hoelder_check: Option<HoelderSpec>,
}

fn section<T: for<'de> Deserialize<'de>>(table: &mut toml::Table, name: &str) -> Result<Option<T>> {
    match table.remove(name) {
        None => Ok(None),
        Some(toml::Value::Table(t)) => toml::Value::Table(t)
            .try_into()
            .map(Some)
            .map_err(|e| Error::Config(format!("[{name}]: {e}"))),
        Some(_) => Err(Error::Config(format!("{name} must be a section"))),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let model = match table.remove("model") {
            None => "quadratic".to_string(),
            Some(toml::Value::String(s)) => s,
            Some(v) => return Err(Error::Config(format!("model must be a string, got {v}"))),
        };
        if model != "quadratic" {
            return Err(Error::Config(format!("unknown model {model}")));
        }
        let seed = match table.remove("seed") {
            None => None,
            Some(toml::Value::Integer(s)) if s >= 0 => Some(s as u64),
            Some(v) => return Err(Error::Config(format!("seed must be a non-negative integer, got {v}"))),
        };
        let cfg = RunConfig {
            model,
            seed,
            jump_sweep: section(&mut table, "jump-sweep")?,
            ladder_demo: section(&mut table, "ladder-demo")?,
            resum: section(&mut table, "resum")?,
            norm_budget: section(&mut table, "norm-budget")?,
            hoelder_check: section(&mut table, "hoelder-check")?,
            params: toml::Value::Table(table)
                .try_into()
                .map_err(|e| Error::Config(format!("scale parameters: {e}")))?,
        };
        cfg.params.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}
