//! Run configuration: JSON with a versioned schema (see config.schema.json).

use anyhow::{bail, Context, Result};
use fdr_threshold::asymptotics::BridgeScaling;
use fdr_threshold::fixedpoint::{MapFamily, DEFAULT_MAX_ITER, DEFAULT_TOL};
use fdr_threshold::{MixtureModel, ProcedureSpec};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<MixtureModel>,
    #[serde(default)]
    pub procedures: Vec<ProcedureSpec>,
    #[serde(default)]
    pub scaling: BridgeScaling,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterate: Option<IterateParams>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationParams {
    pub m_values: Vec<usize>,
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_thresholds: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterateParams {
    pub family: MapFamily,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Defaults to λ (sto02-to-fdr08) or u(λ) (bky06-to-br08).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text).context("config is not valid JSON")?;
        match raw.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => bail!("unsupported schema_version {v}, expected {SCHEMA_VERSION}"),
            None => bail!("config needs an integer schema_version"),
        }
        serde_json::from_value(raw).context("config does not match the schema")
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn model(&self) -> Result<MixtureModel> {
        self.model.context("this command needs a `model`")
    }

    pub fn procedures(&self) -> Result<&[ProcedureSpec]> {
        if self.procedures.is_empty() {
            bail!("this command needs at least one entry in `procedures`");
        }
        Ok(&self.procedures)
    }
}
