//! Experiment files for `wprox run`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Functional spec string, e.g. `renyi:p=2`.
    pub functional: String,
    pub tau: f64,
    pub steps: usize,
    /// Grid size for generated measures.
    #[serde(default = "default_n")]
    pub n: usize,
    /// Initial measure file; takes precedence over `init`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// Generated initial measure, e.g. `barenblatt:r=1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<String>,
    /// Output directory; defaults to `WPROX_OUT` or the working directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Verification suites to run after the flow.
    #[serde(default)]
    pub checks: Vec<String>,
    /// Random instances per suite.
    #[serde(default = "default_random")]
    pub random: usize,
}

fn default_n() -> usize {
    512
}

fn default_random() -> usize {
    100
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            bail!("tau must be positive, got {}", self.tau);
        }
        if self.n == 0 {
            bail!("n must be positive");
        }
        if self.input.is_none() && self.init.is_none() && self.steps > 0 {
            bail!("a flow needs `input` or `init`");
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).context("invalid experiment config")?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config fields are TOML-representable")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text)
    }
}
