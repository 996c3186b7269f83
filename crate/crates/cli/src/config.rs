//! Experiment configuration file.

use std::path::{Path, PathBuf};

use banditlab_core::features::Fingerprint;
use banditlab_core::{EnvConfig, GenerationSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const OUTPUT_ENV_VAR: &str = "BANDITLAB_OUTPUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub bootstrap_n: u64,
    pub env: EnvConfig,
    pub arms: Vec<GenerationSpec>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.arms.is_empty() {
            return Err(CliError::Config("arms: at least one arm is required".into()));
        }
        if self.bootstrap_n == 0 {
            return Err(CliError::Config("bootstrap_n: must be >= 1".into()));
        }
        self.env
            .validate()
            .map_err(|e| CliError::Config(format!("env: {e}")))?;
        for (i, arm) in self.arms.iter().enumerate() {
            arm.validate()
                .map_err(|e| CliError::Config(format!("arms[{i}]: {e}")))?;
        }
        Ok(())
    }

    /// Canonical serialized form; the basis of the config hash.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        Fingerprint::of_bytes(self.canonical().as_bytes()).to_string()
    }

    /// `output_dir`, unless the environment variable overrides it.
    pub fn resolved_output(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ENV_VAR) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.output_dir.clone(),
        }
    }
}
