//! Resolved run settings. Values come from an optional TOML file and are then
//! overridden by environment variables and command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedding::EmbedderConfig;
use crate::evaluation::{BatchSize, ExperimentConfig};
use crate::gateway::TargetModelConfig;
use crate::traversal::TraversalConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config file {path}: {message}")]
    File { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleFiles {
    pub implications: Option<PathBuf>,
    pub compositions: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSettings {
    pub batch_size: BatchSize,
    pub seed: u64,
    pub rounds: usize,
    pub jobs: usize,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            batch_size: BatchSize::Count(1),
            seed: 0,
            rounds: 1,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Settings {
    pub embedder: EmbedderConfig,
    pub model: TargetModelConfig,
    pub traversal: TraversalConfig,
    pub experiment: ExperimentSettings,
    pub rules: RuleFiles,
    pub aliases: Option<PathBuf>,
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Reads the file if given, defaults otherwise.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let err = |message: String| ConfigError::File {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        Self::from_toml(&text).map_err(|e| err(e.to_string()))
    }

    pub fn experiment_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            batch_size: self.experiment.batch_size,
            traversal: self.traversal,
            seed: self.experiment.seed,
            rounds: self.experiment.rounds,
            jobs: self.experiment.jobs,
        }
    }

    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("settings serialize")
    }

    /// SHA-256 of the resolved settings.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.snapshot().to_string()))
    }
}
