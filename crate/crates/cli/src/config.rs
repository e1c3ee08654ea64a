//! Experiment configuration file. Every field is optional; command-line
//! flags take precedence.

use std::path::{Path, PathBuf};

use acdnet_core::acd::Tail;
use acdnet_core::data::TimeUnit;
use acdnet_core::nets::{ModelKind, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub models: Vec<ModelKind>,
    pub alphas: Option<Vec<f64>>,
    pub tail: Option<Tail>,
    pub data: DataConfig,
    pub simulate: Option<SimulateConfig>,
    pub split: SplitConfig,
    pub acd: AcdConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub input: Option<PathBuf>,
    pub instrument: Option<String>,
    /// Exchange-local `HH:MM[:SS]`; earlier trades are dropped.
    pub session_open: Option<String>,
    pub utc_offset_minutes: Option<i64>,
    pub units: Option<TimeUnit>,
    pub merge_same_timestamp: Option<bool>,
    /// Durations above this many seconds are dropped.
    pub max_duration: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub omega: Option<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub n: Option<usize>,
    pub burn_in: Option<usize>,
    pub features: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub test_fraction: f64,
    /// Train : validation proportions of the non-test part.
    pub train_ratio: [f64; 2],
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { test_fraction: 0.3, train_ratio: [8.0, 2.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcdConfig {
    pub p: usize,
    pub q: usize,
}

impl Default for AcdConfig {
    fn default() -> Self {
        AcdConfig { p: 1, q: 1 }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }
}
