//! On-disk form of a trained model: `weights.json` holds the parameter
//! arrays, `model.toml` everything else.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::NetParams;
use super::spec::{HybridModelSpec, ModelKind, TrainConfig};
use super::train::{HistoryEntry, TrainedModel};
use crate::data::ScalingStats;
use crate::error::{Error, Result};
use crate::fileio::{read_json, read_toml, write_json, write_toml};
use crate::nn::WeightContainer;

pub const WEIGHTS_FILE: &str = "weights.json";
pub const SIDECAR_FILE: &str = "model.toml";

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    model: ModelKind,
    spec: HybridModelSpec,
    config: TrainConfig,
    scaling: ScalingStats,
    best_step: u64,
    best_val_nll: f64,
    steps_run: u64,
    history: Vec<HistoryEntry>,
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        self.spec.kind()
    }

    /// Writes the checkpoint into `dir`, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join(WEIGHTS_FILE), &WeightContainer::from_params(&self.params))?;
        let sidecar = Sidecar {
            model: self.kind(),
            spec: self.spec.clone(),
            config: self.config.clone(),
            scaling: self.scaling.clone(),
            best_step: self.best_step,
            best_val_nll: self.best_val_nll,
            steps_run: self.steps_run,
            history: self.history.clone(),
        };
        write_toml(&dir.join(SIDECAR_FILE), &sidecar)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let sidecar_path = dir.join(SIDECAR_FILE);
        let sidecar: Sidecar = read_toml(&sidecar_path)?;
        sidecar.spec.validate().map_err(|e| Error::format(&sidecar_path, e))?;
        if sidecar.model != sidecar.spec.kind() {
            return Err(Error::format(&sidecar_path, format!("model {} does not match its spec", sidecar.model)));
        }
        let weights_path = dir.join(WEIGHTS_FILE);
        let container: WeightContainer = read_json(&weights_path)?;
        let mut params = NetParams::zeros(&sidecar.spec);
        container.load_into(&mut params).map_err(|e| Error::format(&weights_path, e))?;
        Ok(TrainedModel {
            spec: sidecar.spec,
            config: sidecar.config,
            params,
            scaling: sidecar.scaling,
            history: sidecar.history,
            best_step: sidecar.best_step,
            best_val_nll: sidecar.best_val_nll,
            steps_run: sidecar.steps_run,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::spec::Variant;
    use crate::rng::SeededRng;

    #[test]
    fn round_trip_is_exact() {
        let spec = HybridModelSpec::new(Variant::AttnLstmAcd, 3);
        let model = TrainedModel {
            params: NetParams::init(&spec, &mut SeededRng::new(11)),
            spec,
            config: TrainConfig { seed: 4, ..TrainConfig::default() },
            scaling: ScalingStats {
                duration_mean: 1.0 / 3.0,
                feature_means: vec![0.0, 123.456789, 0.0],
                feature_stds: vec![1.0, 0.1, 1.0],
            },
            history: vec![HistoryEntry { step: 100, train_nll: 0.1 + 0.2, val_nll: std::f64::consts::PI }],
            best_step: 100,
            best_val_nll: std::f64::consts::PI,
            steps_run: 100,
        };
        let dir = tempfile::tempdir().unwrap();
        model.save(dir.path()).unwrap();
        assert_eq!(TrainedModel::load(dir.path()).unwrap(), model);
    }

    #[test]
    fn missing_files_are_io_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(TrainedModel::load(dir.path()), Err(Error::Io { .. })));
    }
}
