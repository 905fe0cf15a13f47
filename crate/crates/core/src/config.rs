//! JSON run configuration.
//!
//! Every section may be omitted and falls back to its defaults; keys that
//! do not name a field are rejected.

use std::path::Path;

use dsse_feeder::DatasetConfig;
use serde::{Deserialize, Serialize};

use crate::engine::EngineConfig;
use crate::error::{DsseError, Result};
use crate::experiments::ExperimentConfig;
use crate::model::ModelConfig;
use crate::train::TrainConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub experiment: ExperimentConfig,
}

impl RunConfig {
    /// Small model and short schedule that train in well under a minute
    /// per run on one CPU core.
    pub fn desk() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            model: ModelConfig {
                window: 24,
                rho: 1.5,
                hidden: 64,
                engine: EngineConfig { blocks: 2, d_model: 32, state_size: 8, ..EngineConfig::default() },
                ..ModelConfig::default()
            },
            train: TrainConfig {
                batch_size: 16,
                total_steps: 600,
                validate_every: 200,
                max_eval_windows: 256,
                ..TrainConfig::default()
            },
            experiment: ExperimentConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| DsseError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DsseError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            DsseError::Config(msg) => DsseError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.model.engine.validate()?;
        self.train.validate()?;
        if self.model.window == 0 {
            return Err(DsseError::Config("model: window must be ≥ 1".into()));
        }
        Ok(())
    }
}
