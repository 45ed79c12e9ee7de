use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::align::AlignConfig;
use crate::attention::AttentionConfig;
use crate::data::PhantomConfig;
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::segnet::{ModelConfig, SegArchitecture};
use crate::train::TrainConfig;

/// Size and seed of a generated phantom set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub num_volumes: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { num_volumes: 100, seed: 0 }
    }
}

/// Every tunable of a run in one JSON document. Missing sections take
/// their defaults; unknown keys are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub phantom: PhantomConfig,
    pub align: AlignConfig,
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub attention: AttentionConfig,
    pub eval: EvalConfig,
    pub deterministic: bool,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn architecture(&self) -> SegArchitecture {
        SegArchitecture { model: self.model.clone(), attention: self.attention }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.num_volumes == 0 {
            return Err(Error::Config("dataset.num_volumes must be at least 1".into()));
        }
        self.phantom.validate()?;
        self.align.validate()?;
        self.train.validate()?;
        self.attention.validate()?;
        self.architecture().validate()?;
        self.eval.validate()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
