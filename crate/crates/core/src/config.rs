//! Experiment configuration: one JSON document, overridable leaf by leaf.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cascade::{TrainConfig, DEFAULT_DROPOUT, DEFAULT_HIDDEN_DIM, DEFAULT_NUM_LEVELS};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub train_data: PathBuf,
    pub test_data: PathBuf,
    pub checkpoint: PathBuf,
    pub log_dir: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            train_data: "data/train.csv".into(),
            test_data: "data/test.csv".into(),
            checkpoint: "runs/checkpoint.json".into(),
            log_dir: "runs/logs".into(),
            report_dir: "runs/report".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Checked against the training data when set.
    pub num_classes: Option<usize>,
    pub hidden_dim: usize,
    /// Total levels, base level included.
    pub num_levels: usize,
    pub include_base_features: bool,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_classes: None,
            hidden_dim: DEFAULT_HIDDEN_DIM,
            num_levels: DEFAULT_NUM_LEVELS,
            include_base_features: false,
            dropout: DEFAULT_DROPOUT,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Report names; the data header's names are used when unset.
    pub class_names: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub paths: PathsConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    /// Loads `path` (or the defaults when `None`) and applies `key.path=value`
    /// overrides. Values parse as JSON, falling back to a plain string.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                serde_json::from_str::<Value>(&text)?
            }
            None => serde_json::to_value(ExperimentConfig::default())?,
        };
        Self::from_value(doc, overrides)
    }

    pub fn from_json(text: &str, overrides: &[String]) -> Result<Self> {
        Self::from_value(serde_json::from_str(text)?, overrides)
    }

    fn from_value(mut doc: Value, overrides: &[String]) -> Result<Self> {
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: ExperimentConfig = serde_json::from_value(doc)?;
        cfg.train.validate()?;
        if cfg.model.num_levels == 0 || cfg.model.hidden_dim == 0 {
            return Err(Error::Parameter("model.num_levels and model.hidden_dim must be positive".into()));
        }
        if !(0.0..1.0).contains(&cfg.model.dropout) {
            return Err(Error::Parameter(format!("model.dropout {} outside [0, 1)", cfg.model.dropout)));
        }
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Parameter(format!("override {assignment:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Parameter(format!("override {key:?}: {} is not an object", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Err(Error::Parameter(format!("empty override key in {assignment:?}")))
}
