//! Bundled label-dependency experiment.
//!
//! Class `a_xor_b` is the exclusive-or of classes `a` and `b` (with 5% label
//! noise) and leaves no trace in the features. The base level sees only
//! wide, noisy features; the upper levels see the base level's class
//! probabilities, from which the exclusive-or is easy to read.

use serde::Serialize;

use crate::cascade::{build_cascade, train_cascade};
use crate::config::ExperimentConfig;
use crate::data::{generate, SynthSpec};
use crate::metrics::roc_auc;
use crate::par::Exec;
use crate::Result;

pub const XOR_SPEC: &str = include_str!("../assets/xor-spec.json");
pub const XOR_EXPERIMENT: &str = include_str!("../assets/xor-experiment.json");
/// Index of the exclusive-or class in [`XOR_SPEC`].
pub const XOR_TARGET: usize = 3;

#[derive(Debug, Clone, Serialize)]
pub struct XorRun {
    pub seed: u64,
    /// Test AUC of the exclusive-or class for each level alone.
    pub level_aucs: Vec<f64>,
    pub ensemble_auc: f64,
}

impl XorRun {
    pub fn gain(&self) -> f64 {
        self.ensemble_auc - self.level_aucs[0]
    }
}

/// Generates the data and trains the bundled cascade with `seed` used for
/// both the data and the model.
pub fn run_xor(seed: u64, exec: Exec) -> Result<XorRun> {
    let mut spec = SynthSpec::from_json(XOR_SPEC)?;
    spec.seed = seed;
    let cfg = ExperimentConfig::from_json(XOR_EXPERIMENT, &[format!("train.seed={seed}")])?;
    let (train, test) = generate(&spec)?;
    let m = &cfg.model;
    let mut model = build_cascade(
        train.num_classes(),
        train.feature_dim(),
        m.num_levels,
        m.hidden_dim,
        m.include_base_features,
        m.dropout,
        cfg.train.seed,
    )?;
    train_cascade(&mut model, &train, &cfg.train, exec)?;
    let pred = model.predict_with(test.features(), exec)?;
    let y = test.labels().column(XOR_TARGET);
    let level_aucs = pred.per_level.iter().map(|p| roc_auc(&p.column(XOR_TARGET), &y)).collect::<Result<Vec<_>>>()?;
    let ensemble_auc = roc_auc(&pred.ensemble.column(XOR_TARGET), &y)?;
    Ok(XorRun { seed, level_aucs, ensemble_auc })
}
