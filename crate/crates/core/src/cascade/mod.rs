//! Boosted cascade of classifier levels.
//!
//! Level 0 maps raw features to `2C` pair logits. Level `l >= 1` reads the
//! per-class probabilities of levels `0..l` (concatenated in level order,
//! optionally after the raw features) and emits its own `2C` logits. Every
//! level is a two-layer network with ReLU and dropout between the layers.
//! Levels are trained one at a time and frozen; inference averages the
//! probabilities of all levels.

mod train;

use serde::{Deserialize, Serialize};

pub use train::{train_cascade, train_cascade_observed, LevelLog, StepLog, TrainConfig, TrainingLog};

use crate::diffkernel::{per_class_softmax, Mlp, PredictionMatrix, Tensor2};
use crate::losses::ClassWeights;
use crate::par::Exec;
use crate::{rng, Error, Result};

pub const DEFAULT_NUM_LEVELS: usize = 6;
pub const DEFAULT_HIDDEN_DIM: usize = 64;
pub const DEFAULT_DROPOUT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeLevel {
    pub index: usize,
    pub input_dim: usize,
    pub net: Mlp,
    pub frozen: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeModel {
    pub num_classes: usize,
    pub base_feature_dim: usize,
    pub hidden_dim: usize,
    pub include_base_features: bool,
    /// `levels[0]` is the base level.
    pub levels: Vec<CascadeLevel>,
    /// Set once training has finished.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_weights: Option<ClassWeights>,
}

/// Input width of level `l`.
pub fn level_input_dim(l: usize, num_classes: usize, base_feature_dim: usize, include_base_features: bool) -> usize {
    match l {
        0 => base_feature_dim,
        _ if include_base_features => base_feature_dim + l * num_classes,
        _ => l * num_classes,
    }
}

/// Builds an untrained, He-initialized cascade with `num_levels` levels in
/// total (the base level included).
pub fn build_cascade(
    num_classes: usize,
    base_feature_dim: usize,
    num_levels: usize,
    hidden_dim: usize,
    include_base_features: bool,
    dropout: f64,
    seed: u64,
) -> Result<CascadeModel> {
    if num_levels == 0 {
        return Err(Error::Parameter("a cascade needs at least one level".into()));
    }
    if num_classes == 0 || base_feature_dim == 0 || hidden_dim == 0 {
        return Err(Error::Dimension(format!(
            "classes {num_classes}, features {base_feature_dim}, hidden {hidden_dim} must all be positive"
        )));
    }
    let levels = (0..num_levels)
        .map(|l| {
            let input_dim = level_input_dim(l, num_classes, base_feature_dim, include_base_features);
            let net = Mlp::he(
                &[input_dim, hidden_dim, 2 * num_classes],
                dropout,
                rng::derive_seed(seed, &[rng::TAG_INIT, l as u64]),
            )?;
            Ok(CascadeLevel { index: l, input_dim, net, frozen: false })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CascadeModel { num_classes, base_feature_dim, hidden_dim, include_base_features, levels, class_weights: None })
}

/// Per-level probabilities and their average.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadePrediction {
    pub ensemble: PredictionMatrix,
    pub per_level: Vec<PredictionMatrix>,
}

impl CascadeModel {
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn is_trained(&self) -> bool {
        self.levels.iter().all(|l| l.frozen)
    }

    /// Input for level `l`: optional raw features, then the cached
    /// probabilities of levels `0..l` in level order.
    pub fn level_input(&self, l: usize, features: &Tensor2, cached: &[PredictionMatrix]) -> Result<Tensor2> {
        if l >= self.levels.len() {
            return Err(Error::State(format!("level {l} does not exist in a {}-level cascade", self.levels.len())));
        }
        if features.cols() != self.base_feature_dim {
            return Err(Error::Dimension(format!(
                "{} feature columns for a cascade over {} features",
                features.cols(),
                self.base_feature_dim
            )));
        }
        if l == 0 {
            return Ok(features.clone());
        }
        if cached.len() < l {
            return Err(Error::State(format!(
                "level {l} needs predictions of {l} preceding levels, {} cached",
                cached.len()
            )));
        }
        let mut parts: Vec<&Tensor2> = Vec::with_capacity(l + 1);
        if self.include_base_features {
            parts.push(features);
        }
        for (k, p) in cached[..l].iter().enumerate() {
            if p.num_examples() != features.rows() || p.num_classes() != self.num_classes {
                return Err(Error::State(format!("cached predictions of level {k} do not match the input")));
            }
            parts.push(p.as_tensor());
        }
        Tensor2::hconcat(&parts)
    }

    /// Eval-mode probabilities of level `l` given the preceding levels' output.
    pub fn level_predict(
        &self,
        l: usize,
        features: &Tensor2,
        cached: &[PredictionMatrix],
        exec: Exec,
    ) -> Result<PredictionMatrix> {
        let input = self.level_input(l, features, cached)?;
        per_class_softmax(&self.levels[l].net.forward_eval(&input, exec)?)
    }

    pub fn predict(&self, features: &Tensor2) -> Result<CascadePrediction> {
        self.predict_with(features, Exec::default())
    }

    /// Averages the per-class probabilities of every level; dropout off.
    pub fn predict_with(&self, features: &Tensor2, exec: Exec) -> Result<CascadePrediction> {
        if !self.is_trained() {
            return Err(Error::State("cascade has untrained levels".into()));
        }
        let mut per_level: Vec<PredictionMatrix> = Vec::with_capacity(self.levels.len());
        for l in 0..self.levels.len() {
            let p = self.level_predict(l, features, &per_level, exec)?;
            per_level.push(p);
        }
        Ok(CascadePrediction { ensemble: average(&per_level)?, per_level })
    }
}

/// Element-wise arithmetic mean, summed in level order.
pub fn average(levels: &[PredictionMatrix]) -> Result<PredictionMatrix> {
    let first = levels.first().ok_or_else(|| Error::State("nothing to average".into()))?;
    let (n, c) = (first.num_examples(), first.num_classes());
    let mut acc = vec![0.0; n * c];
    for p in levels {
        if (p.num_examples(), p.num_classes()) != (n, c) {
            return Err(Error::Dimension("level predictions differ in shape".into()));
        }
        acc.iter_mut().zip(p.as_tensor().values()).for_each(|(a, v)| *a += v);
    }
    let k = levels.len() as f64;
    acc.iter_mut().for_each(|a| *a /= k);
    PredictionMatrix::new(Tensor2::new(n, c, acc)?)
}

/// Serialized trained model plus the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub class_names: Vec<String>,
    pub train_config: TrainConfig,
    pub model: CascadeModel,
}

pub const CHECKPOINT_FORMAT: &str = "boosted-cascade/1";

impl Checkpoint {
    pub fn new(model: CascadeModel, train_config: TrainConfig, class_names: Vec<String>) -> Self {
        Self { format: CHECKPOINT_FORMAT.to_string(), class_names, train_config, model }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Spec(format!("unsupported checkpoint format {:?}", ck.format)));
        }
        let m = &ck.model;
        for (l, level) in m.levels.iter().enumerate() {
            let expect = level_input_dim(l, m.num_classes, m.base_feature_dim, m.include_base_features);
            if level.index != l
                || level.input_dim != expect
                || level.net.in_dim() != expect
                || level.net.out_dim() != 2 * m.num_classes
            {
                return Err(Error::Spec(format!("checkpoint level {l} has inconsistent dimensions")));
            }
        }
        if ck.class_names.len() != m.num_classes {
            return Err(Error::Spec("checkpoint class names do not match the class count".into()));
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn input_widths() {
        let m = build_cascade(14, 20, 6, 8, false, 0.5, 1).unwrap();
        assert_eq!(m.levels[3].input_dim, 42);
        assert_eq!(m.levels[0].input_dim, 20);
        let m = build_cascade(3, 10, 3, 8, true, 0.5, 1).unwrap();
        assert_eq!(m.levels[2].input_dim, 16);
    }

    #[test]
    fn level_input_concatenates_in_order() {
        let m = build_cascade(3, 2, 3, 4, false, 0.5, 0).unwrap();
        let x = Tensor2::from_rows(&[[9.0, 8.0]]).unwrap();
        let q0 = PredictionMatrix::from_rows(&[[0.1, 0.2, 0.3]]).unwrap();
        let q1 = PredictionMatrix::from_rows(&[[0.4, 0.5, 0.6]]).unwrap();
        let cached = vec![q0.clone(), q1.clone()];
        assert_eq!(m.level_input(1, &x, &cached).unwrap().values(), q0.as_tensor().values());
        assert_eq!(m.level_input(2, &x, &cached).unwrap().values(), &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        assert!(matches!(m.level_input(2, &x, &cached[..1]), Err(Error::State(_))));

        let m = build_cascade(3, 10, 3, 4, true, 0.5, 0).unwrap();
        let x = Tensor2::new(1, 10, (0..10).map(f64::from).collect()).unwrap();
        let input = m.level_input(2, &x, &cached).unwrap();
        assert_eq!(input.cols(), 16);
        assert_eq!(&input.values()[..10], x.values());
        assert_eq!(&input.values()[10..], &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
    }

    #[test]
    fn untrained_model_cannot_predict() {
        let m = build_cascade(2, 3, 2, 4, false, 0.5, 0).unwrap();
        assert!(matches!(m.predict(&Tensor2::zeros(1, 3)), Err(Error::State(_))));
    }

    #[test]
    fn average_of_levels() {
        let a = PredictionMatrix::from_rows(&[[0.2, 0.7]]).unwrap();
        let b = PredictionMatrix::from_rows(&[[0.8, 0.7]]).unwrap();
        let avg = average(&[a, b]).unwrap();
        assert!((avg.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((avg.get(0, 1) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn zero_levels_rejected() {
        assert!(build_cascade(2, 3, 0, 4, false, 0.5, 0).is_err());
    }
}
