use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::CascadeModel;
use crate::data::Dataset;
use crate::diffkernel::{per_class_softmax, sgd_step, PredictionMatrix, SgdConfig};
use crate::losses::{compute_class_weights, LossFamily};
use crate::par::Exec;
use crate::sampling::{
    draw_boost_sample, rank_by_difficulty, rebalance_sample, RebalanceSpec, RebalanceStrategy, DEFAULT_DECAY_RATE,
};
use crate::{rng, Error, Result};

/// Training settings shared by every level of one cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss_family: LossFamily,
    /// `total_steps` is filled in per level from epochs and batch size.
    pub sgd: SgdConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// Decay rate used to sample the training draws of level `l`, stored at
    /// index `l - 1`. Missing entries repeat the last one.
    pub decay_rates: Vec<f64>,
    /// Draws per level; `None` means one per training example.
    pub sample_size: Option<usize>,
    /// Class rebalancing for the base level; `None` trains it on the data as is.
    pub rebalance: Option<RebalanceStrategy>,
    /// Emit a progress line every this many SGD steps (0 = never).
    pub progress_interval: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss_family: LossFamily::BrCe,
            sgd: SgdConfig::default(),
            epochs: 10,
            batch_size: 64,
            decay_rates: vec![DEFAULT_DECAY_RATE],
            sample_size: None,
            rebalance: Some(RebalanceStrategy::Median),
            progress_interval: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        SgdConfig { total_steps: 1, ..self.sgd.clone() }.validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Parameter("epochs and batch size must be positive".into()));
        }
        if self.sample_size == Some(0) {
            return Err(Error::Parameter("sample size must be positive".into()));
        }
        if let Some(r) = self.decay_rates.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(Error::Parameter(format!("decay rate {r} must be finite and >= 0")));
        }
        if self.rebalance == Some(RebalanceStrategy::Explicit) {
            return Err(Error::Parameter("explicit rebalance targets are not configurable here".into()));
        }
        Ok(())
    }

    /// Decay rate for sampling the draws of level `l >= 1`.
    pub fn decay_rate_for(&self, l: usize) -> f64 {
        self.decay_rates.get(l - 1).or_else(|| self.decay_rates.last()).copied().unwrap_or(DEFAULT_DECAY_RATE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    /// Mean per-class cross-entropy terms of the batch (empty for PWE).
    pub per_class: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelLog {
    pub level: usize,
    pub sample_size: usize,
    /// Decay rate used to draw this level's sample; `None` for the base level.
    pub decay_rate: Option<f64>,
    pub steps: Vec<StepLog>,
    /// Mean eval-mode loss over the full training set after training.
    pub final_train_loss: f64,
    /// Eval-mode per-example losses over the full training set; they rank
    /// difficulty for the next level.
    pub per_example_losses: Vec<f64>,
}

impl LevelLog {
    /// `step,lr,total_loss` plus one `ce_<class>` column per class for
    /// cross-entropy runs.
    pub fn write_csv<W: Write>(&self, class_names: &[String], writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let with_classes = self.steps.first().is_some_and(|s| !s.per_class.is_empty());
        let mut header = vec!["step".to_string(), "lr".to_string(), "total_loss".to_string()];
        if with_classes {
            header.extend(class_names.iter().map(|c| format!("ce_{c}")));
        }
        w.write_record(&header)?;
        for s in &self.steps {
            let mut rec = vec![s.step.to_string(), s.lr.to_string(), s.loss.to_string()];
            rec.extend(s.per_class.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<training log>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    pub levels: Vec<LevelLog>,
    /// Eval-mode training-set probabilities of each level, as fed forward.
    pub cached_predictions: Vec<PredictionMatrix>,
}

impl TrainingLog {
    pub fn final_train_loss(&self) -> f64 {
        self.levels.last().map_or(f64::NAN, |l| l.final_train_loss)
    }
}

pub fn train_cascade(
    model: &mut CascadeModel,
    dataset: &Dataset,
    config: &TrainConfig,
    exec: Exec,
) -> Result<TrainingLog> {
    train_cascade_observed(model, dataset, config, exec, |_, _| {})
}

/// Trains every level in order. `on_level_done(l, model)` runs after level
/// `l` is frozen.
pub fn train_cascade_observed<F>(
    model: &mut CascadeModel,
    dataset: &Dataset,
    config: &TrainConfig,
    exec: Exec,
    mut on_level_done: F,
) -> Result<TrainingLog>
where
    F: FnMut(usize, &CascadeModel),
{
    if model.levels.iter().any(|l| l.frozen) {
        return Err(Error::State("cascade already trained; levels are frozen".into()));
    }
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if dataset.feature_dim() != model.base_feature_dim || dataset.num_classes() != model.num_classes {
        return Err(Error::Dimension(format!(
            "dataset has {} features / {} classes, cascade expects {} / {}",
            dataset.feature_dim(),
            dataset.num_classes(),
            model.base_feature_dim,
            model.num_classes
        )));
    }
    if config.loss_family == LossFamily::Pwe && model.num_classes < 2 {
        return Err(Error::Parameter("pairwise loss needs at least two classes".into()));
    }

    let labels = dataset.labels();
    let weights = compute_class_weights(labels)?;
    let n = dataset.len();
    let sample_size = config.sample_size.unwrap_or(n);
    let mut cached: Vec<PredictionMatrix> = Vec::with_capacity(model.num_levels());
    let mut logs: Vec<LevelLog> = Vec::with_capacity(model.num_levels());

    for l in 0..model.num_levels() {
        let input = model.level_input(l, dataset.features(), &cached)?;
        let level_seed = rng::derive_seed(config.seed, &[l as u64]);
        let (sample, decay_rate) = if l == 0 {
            let ids = match config.rebalance {
                Some(strategy) => {
                    rebalance_sample(labels, &RebalanceSpec::from_strategy(strategy, labels)?, level_seed)?
                }
                None => (0..n).collect(),
            };
            (ids, None)
        } else {
            let rate = config.decay_rate_for(l);
            let ranking = rank_by_difficulty(&logs[l - 1].per_example_losses, rate)?;
            (draw_boost_sample(&ranking, sample_size, level_seed)?, Some(rate))
        };

        let steps_per_epoch = sample.len().div_ceil(config.batch_size);
        let sgd = config.sgd.clone().with_total_steps(config.epochs * steps_per_epoch);
        let net = &mut model.levels[l].net;
        let mut order = sample.clone();
        let mut steps = Vec::with_capacity(sgd.total_steps);
        let mut step = 0;
        for epoch in 0..config.epochs {
            order.shuffle(&mut rng::substream(level_seed, &[rng::TAG_SHUFFLE, epoch as u64]));
            for batch in order.chunks(config.batch_size) {
                let x = input.select_rows(batch);
                let y = labels.select_rows(batch);
                let dropout_seed = rng::derive_seed(level_seed, &[rng::TAG_DROPOUT, step as u64]);
                let (logits, cache) = net.forward_train(&x, Some(dropout_seed))?;
                let lr = sgd.lr_at(step);
                let (loss, d_logits) = config
                    .loss_family
                    .evaluate(&logits, &y, &weights, Exec::Sequential)
                    .map_err(|e| Error::Numeric(format!("level {l}, epoch {epoch}, step {step}, lr {lr}: {e}")))?;
                if !loss.total.is_finite() || !d_logits.all_finite() {
                    return Err(Error::Numeric(format!(
                        "level {l}, epoch {epoch}, step {step}, lr {lr}: loss diverged to {}",
                        loss.total
                    )));
                }
                net.zero_grad();
                net.backward(&cache, &d_logits)?;
                sgd_step(net.layers_mut(), &sgd, step);
                if config.progress_interval > 0 && step % config.progress_interval == 0 {
                    log::info!(
                        "level {l} epoch {epoch} step {step}/{} lr {lr} loss {:.6}",
                        sgd.total_steps,
                        loss.total
                    );
                }
                steps.push(StepLog { step, lr, loss: loss.total, per_class: loss.per_class });
                step += 1;
            }
        }
        model.levels[l].frozen = true;

        let logits = model.levels[l].net.forward_eval(&input, exec)?;
        let (full_loss, _) = config.loss_family.evaluate(&logits, labels, &weights, exec)?;
        cached.push(per_class_softmax(&logits)?);
        log::info!("level {l} done: train loss {:.6}", full_loss.total);
        logs.push(LevelLog {
            level: l,
            sample_size: sample.len(),
            decay_rate,
            steps,
            final_train_loss: full_loss.total,
            per_example_losses: full_loss.per_example,
        });
        on_level_done(l, model);
    }
    model.class_weights = Some(weights);
    Ok(TrainingLog { levels: logs, cached_predictions: cached })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::build_cascade;
    use crate::data::{generate, BoolOp, DependencyRule, SynthSpec};

    fn small_spec(seed: u64) -> SynthSpec {
        SynthSpec {
            num_examples: 300,
            feature_dim: 6,
            num_classes: 3,
            class_names: None,
            priors: vec![0.5, 0.3, 0.5],
            signal: vec![3.0, 3.0, 0.0],
            rules: vec![DependencyRule { target: 2, op: BoolOp::Xor, inputs: vec![0, 1], flip_rate: 0.0 }],
            test_fraction: 0.2,
            group_size: None,
            seed,
        }
    }

    fn quick_config() -> TrainConfig {
        TrainConfig { epochs: 2, batch_size: 32, seed: 5, ..TrainConfig::default() }
    }

    #[test]
    fn single_level_has_one_phase() {
        let (train, _) = generate(&small_spec(1)).unwrap();
        let mut m = build_cascade(3, 6, 1, 8, false, 0.5, 2).unwrap();
        let log = train_cascade(&mut m, &train, &quick_config(), Exec::default()).unwrap();
        assert_eq!(log.levels.len(), 1);
        assert!(m.is_trained());
        assert!(log.levels[0].decay_rate.is_none());
    }

    #[test]
    fn retraining_is_rejected() {
        let (train, _) = generate(&small_spec(1)).unwrap();
        let mut m = build_cascade(3, 6, 2, 8, false, 0.5, 2).unwrap();
        train_cascade(&mut m, &train, &quick_config(), Exec::default()).unwrap();
        assert!(matches!(train_cascade(&mut m, &train, &quick_config(), Exec::default()), Err(Error::State(_))));
    }

    #[test]
    fn earlier_levels_never_change() {
        let (train, _) = generate(&small_spec(3)).unwrap();
        let mut m = build_cascade(3, 6, 3, 8, false, 0.5, 4).unwrap();
        let mut snapshots = Vec::new();
        train_cascade_observed(&mut m, &train, &quick_config(), Exec::default(), |l, model| {
            snapshots.push((l, model.levels.clone()));
        })
        .unwrap();
        for (l, levels) in &snapshots {
            for (k, level) in levels.iter().enumerate().take(l + 1) {
                assert_eq!(*level, m.levels[k], "level {k} changed after level {l} was frozen");
            }
        }
    }

    #[test]
    fn cached_predictions_match_fresh_inference() {
        let (train, _) = generate(&small_spec(4)).unwrap();
        let mut m = build_cascade(3, 6, 3, 8, false, 0.5, 4).unwrap();
        let log = train_cascade(&mut m, &train, &quick_config(), Exec::default()).unwrap();
        let fresh = m.predict_with(train.features(), Exec::Sequential).unwrap();
        for (a, b) in log.cached_predictions.iter().zip(&fresh.per_level) {
            for (x, y) in a.as_tensor().values().iter().zip(b.as_tensor().values()) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn training_is_deterministic_across_exec_modes() {
        let (train, _) = generate(&small_spec(6)).unwrap();
        let run = |exec| {
            let mut m = build_cascade(3, 6, 2, 8, false, 0.5, 9).unwrap();
            let log = train_cascade(&mut m, &train, &quick_config(), exec).unwrap();
            (m, log.levels)
        };
        assert_eq!(run(Exec::Parallel), run(Exec::Sequential));
    }

    #[test]
    fn pwe_needs_two_classes() {
        let spec = SynthSpec { num_classes: 1, priors: vec![0.5], signal: vec![1.0], rules: vec![], ..small_spec(1) };
        let (train, _) = generate(&spec).unwrap();
        let mut m = build_cascade(1, 6, 1, 4, false, 0.5, 0).unwrap();
        let cfg = TrainConfig { loss_family: LossFamily::Pwe, ..quick_config() };
        assert!(matches!(train_cascade(&mut m, &train, &cfg, Exec::default()), Err(Error::Parameter(_))));
    }

    #[test]
    fn divergence_is_reported() {
        let (train, _) = generate(&small_spec(1)).unwrap();
        let mut m = build_cascade(3, 6, 1, 8, false, 0.0, 2).unwrap();
        let cfg = TrainConfig {
            sgd: SgdConfig { learning_rate: 1e200, momentum: 0.0, ..SgdConfig::default() },
            ..quick_config()
        };
        match train_cascade(&mut m, &train, &cfg, Exec::default()) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("level 0")),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn zero_decay_cascade_is_well_formed() {
        let (train, test) = generate(&small_spec(8)).unwrap();
        let mut m = build_cascade(3, 6, 3, 8, false, 0.5, 1).unwrap();
        let cfg = TrainConfig { decay_rates: vec![0.0], rebalance: None, ..quick_config() };
        train_cascade(&mut m, &train, &cfg, Exec::default()).unwrap();
        let p = m.predict(test.features()).unwrap();
        assert_eq!(p.per_level.len(), 3);
        assert!(p.ensemble.as_tensor().values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn ensemble_lies_between_level_extremes() {
        let (train, test) = generate(&small_spec(2)).unwrap();
        let mut m = build_cascade(3, 6, 3, 8, true, 0.5, 1).unwrap();
        train_cascade(&mut m, &train, &quick_config(), Exec::default()).unwrap();
        let p = m.predict(test.features()).unwrap();
        for i in 0..test.len() {
            for c in 0..3 {
                let vals: Vec<f64> = p.per_level.iter().map(|q| q.get(i, c)).collect();
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e = p.ensemble.get(i, c);
                assert!(e >= lo - 1e-15 && e <= hi + 1e-15);
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                assert!((e - mean).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn log_csv_columns() {
        let (train, _) = generate(&small_spec(1)).unwrap();
        let mut m = build_cascade(3, 6, 1, 8, false, 0.5, 2).unwrap();
        let log = train_cascade(&mut m, &train, &quick_config(), Exec::default()).unwrap();
        let mut buf = Vec::new();
        log.levels[0].write_csv(train.class_names(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,lr,total_loss,ce_c0,ce_c1,ce_c2\n0,0.1,"));
    }
}
