//! Resampling: class rebalancing for the base level and the rank-based
//! difficulty sampler that feeds every later cascade level.
//!
//! Difficulty sampling sorts examples by loss, hardest first, and gives the
//! example at 1-based rank `i` out of `N` the selection probability
//!
//! ```text
//! p_i = exp(-i R / N) / sum_{n=1..N} exp(-n R / N)
//! ```
//!
//! where `R >= 0` is the decay rate. `R = 0` is uniform; larger `R` moves
//! mass toward the hardest examples.

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::data::LabelMatrix;
use crate::{rng, Error, Result};

pub const DEFAULT_DECAY_RATE: f64 = 2.0;

/// Selection probabilities for difficulty ranks `1..=n`.
pub fn selection_probabilities(n: usize, decay_rate: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Parameter("selection probabilities need at least one example".into()));
    }
    if !(decay_rate >= 0.0 && decay_rate.is_finite()) {
        return Err(Error::Parameter(format!("decay rate {decay_rate} must be finite and >= 0")));
    }
    if decay_rate == 0.0 {
        return Ok(vec![1.0 / n as f64; n]);
    }
    let step = decay_rate / n as f64;
    // Dividing out exp(-R/N) leaves weights exp(-(i-1)R/N) whose sum is a
    // geometric series: (1 - e^-R) / (1 - e^-(R/N)).
    let norm = (-decay_rate).exp_m1() / (-step).exp_m1();
    Ok((0..n).map(|k| (-(k as f64) * step).exp() / norm).collect())
}

/// Examples ordered hardest first, with their selection probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyRanking {
    /// `example_ids[k]` is the example at rank `k + 1`.
    pub example_ids: Vec<usize>,
    /// Losses in rank order (non-increasing).
    pub losses: Vec<f64>,
    pub ranks: Vec<usize>,
    pub selection_probs: Vec<f64>,
    pub decay_rate: f64,
}

impl DifficultyRanking {
    pub fn len(&self) -> usize {
        self.example_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.example_ids.is_empty()
    }

    /// Audit table: `example_id,loss,rank,p_i`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["example_id", "loss", "rank", "p_i"])?;
        for k in 0..self.len() {
            w.write_record([
                self.example_ids[k].to_string(),
                self.losses[k].to_string(),
                self.ranks[k].to_string(),
                self.selection_probs[k].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<ranking csv>", e))?;
        Ok(())
    }
}

/// Stable descending sort of per-example losses; ties keep input order.
pub fn rank_by_difficulty(per_example_losses: &[f64], decay_rate: f64) -> Result<DifficultyRanking> {
    if let Some((i, l)) = per_example_losses.iter().enumerate().find(|(_, l)| !l.is_finite() || **l < 0.0) {
        return Err(Error::Numeric(format!("loss {l} of example {i} is not a finite non-negative number")));
    }
    let mut example_ids: Vec<usize> = (0..per_example_losses.len()).collect();
    example_ids.sort_by(|&a, &b| per_example_losses[b].total_cmp(&per_example_losses[a]));
    let losses = example_ids.iter().map(|&i| per_example_losses[i]).collect();
    let n = example_ids.len();
    Ok(DifficultyRanking {
        example_ids,
        losses,
        ranks: (1..=n).collect(),
        selection_probs: selection_probabilities(n, decay_rate)?,
        decay_rate,
    })
}

/// `sample_size` independent draws, with replacement, from the ranking's
/// selection distribution. Returns example ids.
pub fn draw_boost_sample(ranking: &DifficultyRanking, sample_size: usize, seed: u64) -> Result<Vec<usize>> {
    if sample_size == 0 {
        return Err(Error::Parameter("sample size must be at least 1".into()));
    }
    let dist = WeightedIndex::new(&ranking.selection_probs)
        .map_err(|e| Error::Numeric(format!("invalid selection distribution: {e}")))?;
    let mut rng = rng::substream(seed, &[rng::TAG_SAMPLE]);
    Ok((0..sample_size).map(|_| ranking.example_ids[dist.sample(&mut rng)]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RebalanceStrategy {
    /// Every class targets the median positive count.
    Median,
    /// Every class targets the mean positive count.
    Mean,
    /// Targets given explicitly.
    Explicit,
}

/// Per-class target counts for rebalancing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RebalanceSpec {
    pub strategy: RebalanceStrategy,
    pub targets: Vec<f64>,
}

impl RebalanceSpec {
    pub fn from_strategy(strategy: RebalanceStrategy, labels: &LabelMatrix) -> Result<Self> {
        let counts: Vec<usize> = labels.positive_counts().into_iter().filter(|&c| c > 0).collect();
        if counts.is_empty() {
            return Err(Error::Data("no positive labels to rebalance".into()));
        }
        let target = match strategy {
            RebalanceStrategy::Median => median(&counts),
            RebalanceStrategy::Mean => counts.iter().sum::<usize>() as f64 / counts.len() as f64,
            RebalanceStrategy::Explicit => {
                return Err(Error::Parameter("explicit targets need RebalanceSpec::explicit".into()))
            }
        };
        Ok(Self { strategy, targets: vec![target; labels.cols()] })
    }

    pub fn median(labels: &LabelMatrix) -> Result<Self> {
        Self::from_strategy(RebalanceStrategy::Median, labels)
    }

    pub fn explicit(targets: Vec<f64>) -> Result<Self> {
        if let Some(t) = targets.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::Parameter(format!("rebalance target {t} must be positive")));
        }
        Ok(Self { strategy: RebalanceStrategy::Explicit, targets })
    }

    /// Draw weight per example: the largest `target_c / count_c` over its
    /// positive classes, or 1 for examples with no positive label.
    pub fn example_weights(&self, labels: &LabelMatrix) -> Result<Vec<f64>> {
        if self.targets.len() != labels.cols() {
            return Err(Error::Dimension(format!("{} targets for {} classes", self.targets.len(), labels.cols())));
        }
        let counts = labels.positive_counts();
        if counts.iter().all(|&c| c == 0) {
            return Err(Error::Data("labels contain no positive example".into()));
        }
        Ok((0..labels.rows())
            .map(|r| {
                (0..labels.cols())
                    .filter(|&c| labels.is_positive(r, c))
                    .map(|c| self.targets[c] / counts[c] as f64)
                    .fold(None, |acc: Option<f64>, w| Some(acc.map_or(w, |a| a.max(w))))
                    .unwrap_or(1.0)
            })
            .collect())
    }
}

fn median(values: &[usize]) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable();
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m] as f64
    } else {
        (v[m - 1] + v[m]) as f64 / 2.0
    }
}

/// Draws `labels.rows()` example ids with replacement, proportional to the
/// rebalancing weights.
pub fn rebalance_sample(labels: &LabelMatrix, spec: &RebalanceSpec, seed: u64) -> Result<Vec<usize>> {
    let weights = spec.example_weights(labels)?;
    let dist = WeightedIndex::new(&weights).map_err(|e| Error::Numeric(format!("invalid rebalance weights: {e}")))?;
    let mut rng = rng::substream(seed, &[rng::TAG_SAMPLE, 1]);
    Ok((0..labels.rows()).map(|_| dist.sample(&mut rng)).collect())
}
