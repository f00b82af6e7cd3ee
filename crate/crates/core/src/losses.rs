//! Training objectives over per-class (background, positive) logit pairs.
//!
//! * Binary relevance: class-weighted cross-entropy, where errors on positive
//!   instances of class `c` cost `n_c / p_c`. Per-example losses average over
//!   classes.
//! * Smooth pairwise error: for scores `s = sigmoid(z_pos - z_bg)`,
//!   `L_i = ln(1 + sum_{u in Y+} sum_{v in Y-} exp(s_v - s_u))`, zero for rows
//!   without positives or without negatives. No pair-count normalization.
//!
//! The `*_logits` variants return the gradient of the mean loss with respect
//! to the `2C` logits.

use serde::{Deserialize, Serialize};

use crate::data::LabelMatrix;
use crate::diffkernel::{check_pair_layout, pair_log_probs, pair_softmax, PredictionMatrix, Tensor2};
use crate::par::{self, Exec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossFamily {
    #[serde(rename = "br-ce", alias = "BR-CE")]
    BrCe,
    #[serde(rename = "pwe", alias = "PWE")]
    Pwe,
}

impl std::fmt::Display for LossFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossFamily::BrCe => "br-ce",
            LossFamily::Pwe => "pwe",
        })
    }
}

impl std::str::FromStr for LossFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "br-ce" | "br" | "ce" => Ok(LossFamily::BrCe),
            "pwe" => Ok(LossFamily::Pwe),
            _ => Err(Error::Parameter(format!("unknown loss family {s:?}"))),
        }
    }
}

/// Positive-instance penalty `w_c = n_c / p_c` per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights(Vec<f64>);

impl ClassWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::Parameter(format!("class weight {w} must be positive")));
        }
        Ok(Self(weights))
    }

    pub fn uniform(num_classes: usize) -> Self {
        Self(vec![1.0; num_classes])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Counts `n_c / p_c` from `labels`. A class with no positives gets `n_c`
/// (as if it had one) and a class with no negatives gets `1 / p_c`.
pub fn compute_class_weights(labels: &LabelMatrix) -> Result<ClassWeights> {
    if labels.rows() == 0 || labels.cols() == 0 {
        return Err(Error::Data("class weights need at least one example and one class".into()));
    }
    let n = labels.rows();
    let weights = labels
        .positive_counts()
        .into_iter()
        .enumerate()
        .map(|(c, p)| {
            let neg = n - p;
            if p == 0 {
                log::warn!("class {c} has no positive examples; using weight {neg}");
            }
            if neg == 0 {
                log::warn!("class {c} has no negative examples; using weight 1/{p}");
            }
            neg.max(1) as f64 / p.max(1) as f64
        })
        .collect();
    ClassWeights::new(weights)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub per_example: Vec<f64>,
    /// Mean per-class term over examples; cross-entropy only.
    pub per_class: Vec<f64>,
}

impl LossBreakdown {
    fn from_rows(rows: Vec<(f64, Vec<f64>)>, num_classes: usize) -> Result<Self> {
        let n = rows.len();
        let mut per_class = vec![0.0; num_classes];
        let mut per_example = Vec::with_capacity(n);
        for (l, terms) in rows {
            if !l.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss {l} for example {}", per_example.len())));
            }
            per_example.push(l);
            for (acc, t) in per_class.iter_mut().zip(terms) {
                *acc += t;
            }
        }
        let denom = n.max(1) as f64;
        per_class.iter_mut().for_each(|v| *v /= denom);
        let total = per_example.iter().sum::<f64>() / denom;
        Ok(Self { total, per_example, per_class })
    }
}

fn check_shapes(rows: usize, cols: usize, labels: &LabelMatrix) -> Result<()> {
    if rows != labels.rows() || cols != labels.cols() {
        return Err(Error::Dimension(format!(
            "{rows}x{cols} predictions against {}x{} labels",
            labels.rows(),
            labels.cols()
        )));
    }
    Ok(())
}

fn check_weights(weights: &ClassWeights, classes: usize) -> Result<()> {
    if weights.len() != classes {
        return Err(Error::Dimension(format!("{} class weights for {classes} classes", weights.len())));
    }
    Ok(())
}

/// Weighted cross-entropy from positive-class probabilities.
pub fn weighted_ce(
    predictions: &PredictionMatrix,
    labels: &LabelMatrix,
    weights: &ClassWeights,
) -> Result<LossBreakdown> {
    let c = predictions.num_classes();
    check_shapes(predictions.num_examples(), c, labels)?;
    check_weights(weights, c)?;
    let w = weights.as_slice();
    let rows = (0..labels.rows())
        .map(|i| {
            let terms: Vec<f64> = (0..c)
                .map(|k| {
                    let q = predictions.get(i, k);
                    if labels.is_positive(i, k) {
                        -w[k] * q.ln()
                    } else {
                        -(1.0 - q).ln()
                    }
                })
                .collect();
            (terms.iter().sum::<f64>() / c as f64, terms)
        })
        .collect();
    LossBreakdown::from_rows(rows, c)
}

/// Weighted cross-entropy and its gradient from `2C` pair logits.
pub fn weighted_ce_logits(
    logits: &Tensor2,
    labels: &LabelMatrix,
    weights: &ClassWeights,
    exec: Exec,
) -> Result<(LossBreakdown, Tensor2)> {
    let c = check_pair_layout(logits.cols())?;
    check_shapes(logits.rows(), c, labels)?;
    check_weights(weights, c)?;
    let w = weights.as_slice();
    let n = logits.rows();
    let scale = 1.0 / (c as f64 * n.max(1) as f64);
    let rows = par::map_indices(exec, n, |i| {
        let z = logits.row(i);
        let mut terms = Vec::with_capacity(c);
        let mut grad = vec![0.0; 2 * c];
        for k in 0..c {
            let (z_bg, z_pos) = (z[2 * k], z[2 * k + 1]);
            let (ln_q, ln_not_q) = pair_log_probs(z_bg, z_pos);
            let q = pair_softmax(z_bg, z_pos).1;
            let (term, d_pos) =
                if labels.is_positive(i, k) { (-w[k] * ln_q, -w[k] * (1.0 - q)) } else { (-ln_not_q, q) };
            terms.push(term);
            grad[2 * k] = -d_pos * scale;
            grad[2 * k + 1] = d_pos * scale;
        }
        ((terms.iter().sum::<f64>() / c as f64, terms), grad)
    });
    assemble(rows, n, c, true)
}

/// Per row: `((loss, per-class terms), gradient row)`.
type RowResult = ((f64, Vec<f64>), Vec<f64>);

fn assemble(rows: Vec<RowResult>, n: usize, c: usize, per_class: bool) -> Result<(LossBreakdown, Tensor2)> {
    let mut grad = Vec::with_capacity(n * 2 * c);
    let mut losses = Vec::with_capacity(n);
    for (l, g) in rows {
        losses.push(l);
        grad.extend(g);
    }
    let breakdown = LossBreakdown::from_rows(losses, if per_class { c } else { 0 })?;
    Ok((breakdown, Tensor2::new(n, 2 * c, grad)?))
}

/// Per-row smooth pairwise loss and `dL/ds` for scores `s`.
fn pwe_row(scores: &[f64], labels: &[u8]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; scores.len()];
    let pos: Vec<usize> = (0..scores.len()).filter(|&k| labels[k] == 1).collect();
    let neg: Vec<usize> = (0..scores.len()).filter(|&k| labels[k] == 0).collect();
    if pos.is_empty() || neg.is_empty() {
        return (0.0, grad);
    }
    let mut sum = 0.0;
    for &u in &pos {
        for &v in &neg {
            let e = (scores[v] - scores[u]).exp();
            sum += e;
            grad[u] -= e;
            grad[v] += e;
        }
    }
    let denom = 1.0 + sum;
    grad.iter_mut().for_each(|g| *g /= denom);
    (sum.ln_1p(), grad)
}

/// Smooth pairwise-error loss from per-class scores in `(0, 1)`.
pub fn smooth_pwe(scores: &PredictionMatrix, labels: &LabelMatrix) -> Result<LossBreakdown> {
    let c = scores.num_classes();
    check_shapes(scores.num_examples(), c, labels)?;
    let rows = (0..labels.rows()).map(|i| (pwe_row(scores.row(i), labels.row(i)).0, Vec::new())).collect();
    LossBreakdown::from_rows(rows, 0)
}

/// Smooth pairwise-error loss and its gradient from `2C` pair logits, with
/// scores `s_c = sigmoid(z_pos - z_bg)`.
pub fn smooth_pwe_logits(logits: &Tensor2, labels: &LabelMatrix, exec: Exec) -> Result<(LossBreakdown, Tensor2)> {
    let c = check_pair_layout(logits.cols())?;
    check_shapes(logits.rows(), c, labels)?;
    let n = logits.rows();
    let scale = 1.0 / n.max(1) as f64;
    let rows = par::map_indices(exec, n, |i| {
        let z = logits.row(i);
        let scores: Vec<f64> = z.chunks_exact(2).map(|p| pair_softmax(p[0], p[1]).1).collect();
        let (l, d_scores) = pwe_row(&scores, labels.row(i));
        let mut grad = vec![0.0; 2 * c];
        for k in 0..c {
            let d = d_scores[k] * scores[k] * (1.0 - scores[k]) * scale;
            grad[2 * k] = -d;
            grad[2 * k + 1] = d;
        }
        ((l, Vec::new()), grad)
    });
    assemble(rows, n, c, false)
}

impl LossFamily {
    /// Loss and logit gradient for this family. `weights` is ignored by PWE.
    pub fn evaluate(
        self,
        logits: &Tensor2,
        labels: &LabelMatrix,
        weights: &ClassWeights,
        exec: Exec,
    ) -> Result<(LossBreakdown, Tensor2)> {
        match self {
            LossFamily::BrCe => weighted_ce_logits(logits, labels, weights, exec),
            LossFamily::Pwe => smooth_pwe_logits(logits, labels, exec),
        }
    }
}
