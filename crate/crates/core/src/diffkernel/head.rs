use serde::{Deserialize, Serialize};

use super::Tensor2;
use crate::{Error, Result};

/// Per-example, per-class positive probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionMatrix(Tensor2);

impl PredictionMatrix {
    pub fn new(probs: Tensor2) -> Result<Self> {
        if let Some(v) = probs.values().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Numeric(format!("probability {v} outside [0, 1]")));
        }
        Ok(Self(probs))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Tensor2::from_rows(rows)?)
    }

    pub fn num_examples(&self) -> usize {
        self.0.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.0.cols()
    }

    pub fn get(&self, example: usize, class: usize) -> f64 {
        self.0.get(example, class)
    }

    pub fn row(&self, example: usize) -> &[f64] {
        self.0.row(example)
    }

    /// Scores of one class across all examples.
    pub fn column(&self, class: usize) -> Vec<f64> {
        (0..self.0.rows()).map(|r| self.0.get(r, class)).collect()
    }

    pub fn as_tensor(&self) -> &Tensor2 {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor2 {
        self.0
    }
}

/// Probabilities of one (background, positive) logit pair.
pub fn pair_softmax(z_bg: f64, z_pos: f64) -> (f64, f64) {
    let m = z_bg.max(z_pos);
    let e_bg = (z_bg - m).exp();
    let e_pos = (z_pos - m).exp();
    let s = e_bg + e_pos;
    (e_bg / s, e_pos / s)
}

/// `ln q` and `ln (1 - q)` for the positive probability `q` of a pair,
/// computed without forming `q`.
pub fn pair_log_probs(z_bg: f64, z_pos: f64) -> (f64, f64) {
    (-softplus(z_bg - z_pos), -softplus(z_pos - z_bg))
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn check_pair_layout(cols: usize) -> Result<usize> {
    if !cols.is_multiple_of(2) {
        return Err(Error::Layout(format!("{cols} logit columns cannot form (background, positive) pairs")));
    }
    Ok(cols / 2)
}

/// Per-class softmax against background.
///
/// Logit columns are laid out as `[bg_0, pos_0, bg_1, pos_1, ...]`; class `c`
/// gets `exp(pos_c) / (exp(pos_c) + exp(bg_c))`.
pub fn per_class_softmax(logits: &Tensor2) -> Result<PredictionMatrix> {
    let classes = check_pair_layout(logits.cols())?;
    let mut out = Vec::with_capacity(logits.rows() * classes);
    for row in logits.iter_rows() {
        for pair in row.chunks_exact(2) {
            out.push(pair_softmax(pair[0], pair[1]).1);
        }
    }
    Ok(PredictionMatrix(Tensor2::from_raw(logits.rows(), classes, out)))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
