use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Multi-hot label matrix, one row per example and one column per class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMatrix {
    rows: usize,
    cols: usize,
    values: Vec<u8>,
}

impl LabelMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<u8>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Dimension(format!("{} labels for a {rows}x{cols} matrix", values.len())));
        }
        if let Some(pos) = values.iter().position(|&v| v > 1) {
            return Err(Error::Label(format!(
                "label {} at ({}, {}) is not 0 or 1",
                values[pos],
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Dimension(format!("label row {i} has {} classes, expected {cols}", r.len())));
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, values)
    }

    /// Converts real-valued labels, rejecting anything but exact 0 or 1.
    pub fn from_f64_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let mut out = Vec::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            let row = r
                .as_ref()
                .iter()
                .map(|&v| match v {
                    0.0 => Ok(0u8),
                    1.0 => Ok(1u8),
                    v => Err(Error::Label(format!("label {v} in row {i} is not 0 or 1"))),
                })
                .collect::<Result<Vec<_>>>()?;
            out.push(row);
        }
        Self::from_rows(&out)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.values[r * self.cols + c]
    }

    pub fn is_positive(&self, r: usize, c: usize) -> bool {
        self.get(r, c) == 1
    }

    pub fn row(&self, r: usize) -> &[u8] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<u8> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    /// Positive count per class.
    pub fn positive_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.cols];
        for r in 0..self.rows {
            for (c, &v) in self.row(r).iter().enumerate() {
                counts[c] += v as usize;
            }
        }
        counts
    }

    pub fn select_rows(&self, ids: &[usize]) -> LabelMatrix {
        let mut values = Vec::with_capacity(ids.len() * self.cols);
        for &i in ids {
            values.extend_from_slice(self.row(i));
        }
        LabelMatrix { rows: ids.len(), cols: self.cols, values }
    }
}

/// Joint positive counts between classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoOccurrence {
    pub num_classes: usize,
    /// Row-major `C x C`; the diagonal holds per-class totals.
    pub joint: Vec<usize>,
    pub totals: Vec<usize>,
}

impl CoOccurrence {
    pub fn joint(&self, a: usize, b: usize) -> usize {
        self.joint[a * self.num_classes + b]
    }
}

/// Per-class positive/negative counts and co-occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassStats {
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
    pub co_occurrence: CoOccurrence,
}

pub fn class_stats(labels: &LabelMatrix) -> ClassStats {
    let c = labels.cols();
    let mut joint = vec![0usize; c * c];
    let mut active = Vec::with_capacity(c);
    for r in 0..labels.rows() {
        active.clear();
        active.extend((0..c).filter(|&k| labels.is_positive(r, k)));
        for &a in &active {
            for &b in &active {
                joint[a * c + b] += 1;
            }
        }
    }
    let totals: Vec<usize> = (0..c).map(|k| joint[k * c + k]).collect();
    let negatives = totals.iter().map(|&p| labels.rows() - p).collect();
    ClassStats { positives: totals.clone(), negatives, co_occurrence: CoOccurrence { num_classes: c, joint, totals } }
}

impl ClassStats {
    /// Plain-text summary: totals and prevalence per class, then the joint matrix.
    pub fn render(&self, class_names: &[String]) -> String {
        use std::fmt::Write;
        let width = class_names.iter().map(String::len).max().unwrap_or(5).max(5);
        let mut s = String::new();
        let _ = writeln!(s, "{:<width$}  {:>9}  {:>9}  {:>10}", "class", "positive", "negative", "prevalence");
        for (k, name) in class_names.iter().enumerate() {
            let n = self.positives[k] + self.negatives[k];
            let prev = if n == 0 { 0.0 } else { self.positives[k] as f64 / n as f64 };
            let _ = writeln!(s, "{name:<width$}  {:>9}  {:>9}  {prev:>10.4}", self.positives[k], self.negatives[k]);
        }
        let _ = writeln!(s, "co-occurrence:");
        let c = self.co_occurrence.num_classes;
        for a in 0..c {
            let row: Vec<String> = (0..c).map(|b| format!("{:>7}", self.co_occurrence.joint(a, b))).collect();
            let _ = writeln!(s, "{:<width$} {}", class_names.get(a).map_or("?", String::as_str), row.join(""));
        }
        s
    }
}
