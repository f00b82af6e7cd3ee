//! ROC-AUC per class and evaluation reports.
//!
//! `roc_auc` integrates the ROC curve with the trapezoid rule, stepping once
//! per distinct score so tied positives and negatives contribute a diagonal
//! segment (half credit per tied pair). `auc_oracle` is the quadratic
//! Mann-Whitney pair count used to cross-check it.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::LabelMatrix;
use crate::diffkernel::PredictionMatrix;
use crate::par::{self, Exec};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Descending; point `k + 1` counts scores `>= thresholds[k]` as positive.
    pub thresholds: Vec<f64>,
    /// Starts at 0 and ends at 1, one entry longer than `thresholds`.
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
    pub positives: usize,
    pub negatives: usize,
    /// Trapezoid area in pair units: `sum dFP * (TP_prev + TP_cur) / 2`.
    area_pairs: f64,
}

impl RocCurve {
    pub fn auc(&self) -> f64 {
        self.area_pairs / (self.positives as f64 * self.negatives as f64)
    }
}

fn count_classes(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::Numeric(format!("score {s}")));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Label(format!("label {l} is not 0 or 1")));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedAuc { positives: pos, negatives: neg });
    }
    Ok((pos, neg))
}

pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<RocCurve> {
    let (p, n) = count_classes(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut curve = RocCurve {
        thresholds: Vec::new(),
        tpr: vec![0.0],
        fpr: vec![0.0],
        positives: p,
        negatives: n,
        area_pairs: 0.0,
    };
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let threshold = scores[order[k]];
        let (tp_prev, fp_prev) = (tp, fp);
        while k < order.len() && scores[order[k]] == threshold {
            if labels[order[k]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        curve.area_pairs += (fp - fp_prev) as f64 * (tp + tp_prev) as f64 / 2.0;
        curve.thresholds.push(threshold);
        curve.tpr.push(tp as f64 / p as f64);
        curve.fpr.push(fp as f64 / n as f64);
    }
    Ok(curve)
}

/// Area under the ROC curve. Labels with a single class yield
/// [`Error::UndefinedAuc`].
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    roc_curve(scores, labels).map(|c| c.auc())
}

/// Mann-Whitney estimate: mean over (positive, negative) pairs of 1 when the
/// positive scores higher, 0.5 on ties. Quadratic; meant for cross-checks.
pub fn auc_oracle(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (p, n) = count_classes(scores, labels)?;
    let mut credit = 0.0;
    let negatives: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l == 0).map(|(&s, _)| s).collect();
    for (&si, _) in scores.iter().zip(labels).filter(|(_, &l)| l == 1) {
        for &sj in &negatives {
            credit += if si > sj {
                1.0
            } else if si == sj {
                0.5
            } else {
                0.0
            };
        }
    }
    Ok(credit / (p as f64 * n as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub name: String,
    pub positives: usize,
    pub negatives: usize,
    /// `None` when the class has no positives or no negatives.
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<ClassRow>,
    /// Mean over defined classes only.
    pub macro_auc: Option<f64>,
    pub excluded: Vec<String>,
}

pub fn build_report(
    predictions: &PredictionMatrix,
    labels: &LabelMatrix,
    class_names: &[String],
) -> Result<EvalReport> {
    build_report_with(predictions, labels, class_names, Exec::default())
}

pub fn build_report_with(
    predictions: &PredictionMatrix,
    labels: &LabelMatrix,
    class_names: &[String],
    exec: Exec,
) -> Result<EvalReport> {
    let c = labels.cols();
    if predictions.num_classes() != c || predictions.num_examples() != labels.rows() {
        return Err(Error::Dimension(format!(
            "{}x{} predictions for {}x{c} labels",
            predictions.num_examples(),
            predictions.num_classes(),
            labels.rows()
        )));
    }
    if class_names.len() != c {
        return Err(Error::Dimension(format!("{} class names for {c} classes", class_names.len())));
    }
    let rows = par::map_indices(exec, c, |k| -> Result<ClassRow> {
        let column = labels.column(k);
        let positives = column.iter().filter(|&&v| v == 1).count();
        let auc = match roc_auc(&predictions.column(k), &column) {
            Ok(a) => Some(a),
            Err(Error::UndefinedAuc { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(ClassRow { name: class_names[k].clone(), positives, negatives: column.len() - positives, auc })
    });
    let classes = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let defined: Vec<f64> = classes.iter().filter_map(|r| r.auc).collect();
    let macro_auc = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    let excluded = classes.iter().filter(|r| r.auc.is_none()).map(|r| r.name.clone()).collect();
    Ok(EvalReport { classes, macro_auc, excluded })
}

fn fmt_auc(a: Option<f64>) -> String {
    a.map_or_else(|| "undefined".to_string(), |v| format!("{v:.4}"))
}

impl EvalReport {
    pub fn auc_of(&self, name: &str) -> Option<f64> {
        self.classes.iter().find(|r| r.name == name).and_then(|r| r.auc)
    }

    /// One row per class with its AUC, then the macro average.
    pub fn render_text(&self) -> String {
        let width = self.classes.iter().map(|r| r.name.len()).max().unwrap_or(0).max("Macro average".len());
        let mut s = String::new();
        let _ = writeln!(s, "{:<width$}  {:>9}  {:>9}  {:>9}", "Class", "AUC", "Positives", "Negatives");
        let _ = writeln!(s, "{}", "-".repeat(width + 33));
        for r in &self.classes {
            let _ = writeln!(s, "{:<width$}  {:>9}  {:>9}  {:>9}", r.name, fmt_auc(r.auc), r.positives, r.negatives);
        }
        let _ = writeln!(s, "{}", "-".repeat(width + 33));
        let _ = writeln!(s, "{:<width$}  {:>9}", "Macro average", fmt_auc(self.macro_auc));
        if !self.excluded.is_empty() {
            let _ = writeln!(s, "excluded from macro average (single-class labels): {}", self.excluded.join(", "));
        }
        s
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["class", "auc", "positives", "negatives"])?;
        for r in &self.classes {
            w.write_record([r.name.clone(), fmt_auc(r.auc), r.positives.to_string(), r.negatives.to_string()])?;
        }
        w.write_record(["macro_average".to_string(), fmt_auc(self.macro_auc), String::new(), String::new()])?;
        w.flush().map_err(|e| Error::io("<report csv>", e))?;
        Ok(())
    }
}

/// Per-level AUCs next to the ensemble, to show what each level adds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelBreakdown {
    pub class_names: Vec<String>,
    /// `(row label, report)`: one row per level, then `"ensemble"`.
    pub rows: Vec<(String, EvalReport)>,
}

impl LevelBreakdown {
    pub fn render_text(&self) -> String {
        let label_w = self.rows.iter().map(|(l, _)| l.len()).max().unwrap_or(5).max(5);
        let col_w = self.class_names.iter().map(String::len).max().unwrap_or(9).max(9);
        let mut s = String::new();
        let _ = write!(s, "{:<label_w$}", "level");
        for name in &self.class_names {
            let _ = write!(s, "  {name:>col_w$}");
        }
        let _ = writeln!(s, "  {:>col_w$}", "macro");
        for (label, report) in &self.rows {
            let _ = write!(s, "{label:<label_w$}");
            for r in &report.classes {
                let _ = write!(s, "  {:>col_w$}", fmt_auc(r.auc));
            }
            let _ = writeln!(s, "  {:>col_w$}", fmt_auc(report.macro_auc));
        }
        s
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<String> = std::iter::once("level".to_string())
            .chain(self.class_names.iter().cloned())
            .chain(std::iter::once("macro_average".to_string()))
            .collect();
        w.write_record(&header)?;
        for (label, report) in &self.rows {
            let rec: Vec<String> = std::iter::once(label.clone())
                .chain(report.classes.iter().map(|r| fmt_auc(r.auc)))
                .chain(std::iter::once(fmt_auc(report.macro_auc)))
                .collect();
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<breakdown csv>", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::chestxray14_class_names;
    use proptest::prelude::*;
    use rand::Rng as _;

    #[test]
    fn known_values() {
        assert_eq!(roc_auc(&[0.9, 0.1], &[1, 0]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.9, 0.1], &[0, 1]).unwrap(), 0.0);
        assert_eq!(roc_auc(&[0.8, 0.8, 0.6, 0.2], &[1, 0, 1, 0]).unwrap(), 0.625);
        assert_eq!(auc_oracle(&[0.8, 0.8, 0.6, 0.2], &[1, 0, 1, 0]).unwrap(), 0.625);
        assert_eq!(auc_oracle(&[0.3; 6], &[1, 0, 1, 0, 0, 1]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.3; 6], &[1, 0, 1, 0, 0, 1]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_undefined_not_a_panic() {
        assert!(matches!(roc_auc(&[0.1, 0.2], &[1, 1]), Err(Error::UndefinedAuc { positives: 2, negatives: 0 })));
        assert!(matches!(auc_oracle(&[0.1, 0.2], &[0, 0]), Err(Error::UndefinedAuc { .. })));
    }

    #[test]
    fn curve_runs_from_origin_to_corner() {
        let c = roc_curve(&[0.1, 0.4, 0.35, 0.8, 0.4], &[0, 0, 1, 1, 1]).unwrap();
        assert_eq!((c.tpr[0], c.fpr[0]), (0.0, 0.0));
        assert_eq!((*c.tpr.last().unwrap(), *c.fpr.last().unwrap()), (1.0, 1.0));
        assert!(c.tpr.windows(2).all(|w| w[0] <= w[1]));
        assert!(c.fpr.windows(2).all(|w| w[0] <= w[1]));
        assert!(c.thresholds.windows(2).all(|w| w[0] > w[1]));
        assert_eq!(c.thresholds.len(), 4);
    }

    #[test]
    fn report_rows_for_fourteen_findings() {
        let names = chestxray14_class_names();
        let mut rng = crate::rng::stream(5);
        let n = 50;
        let labels: Vec<Vec<u8>> = (0..n).map(|_| (0..14).map(|_| rng.random_range(0..2u8)).collect()).collect();
        let probs: Vec<Vec<f64>> = labels.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
        let report = build_report(
            &PredictionMatrix::from_rows(&probs).unwrap(),
            &LabelMatrix::from_rows(&labels).unwrap(),
            &names,
        )
        .unwrap();
        let text = report.render_text();
        for name in ["Atelectasis", "Cardiomegaly", "Pleural_Thickening", "Hernia"] {
            assert!(text.contains(name));
        }
        assert!(report.classes.iter().all(|r| r.auc == Some(1.0)));
        assert_eq!(report.macro_auc, Some(1.0));
    }

    #[test]
    fn undefined_class_is_labelled_and_excluded() {
        let labels = LabelMatrix::from_rows(&[[1, 0], [0, 0], [1, 0]]).unwrap();
        let probs = PredictionMatrix::from_rows(&[[0.9, 0.1], [0.2, 0.3], [0.8, 0.5]]).unwrap();
        let report = build_report(&probs, &labels, &["a".into(), "b".into()]).unwrap();
        assert_eq!(report.classes[1].auc, None);
        assert_eq!(report.macro_auc, Some(1.0));
        assert_eq!(report.excluded, vec!["b".to_string()]);
        assert!(report.render_text().contains("undefined"));
        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().contains("b,undefined,0,3"));
    }

    #[test]
    fn null_scores_concentrate_at_half() {
        let mut rng = crate::rng::stream(99);
        let n = 10_000;
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let auc = roc_auc(&scores, &labels).unwrap();
        assert!((auc - 0.5).abs() < 0.02, "{auc}");
    }

    fn tie_heavy() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
        (2usize..120).prop_flat_map(|n| {
            (prop::collection::vec((0u8..6).prop_map(|v| v as f64 / 5.0), n), prop::collection::vec(0u8..2, n))
        })
    }

    proptest! {
        #[test]
        fn matches_oracle((scores, labels) in tie_heavy()) {
            match (roc_auc(&scores, &labels), auc_oracle(&scores, &labels)) {
                (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-9),
                (Err(Error::UndefinedAuc { .. }), Err(Error::UndefinedAuc { .. })) => {}
                other => prop_assert!(false, "{:?}", other),
            }
        }

        #[test]
        fn complement_and_monotone_transform(n in 2usize..200, seed in any::<u64>()) {
            let mut rng = crate::rng::stream(seed);
            let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
            labels[0] = 1;
            labels[1] = 0;
            let a = roc_auc(&scores, &labels).unwrap();
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            prop_assert!((a + roc_auc(&neg, &labels).unwrap() - 1.0).abs() < 1e-12);
            let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
            prop_assert!((a - roc_auc(&warped, &labels).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn permutation_invariant((scores, labels) in tie_heavy(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut idx: Vec<usize> = (0..scores.len()).collect();
            idx.shuffle(&mut crate::rng::stream(seed));
            let s2: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            let l2: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            if let (Ok(a), Ok(b)) = (roc_auc(&scores, &labels), roc_auc(&s2, &l2)) {
                prop_assert_eq!(a, b);
            }
        }
    }
}
