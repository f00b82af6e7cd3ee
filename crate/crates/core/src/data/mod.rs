//! Datasets: synthetic multi-label generation, CSV I/O, findings-metadata
//! parsing and class statistics.

mod csvio;
mod findings;
mod labels;
mod synth;

use serde::{Deserialize, Serialize};

pub use csvio::{read_csv, read_csv_path, write_csv, write_csv_path};
pub use findings::{
    chestxray14_class_names, parse_label_string, read_findings_metadata, read_findings_metadata_path, FindingsMetadata,
    CHESTXRAY14_CLASSES, DEFAULT_FINDINGS_COLUMN, DEFAULT_ID_COLUMN, NO_FINDING,
};
pub use labels::{class_stats, ClassStats, CoOccurrence, LabelMatrix};
pub use synth::{generate, BoolOp, DependencyRule, SynthSpec};

use crate::diffkernel::Tensor2;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Feature matrix with aligned multi-hot labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Tensor2,
    labels: LabelMatrix,
    class_names: Vec<String>,
    split: Split,
}

impl Dataset {
    pub fn new(features: Tensor2, labels: LabelMatrix, class_names: Vec<String>, split: Split) -> Result<Self> {
        if features.rows() != labels.rows() {
            return Err(Error::Dimension(format!("{} feature rows but {} label rows", features.rows(), labels.rows())));
        }
        if class_names.len() != labels.cols() {
            return Err(Error::Dimension(format!(
                "{} class names for {} label columns",
                class_names.len(),
                labels.cols()
            )));
        }
        Ok(Self { features, labels, class_names, split })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.cols()
    }

    pub fn features(&self) -> &Tensor2 {
        &self.features
    }

    pub fn labels(&self) -> &LabelMatrix {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn subset(&self, ids: &[usize], split: Split) -> Dataset {
        Dataset {
            features: self.features.select_rows(ids),
            labels: self.labels.select_rows(ids),
            class_names: self.class_names.clone(),
            split,
        }
    }

    pub fn stats(&self) -> ClassStats {
        class_stats(&self.labels)
    }
}
