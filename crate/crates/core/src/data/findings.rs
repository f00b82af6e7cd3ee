use std::io::Read;
use std::path::Path;

use super::LabelMatrix;
use crate::{Error, Result};

/// The fourteen thoracic findings, in report row order.
pub const CHESTXRAY14_CLASSES: [&str; 14] = [
    "Atelectasis",
    "Cardiomegaly",
    "Effusion",
    "Infiltration",
    "Mass",
    "Nodule",
    "Pneumonia",
    "Pneumothorax",
    "Consolidation",
    "Edema",
    "Emphysema",
    "Fibrosis",
    "Pleural_Thickening",
    "Hernia",
];

pub const NO_FINDING: &str = "No Finding";

pub fn chestxray14_class_names() -> Vec<String> {
    CHESTXRAY14_CLASSES.iter().map(|s| s.to_string()).collect()
}

/// Parses a pipe-delimited findings string such as `"Cardiomegaly|Effusion"`
/// into a multi-hot vector over `class_names`.
pub fn parse_label_string(s: &str, class_names: &[String]) -> Result<Vec<u8>> {
    let mut out = vec![0u8; class_names.len()];
    let s = s.trim();
    if s == NO_FINDING {
        return Ok(out);
    }
    for token in s.split('|').map(str::trim) {
        let idx =
            class_names.iter().position(|c| c == token).ok_or_else(|| Error::UnknownFinding(token.to_string()))?;
        out[idx] = 1;
    }
    Ok(out)
}

/// Labels read from a findings metadata table.
#[derive(Debug, Clone)]
pub struct FindingsMetadata {
    pub image_ids: Vec<String>,
    pub labels: LabelMatrix,
    pub class_names: Vec<String>,
}

pub const DEFAULT_ID_COLUMN: &str = "Image Index";
pub const DEFAULT_FINDINGS_COLUMN: &str = "Finding Labels";

/// Reads a metadata CSV with an image-identifier column and a findings
/// column. Other columns are ignored; images are never touched.
pub fn read_findings_metadata<R: Read>(
    reader: R,
    id_column: &str,
    findings_column: &str,
    class_names: &[String],
) -> Result<FindingsMetadata> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Parse { line: 1, message: format!("missing column {name:?}") })
    };
    let (id_idx, findings_idx) = (find(id_column)?, find(findings_column)?);
    let mut image_ids = Vec::new();
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(i + 2, |p| p.line() as usize);
        let field = |idx: usize| {
            record.get(idx).ok_or_else(|| Error::Parse { line, message: format!("row has no column {idx}") })
        };
        let labels = parse_label_string(field(findings_idx)?, class_names)
            .map_err(|e| Error::Parse { line, message: e.to_string() })?;
        image_ids.push(field(id_idx)?.to_string());
        rows.push(labels);
    }
    if rows.is_empty() {
        return Err(Error::Data("metadata file has no rows".into()));
    }
    Ok(FindingsMetadata { image_ids, labels: LabelMatrix::from_rows(&rows)?, class_names: class_names.to_vec() })
}

pub fn read_findings_metadata_path(path: &Path, class_names: &[String]) -> Result<FindingsMetadata> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_findings_metadata(file, DEFAULT_ID_COLUMN, DEFAULT_FINDINGS_COLUMN, class_names)
}
