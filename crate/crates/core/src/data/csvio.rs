use std::io::{Read, Write};
use std::path::Path;

use super::synth::is_feature_header;
use super::{Dataset, LabelMatrix, Split};
use crate::diffkernel::Tensor2;
use crate::{Error, Result};

/// Writes `d_0..d_{D-1}` feature columns followed by one 0/1 column per class.
/// Floats use the shortest representation that parses back to the same bits.
pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let d = dataset.feature_dim();
    let header: Vec<String> = (0..d).map(|k| format!("d_{k}")).chain(dataset.class_names().iter().cloned()).collect();
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for r in 0..dataset.len() {
        record.clear();
        record.extend(dataset.features().row(r).iter().map(|v| v.to_string()));
        record.extend(dataset.labels().row(r).iter().map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_csv<R: Read>(reader: R, split: Split) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(Error::Data("empty dataset file".into())),
        Some(h) => h?,
    };
    let d = header.iter().take_while(|h| is_feature_header(h)).count();
    for (k, h) in header.iter().enumerate() {
        if k < d && h != format!("d_{k}") {
            return Err(Error::Parse {
                line: 1,
                message: format!("feature column {k} is named {h:?}, expected \"d_{k}\""),
            });
        }
        if k >= d && (is_feature_header(h) || h.is_empty() || header.iter().take(k).any(|p| p == h)) {
            return Err(Error::Parse { line: 1, message: format!("unexpected header {h:?} in column {}", k + 1) });
        }
    }
    let c = header.len() - d;
    if d == 0 || c == 0 {
        return Err(Error::Parse { line: 1, message: format!("need feature and class columns, found {d} and {c}") });
    }
    let class_names: Vec<String> = header.iter().skip(d).map(str::to_string).collect();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    for (i, record) in records.enumerate() {
        let record = record?;
        let line = record.position().map_or(i + 2, |p| p.line() as usize);
        if record.len() != d + c {
            return Err(Error::Parse { line, message: format!("{} fields, expected {}", record.len(), d + c) });
        }
        for (k, cell) in record.iter().enumerate() {
            if k < d {
                let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("feature {cell:?} in column {} is not a number", k + 1),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse { line, message: format!("non-finite feature {cell:?}") });
                }
                features.push(v);
            } else {
                labels.push(match cell.trim() {
                    "0" => 0u8,
                    "1" => 1u8,
                    other => {
                        return Err(Error::Parse {
                            line,
                            message: format!("label {other:?} for class {:?} is not 0 or 1", class_names[k - d]),
                        })
                    }
                });
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Data("dataset file has a header but no rows".into()));
    }
    Dataset::new(Tensor2::new(rows, d, features)?, LabelMatrix::new(rows, c, labels)?, class_names, split)
}

pub fn write_csv_path(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(dataset, std::io::BufWriter::new(file))
}

pub fn read_csv_path(path: &Path, split: Split) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(file), split)
}
