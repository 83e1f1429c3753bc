use std::fs::File;
use std::io::Read;
use std::path::Path;

use ndarray::Array2;

use super::{Dataset, DatasetError, LabelOrder, Result};

/// Which CSV column holds the labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    /// Zero-based.
    Index(usize),
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    /// A bare integer is an index, anything else a header name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

/// Parses a headed numeric CSV. Rows and columns in errors are 1-based file
/// positions, so the first data row is row 2.
pub fn parse_csv<R: Read>(reader: R, label_column: &LabelColumn, source_name: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| DatasetError::Format(format!("{source_name}: {e}")))?
        .clone();
    let label_idx = match label_column {
        LabelColumn::Index(i) if *i < headers.len() => *i,
        LabelColumn::Index(i) => {
            return Err(DatasetError::Format(format!(
                "label column {i} out of range for {} columns",
                headers.len()
            )))
        }
        LabelColumn::Name(name) => headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| DatasetError::Format(format!("no column named {name:?}")))?,
    };
    let d_x = headers.len() - 1;

    let mut values = Vec::new();
    let mut raw = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| DatasetError::Format(format!("{source_name}: {e}")))?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        for (j, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            let parse_err = |message: String| DatasetError::Parse {
                row,
                column: j + 1,
                message,
            };
            if cell.is_empty() {
                return Err(parse_err(format!("empty cell in column {:?}", &headers[j])));
            }
            if j == label_idx {
                let y: i64 = cell
                    .parse()
                    .map_err(|_| parse_err(format!("label {cell:?} is not an integer")))?;
                raw.push(y);
            } else {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| parse_err(format!("{cell:?} is not a number")))?;
                if !v.is_finite() {
                    return Err(parse_err(format!("{cell:?} is not finite")));
                }
                values.push(v);
            }
        }
    }
    let features = Array2::from_shape_vec((raw.len(), d_x), values)
        .map_err(|e| DatasetError::Format(e.to_string()))?;
    Dataset::from_raw_labels(features, &raw, LabelOrder::FirstAppearance, source_name)
}

/// Loads a headed numeric CSV; every column except `label_column` is a feature.
pub fn load_csv(path: &Path, label_column: &LabelColumn) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| DatasetError::io(path, e))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_csv(file, label_column, &name)
}
