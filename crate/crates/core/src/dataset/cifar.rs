use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{Dataset, DatasetError, LabelOrder, Result};

/// One label byte followed by 1024 red, 1024 green and 1024 blue pixel bytes.
pub const CIFAR10_RECORD_BYTES: usize = 3073;
const PIXELS: usize = CIFAR10_RECORD_BYTES - 1;
const TRAIN_BATCHES: usize = 5;

fn check_records(bytes: &[u8], what: &str) -> Result<usize> {
    if bytes.is_empty() || bytes.len() % CIFAR10_RECORD_BYTES != 0 {
        return Err(DatasetError::Format(format!(
            "{what}: {} bytes is not a whole number of {CIFAR10_RECORD_BYTES}-byte records",
            bytes.len()
        )));
    }
    Ok(bytes.len() / CIFAR10_RECORD_BYTES)
}

fn decode(batches: &[(String, Vec<u8>)], source_name: &str) -> Result<Dataset> {
    let mut n = 0;
    for (name, bytes) in batches {
        n += check_records(bytes, name)?;
    }
    let mut features = Array2::zeros((n, PIXELS));
    let mut raw = Vec::with_capacity(n);
    let mut row = 0;
    for (name, bytes) in batches {
        for (r, record) in bytes.chunks_exact(CIFAR10_RECORD_BYTES).enumerate() {
            if record[0] > 9 {
                return Err(DatasetError::Value(format!(
                    "{name}: record {r} has label byte {}",
                    record[0]
                )));
            }
            raw.push(i64::from(record[0]));
            for (dst, &src) in features.row_mut(row).iter_mut().zip(&record[1..]) {
                *dst = f64::from(src);
            }
            row += 1;
        }
    }
    Dataset::from_raw_labels(features, &raw, LabelOrder::Sorted, source_name)
}

/// Parses CIFAR-10 binary records held in memory. Rows keep the planar
/// R, G, B layout of the file.
pub fn parse_cifar10_records(bytes: &[u8], source_name: &str) -> Result<Dataset> {
    decode(&[(source_name.to_string(), bytes.to_vec())], source_name)
}

/// Loads a single CIFAR-10 binary batch file.
pub fn load_cifar10_batch(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|e| DatasetError::io(path, e))?;
    let name = path.display().to_string();
    decode(&[(name.clone(), bytes)], &name)
}

/// Loads the training split: `data_batch_1.bin` through `data_batch_5.bin`
/// in `directory`, concatenated in order.
///
/// Batches are read from 1 upward and the first missing file ends the list,
/// so a directory holding only `data_batch_1.bin` loads one batch.
pub fn load_cifar10(directory: &Path) -> Result<Dataset> {
    let mut batches = Vec::new();
    for i in 1..=TRAIN_BATCHES {
        let path = directory.join(format!("data_batch_{i}.bin"));
        if !path.exists() {
            if i == 1 {
                return Err(DatasetError::io(
                    path,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "missing CIFAR-10 batch"),
                ));
            }
            break;
        }
        let bytes = fs::read(&path).map_err(|e| DatasetError::io(&path, e))?;
        batches.push((path.display().to_string(), bytes));
    }
    decode(&batches, &directory.display().to_string())
}
