//! The synthetic container: a 32-byte little-endian header, `T * d_x` f32
//! features row-major, `T` u8 labels, then a u32 length and a UTF-8 JSON
//! metadata blob.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{DatasetError, Result, SyntheticDataset, SyntheticMetadata};

pub const CONTAINER_MAGIC: [u8; 4] = *b"DPCD";
pub const CONTAINER_VERSION: u16 = 1;
pub const CONTAINER_HEADER_BYTES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Container,
    Csv,
}

fn validate(ds: &SyntheticDataset) -> Result<()> {
    let (t, d_x) = ds.features.dim();
    if t == 0 || d_x == 0 {
        return Err(DatasetError::Value(format!(
            "cannot write an empty synthetic set ({t} x {d_x})"
        )));
    }
    if ds.labels.len() != t {
        return Err(DatasetError::Consistency(format!(
            "{t} feature rows but {} labels",
            ds.labels.len()
        )));
    }
    if ds.class_count == 0 || ds.class_count > 255 {
        return Err(DatasetError::Value(format!(
            "class count {} does not fit a u8 label",
            ds.class_count
        )));
    }
    if let Some(bad) = ds.labels.iter().find(|&&y| y == 0 || y > ds.class_count) {
        return Err(DatasetError::Value(format!(
            "label {bad} outside 1..={}",
            ds.class_count
        )));
    }
    if ds.features.iter().any(|v| !v.is_finite()) {
        return Err(DatasetError::Value("non-finite synthetic feature".into()));
    }
    Ok(())
}

/// Serializes to container bytes. Equal inputs give equal bytes.
pub fn encode_synthetic(ds: &SyntheticDataset) -> Result<Vec<u8>> {
    validate(ds)?;
    let (t, d_x) = ds.features.dim();
    let meta = serde_json::to_vec(&ds.metadata).map_err(|e| DatasetError::Format(e.to_string()))?;
    let mut out = Vec::with_capacity(CONTAINER_HEADER_BYTES + t * d_x * 4 + t + 4 + meta.len());
    out.extend_from_slice(&CONTAINER_MAGIC);
    out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(t as u64).to_le_bytes());
    out.extend_from_slice(&(d_x as u64).to_le_bytes());
    out.extend_from_slice(&ds.class_count.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for &v in ds.features.iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.extend(ds.labels.iter().map(|&y| y as u8));
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    Ok(out)
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn le_u64(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

/// Parses container bytes.
pub fn decode_synthetic(bytes: &[u8]) -> Result<SyntheticDataset> {
    if bytes.len() < CONTAINER_HEADER_BYTES {
        return Err(DatasetError::Length {
            what: "container header".into(),
            expected: CONTAINER_HEADER_BYTES as u64,
            actual: bytes.len() as u64,
        });
    }
    if bytes[..4] != CONTAINER_MAGIC {
        return Err(DatasetError::Format(format!(
            "bad container magic {:02x?}",
            &bytes[..4]
        )));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CONTAINER_VERSION {
        return Err(DatasetError::Format(format!(
            "unsupported container version {version}"
        )));
    }
    let t = le_u64(bytes, 8);
    let d_x = le_u64(bytes, 16);
    let class_count = le_u32(bytes, 24);

    // u128 so a corrupt header cannot overflow the size arithmetic.
    let payload_end = CONTAINER_HEADER_BYTES as u128 + t as u128 * d_x as u128 * 4 + t as u128;
    let min_len = payload_end + 4;
    if (bytes.len() as u128) < min_len {
        return Err(DatasetError::Length {
            what: "container payload".into(),
            expected: min_len.min(u64::MAX as u128) as u64,
            actual: bytes.len() as u64,
        });
    }
    let payload_end = payload_end as usize;
    let meta_len = le_u32(bytes, payload_end) as usize;
    let total = payload_end + 4 + meta_len;
    if bytes.len() != total {
        return Err(DatasetError::Length {
            what: "container metadata".into(),
            expected: total as u64,
            actual: bytes.len() as u64,
        });
    }

    let (t, d_x) = (t as usize, d_x as usize);
    let feat_bytes = &bytes[CONTAINER_HEADER_BYTES..CONTAINER_HEADER_BYTES + t * d_x * 4];
    let values: Vec<f64> = feat_bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    let features = Array2::from_shape_vec((t, d_x), values)
        .map_err(|e| DatasetError::Format(e.to_string()))?;
    let labels: Vec<u32> = bytes[payload_end - t..payload_end]
        .iter()
        .map(|&y| u32::from(y))
        .collect();
    let metadata: SyntheticMetadata = serde_json::from_slice(&bytes[payload_end + 4..])
        .map_err(|e| DatasetError::Format(format!("container metadata: {e}")))?;

    let ds = SyntheticDataset {
        features,
        labels,
        class_count,
        metadata,
    };
    validate(&ds)?;
    Ok(ds)
}

/// Writes `ds` to `path` as a container or as CSV (`x0..x{d-1},label`).
pub fn write_synthetic(ds: &SyntheticDataset, path: &Path, format: OutputFormat) -> Result<()> {
    match format {
        OutputFormat::Container => {
            let bytes = encode_synthetic(ds)?;
            fs::write(path, bytes).map_err(|e| DatasetError::io(path, e))
        }
        OutputFormat::Csv => {
            validate(ds)?;
            let file = fs::File::create(path).map_err(|e| DatasetError::io(path, e))?;
            let mut w = csv::Writer::from_writer(BufWriter::new(file));
            let io_err = |e: csv::Error| DatasetError::io(path, e.into());
            let mut header: Vec<String> = (0..ds.dim()).map(|j| format!("x{j}")).collect();
            header.push("label".into());
            w.write_record(&header).map_err(io_err)?;
            for (row, y) in ds.features.rows().into_iter().zip(&ds.labels) {
                let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                rec.push(y.to_string());
                w.write_record(&rec).map_err(io_err)?;
            }
            let mut inner = w.into_inner().map_err(|e| DatasetError::io(path, e.into_error()))?;
            inner.flush().map_err(|e| DatasetError::io(path, e))
        }
    }
}

/// Reads a container written by [`write_synthetic`].
pub fn read_synthetic(path: &Path) -> Result<SyntheticDataset> {
    let bytes = fs::read(path).map_err(|e| DatasetError::io(path, e))?;
    decode_synthetic(&bytes)
}
