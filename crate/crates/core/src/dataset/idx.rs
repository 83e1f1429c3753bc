use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{Dataset, DatasetError, LabelOrder, Result};

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn check_magic(bytes: &[u8], expected: u32, what: &str) -> Result<()> {
    if bytes.len() < 4 {
        return Err(DatasetError::Length {
            what: what.into(),
            expected: 4,
            actual: bytes.len() as u64,
        });
    }
    let magic = be_u32(bytes, 0);
    if magic != expected {
        return Err(DatasetError::Format(format!(
            "{what}: magic {magic:#010x}, expected {expected:#010x}"
        )));
    }
    Ok(())
}

fn check_len(bytes: &[u8], expected: u64, what: &str) -> Result<()> {
    if bytes.len() as u64 != expected {
        return Err(DatasetError::Length {
            what: what.into(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    Ok(())
}

/// Parses an IDX image file and its label file already held in memory.
pub fn parse_idx(images: &[u8], labels: &[u8], source_name: &str) -> Result<Dataset> {
    check_magic(images, IDX_IMAGE_MAGIC, "IDX images")?;
    if images.len() < 16 {
        return Err(DatasetError::Length {
            what: "IDX images header".into(),
            expected: 16,
            actual: images.len() as u64,
        });
    }
    let count = be_u32(images, 4) as usize;
    let rows = be_u32(images, 8) as usize;
    let cols = be_u32(images, 12) as usize;
    let d_x = rows * cols;
    check_len(images, 16 + (count as u64) * (d_x as u64), "IDX images")?;

    check_magic(labels, IDX_LABEL_MAGIC, "IDX labels")?;
    if labels.len() < 8 {
        return Err(DatasetError::Length {
            what: "IDX labels header".into(),
            expected: 8,
            actual: labels.len() as u64,
        });
    }
    let label_count = be_u32(labels, 4) as usize;
    check_len(labels, 8 + label_count as u64, "IDX labels")?;
    if label_count != count {
        return Err(DatasetError::Consistency(format!(
            "{count} images but {label_count} labels"
        )));
    }
    if d_x == 0 {
        return Err(DatasetError::Format("IDX images have zero pixels".into()));
    }

    let pixels = &images[16..];
    let features = Array2::from_shape_fn((count, d_x), |(i, j)| f64::from(pixels[i * d_x + j]));
    let raw: Vec<i64> = labels[8..].iter().map(|&y| i64::from(y)).collect();
    Dataset::from_raw_labels(features, &raw, LabelOrder::Sorted, source_name)
}

/// Loads an IDX image/label file pair (MNIST layout). Pixels stay in `[0, 255]`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = fs::read(images_path).map_err(|e| DatasetError::io(images_path, e))?;
    let labels = fs::read(labels_path).map_err(|e| DatasetError::io(labels_path, e))?;
    let name = images_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_idx(&images, &labels, &name)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_file(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IDX_IMAGE_MAGIC, count, rows, cols] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(pixels);
        b
    }

    fn label_file(labels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
        b.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        b.extend_from_slice(labels);
        b
    }

    #[test]
    fn single_zero_image() {
        let ds = parse_idx(&image_file(1, 2, 2, &[0; 4]), &label_file(&[0]), "t").unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.dim(), 4);
        assert!(ds.features().iter().all(|&v| v == 0.0));
        assert_eq!(ds.labels(), &[1]);
        assert_eq!(ds.original_labels(), &[0]);
    }

    #[test]
    fn error_kinds() {
        let images = image_file(2, 1, 2, &[1, 2, 3, 4]);
        let labels = label_file(&[0, 1]);

        let mut bad_magic = images.clone();
        bad_magic[3] = 0x01;
        assert!(matches!(parse_idx(&bad_magic, &labels, "t"), Err(DatasetError::Format(_))));

        let truncated = &images[..images.len() - 1];
        assert!(matches!(
            parse_idx(truncated, &labels, "t"),
            Err(DatasetError::Length { expected: 20, actual: 19, .. })
        ));

        let short_labels = label_file(&[0]);
        assert!(matches!(
            parse_idx(&images, &short_labels, "t"),
            Err(DatasetError::Consistency(_))
        ));
    }
}
