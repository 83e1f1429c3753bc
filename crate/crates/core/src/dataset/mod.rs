//! Datasets in and out: IDX and CIFAR-10 binaries, numeric CSV, the synthetic
//! container format, and preview image grids.
//!
//! Every loader remaps labels to the contiguous range `1..=K` and remembers the
//! original value of each class in [`Dataset::original_labels`].

mod cifar;
mod container;
mod idx;
mod preview;
mod tabular;

use std::collections::BTreeSet;
use std::io;
use std::path::PathBuf;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accountant::SamplingMode;
use crate::synth::SynthesisConfig;

pub use cifar::{load_cifar10, load_cifar10_batch, parse_cifar10_records, CIFAR10_RECORD_BYTES};
pub use container::{
    decode_synthetic, encode_synthetic, read_synthetic, write_synthetic, OutputFormat,
    CONTAINER_HEADER_BYTES, CONTAINER_MAGIC, CONTAINER_VERSION,
};
pub use idx::{load_idx, parse_idx, IDX_IMAGE_MAGIC, IDX_LABEL_MAGIC};
pub use preview::{encode_preview, render_preview_grid, Channels, PreviewGrid};
pub use tabular::{load_csv, parse_csv, LabelColumn};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("length error in {what}: expected {expected} bytes, found {actual}")]
    Length {
        what: String,
        expected: u64,
        actual: u64,
    },
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("value error: {0}")]
    Value(String),
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },
    #[error("dimension error: {0}")]
    Dimension(String),
}

impl DatasetError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        DatasetError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// A labelled feature matrix in the units of its source.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<u32>,
    class_count: u32,
    source_name: String,
    original_labels: Vec<i64>,
}

impl Dataset {
    /// Builds a dataset from rows and labels already in `1..=class_count`.
    pub fn new(
        features: Array2<f64>,
        labels: Vec<u32>,
        class_count: u32,
        source_name: impl Into<String>,
    ) -> Result<Self> {
        let (n, _) = features.dim();
        if n == 0 {
            return Err(DatasetError::Value("a dataset needs at least one row".into()));
        }
        if labels.len() != n {
            return Err(DatasetError::Consistency(format!(
                "{n} feature rows but {} labels",
                labels.len()
            )));
        }
        if class_count == 0 {
            return Err(DatasetError::Value("class count must be positive".into()));
        }
        if let Some((i, &bad)) = labels
            .iter()
            .enumerate()
            .find(|(_, &y)| y == 0 || y > class_count)
        {
            return Err(DatasetError::Value(format!(
                "label {bad} at row {i} outside 1..={class_count}"
            )));
        }
        if let Some(((i, j), v)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(DatasetError::Value(format!(
                "non-finite feature {v} at row {i}, column {j}"
            )));
        }
        Ok(Dataset {
            features,
            labels,
            class_count,
            source_name: source_name.into(),
            original_labels: (1..=class_count as i64).collect(),
        })
    }

    /// Builds a dataset from arbitrary integer labels, numbering classes by
    /// `order`.
    pub fn from_raw_labels(
        features: Array2<f64>,
        raw_labels: &[i64],
        order: LabelOrder,
        source_name: impl Into<String>,
    ) -> Result<Self> {
        let (labels, originals) = remap_labels(raw_labels, order);
        let mut ds = Dataset::new(features, labels, originals.len() as u32, source_name)?;
        ds.original_labels = originals;
        Ok(ds)
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn class_count(&self) -> u32 {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn source_name(&self) -> &str {
        &self.source_name
    }

    /// Original label value for each class id `1..=K` (index `k - 1`).
    pub fn original_labels(&self) -> &[i64] {
        &self.original_labels
    }

    /// Same labels and metadata over a transformed feature matrix.
    pub fn with_features(&self, features: Array2<f64>) -> Result<Self> {
        if features.dim() != self.features.dim() {
            return Err(DatasetError::Dimension(format!(
                "replacement features {:?} differ from {:?}",
                features.dim(),
                self.features.dim()
            )));
        }
        let mut ds = Dataset::new(features, self.labels.clone(), self.class_count, &*self.source_name)?;
        ds.original_labels = self.original_labels.clone();
        Ok(ds)
    }

    /// Number of rows in each class, index `k - 1`.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count as usize];
        for &y in &self.labels {
            counts[y as usize - 1] += 1;
        }
        counts
    }
}

/// How raw label values are numbered into `1..=K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelOrder {
    /// Ascending by value (IDX, CIFAR-10).
    Sorted,
    /// In order of first appearance (CSV).
    FirstAppearance,
}

/// Maps raw labels to `1..=K`; returns the new labels and the raw value of each class.
pub fn remap_labels(raw: &[i64], order: LabelOrder) -> (Vec<u32>, Vec<i64>) {
    let originals: Vec<i64> = match order {
        LabelOrder::Sorted => raw.iter().copied().collect::<BTreeSet<_>>().into_iter().collect(),
        LabelOrder::FirstAppearance => {
            let mut seen = Vec::new();
            for &y in raw {
                if !seen.contains(&y) {
                    seen.push(y);
                }
            }
            seen
        }
    };
    let labels = raw
        .iter()
        .map(|y| originals.iter().position(|o| o == y).unwrap() as u32 + 1)
        .collect();
    (labels, originals)
}

/// Accounting summary stored alongside synthetic samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacySummary {
    pub epsilon: f64,
    pub delta: f64,
    pub alpha_star: u32,
    pub alpha_max: u32,
    pub sampling: SamplingMode,
    pub sampling_ratio: f64,
    pub dataset_size: u64,
}

/// Provenance carried by a synthetic dataset and its container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticMetadata {
    pub source_name: String,
    /// Raw label value of each class id, index `k - 1`.
    pub original_labels: Vec<i64>,
    pub config: SynthesisConfig,
    /// `None` for a non-private (zero-noise) run.
    #[serde(default)]
    pub privacy: Option<PrivacySummary>,
}

/// Synthetic rows in normalized feature units with labels in `1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub features: Array2<f64>,
    pub labels: Vec<u32>,
    pub class_count: u32,
    pub metadata: SyntheticMetadata,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Per-class sample counts, index `k - 1`.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count as usize];
        for &y in &self.labels {
            counts[y as usize - 1] += 1;
        }
        counts
    }

    /// The first `per_class` samples labelled with each class, class by class.
    /// Rows of a preview grid built from this show one class each.
    pub fn first_per_class(&self, per_class: usize) -> SyntheticDataset {
        let mut picked = Vec::new();
        for k in 1..=self.class_count {
            picked.extend(
                self.labels
                    .iter()
                    .enumerate()
                    .filter(|(_, &y)| y == k)
                    .take(per_class)
                    .map(|(i, _)| i),
            );
        }
        SyntheticDataset {
            features: self.features.select(ndarray::Axis(0), &picked),
            labels: picked.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            metadata: self.metadata.clone(),
        }
    }
}
