//! Feature-wise z-score normalization, per-row l2 clipping and one-hot labels.
//!
//! The z-score statistics are fitted on the full private dataset. They are
//! used internally and never released, so the privacy accountant does not
//! charge for them.

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;

/// Columns whose standard deviation falls below this map to zero.
pub const DEGENERATE_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_CLIP: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("value error: {0}")]
    Value(String),
    #[error("dimension error: {0}")]
    Dimension(String),
}

pub type Result<T> = std::result::Result<T, PreprocessError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub means: Vec<f64>,
    /// Population (divide by N) standard deviations.
    pub stddevs: Vec<f64>,
    pub degenerate: Vec<bool>,
}

impl FeatureStats {
    pub fn dim(&self) -> usize {
        self.means.len()
    }
}

/// The l2 bound `c` on each normalized row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClipParam(f64);

impl ClipParam {
    pub fn new(c: f64) -> Result<Self> {
        if c.is_finite() && c > 0.0 {
            Ok(ClipParam(c))
        } else {
            Err(PreprocessError::Value(format!("clip bound must be positive, got {c}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for ClipParam {
    fn default() -> Self {
        ClipParam(DEFAULT_CLIP)
    }
}

/// An `N x K` matrix whose rows are standard basis vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotLabels {
    matrix: Array2<f64>,
}

impl OneHotLabels {
    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    /// Class ids `1..=K` recovered by argmax.
    pub fn decode(&self) -> Vec<u32> {
        self.matrix.rows().into_iter().map(|r| argmax(r) as u32 + 1).collect()
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(v: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}

fn check_finite(features: &Array2<f64>) -> Result<()> {
    match features.indexed_iter().find(|(_, v)| !v.is_finite()) {
        Some(((i, j), v)) => Err(PreprocessError::Value(format!(
            "non-finite value {v} at row {i}, column {j}"
        ))),
        None => Ok(()),
    }
}

/// Column means and population standard deviations (two-pass, compensated sums).
pub fn zscore_fit(features: &Array2<f64>) -> Result<FeatureStats> {
    let n = features.nrows();
    if n == 0 {
        return Err(PreprocessError::Value("cannot fit statistics on zero rows".into()));
    }
    check_finite(features)?;
    let mut stats = FeatureStats {
        means: Vec::with_capacity(features.ncols()),
        stddevs: Vec::with_capacity(features.ncols()),
        degenerate: Vec::with_capacity(features.ncols()),
    };
    for col in features.axis_iter(Axis(1)) {
        let mean = neumaier_sum(col.iter().copied()) / n as f64;
        let var = neumaier_sum(col.iter().map(|&x| (x - mean) * (x - mean))) / n as f64;
        let sd = var.sqrt();
        stats.means.push(mean);
        stats.stddevs.push(sd);
        stats.degenerate.push(sd < DEGENERATE_TOLERANCE);
    }
    Ok(stats)
}

/// `(x - mean) / sd` per column; degenerate columns become exactly 0.
pub fn zscore_apply(features: &Array2<f64>, stats: &FeatureStats) -> Result<Array2<f64>> {
    if features.ncols() != stats.dim() {
        return Err(PreprocessError::Dimension(format!(
            "{} columns but statistics for {}",
            features.ncols(),
            stats.dim()
        )));
    }
    let mut out = features.clone();
    for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
        if stats.degenerate[j] {
            col.fill(0.0);
        } else {
            col.mapv_inplace(|x| (x - stats.means[j]) / stats.stddevs[j]);
        }
    }
    Ok(out)
}

fn l2_norm(row: ArrayView1<f64>) -> f64 {
    row.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Scales each row with norm above `c` onto the sphere of radius `c`.
///
/// The divisor `||x|| / c` is nudged up one ulp at a time until the rounded
/// result has norm at most `c`, so clipping a clipped matrix changes nothing.
pub fn clip_l2(features: &Array2<f64>, c: ClipParam) -> Result<Array2<f64>> {
    check_finite(features)?;
    let c = c.get();
    let mut out = features.clone();
    for mut row in out.rows_mut() {
        let norm = l2_norm(row.view());
        if norm <= c {
            continue;
        }
        let original = row.to_owned();
        let mut s = norm / c;
        loop {
            row.zip_mut_with(&original, |dst, &x| *dst = x / s);
            if l2_norm(row.view()) <= c {
                break;
            }
            s = s.next_up();
        }
    }
    Ok(out)
}

/// One-hot rows for labels in `1..=k`.
pub fn one_hot(labels: &[u32], k: u32) -> Result<OneHotLabels> {
    let mut matrix = Array2::zeros((labels.len(), k as usize));
    for (i, &y) in labels.iter().enumerate() {
        if y == 0 || y > k {
            return Err(PreprocessError::Value(format!("label {y} at row {i} outside 1..={k}")));
        }
        matrix[[i, y as usize - 1]] = 1.0;
    }
    Ok(OneHotLabels { matrix })
}

/// Fits z-score statistics on `ds`, normalizes and clips it.
pub fn normalize_dataset(ds: &Dataset, c: ClipParam) -> Result<(Dataset, FeatureStats)> {
    let stats = zscore_fit(ds.features())?;
    let clipped = clip_l2(&zscore_apply(ds.features(), &stats)?, c)?;
    let out = ds
        .with_features(clipped)
        .map_err(|e| PreprocessError::Value(e.to_string()))?;
    Ok((out, stats))
}
