//! The generation loop: for each class and each synthetic sample, pick `l`
//! rows of that class uniformly without replacement, average their features
//! and one-hot labels, add Gaussian noise to both, and decode the label by
//! argmax.
//!
//! Every sample owns a ChaCha20 stream keyed by the run seed with stream id
//! `(class << 40) | sample_index`, so output does not depend on how samples
//! are scheduled across threads. Within a stream the draws are: the `l` index
//! choices of a partial Fisher-Yates shuffle, then `d_x` feature noise values,
//! then `K` label noise values. Gaussians come from `rand_distr::StandardNormal`
//! (ziggurat); a zero noise scale skips its draws.

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, SyntheticDataset, SyntheticMetadata};
use crate::preprocess::argmax;

const SAMPLE_INDEX_BITS: u32 = 40;
// Rows may exceed c by this relative slack from rounding in the clip step.
const NORM_SLACK: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("insufficient class size: class {class} has {size} rows, fewer than l = {l}")]
    InsufficientClassSize { class: u32, size: usize, l: u64 },
    #[error("dimension error: {0}")]
    Dimension(String),
}

pub type Result<T> = std::result::Result<T, SynthError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    /// Order of mixture: rows averaged per synthetic sample.
    pub l: u64,
    /// Total synthetic samples.
    pub t: u64,
    /// l2 bound the input rows were clipped to.
    pub c: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub seed: u64,
}

impl SynthesisConfig {
    pub fn new(l: u64, t: u64, c: f64, sigma_x: f64, sigma_y: f64, seed: u64) -> Self {
        SynthesisConfig {
            l,
            t,
            c,
            sigma_x,
            sigma_y,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l == 0 {
            return Err(SynthError::Config("l must be at least 1".into()));
        }
        if self.t == 0 {
            return Err(SynthError::Config("T must be at least 1".into()));
        }
        if self.t >= 1 << SAMPLE_INDEX_BITS {
            return Err(SynthError::Config(format!("T = {} is too large", self.t)));
        }
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(SynthError::Config(format!("c must be positive, got {}", self.c)));
        }
        for (name, s) in [("sigma_x", self.sigma_x), ("sigma_y", self.sigma_y)] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(SynthError::Config(format!("{name} must be nonnegative, got {s}")));
            }
        }
        Ok(())
    }
}

/// Row indices of each class, in original row order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassIndex {
    lists: Vec<Vec<usize>>,
}

impl ClassIndex {
    pub fn class_count(&self) -> u32 {
        self.lists.len() as u32
    }

    /// Rows of class `k` (1-based).
    pub fn class(&self, k: u32) -> &[usize] {
        &self.lists[k as usize - 1]
    }

    /// `N_k` for each class, index `k - 1`.
    pub fn counts(&self) -> Vec<usize> {
        self.lists.iter().map(Vec::len).collect()
    }

    pub fn min_count(&self) -> usize {
        self.lists.iter().map(Vec::len).min().unwrap_or(0)
    }
}

/// Groups row indices by label. Every class `1..=k` must be present.
pub fn partition_by_class(labels: &[u32], k: u32) -> Result<ClassIndex> {
    let mut lists = vec![Vec::new(); k as usize];
    for (i, &y) in labels.iter().enumerate() {
        if y == 0 || y > k {
            return Err(SynthError::Config(format!("label {y} at row {i} outside 1..={k}")));
        }
        lists[y as usize - 1].push(i);
    }
    if let Some(empty) = lists.iter().position(Vec::is_empty) {
        return Err(SynthError::Config(format!("class {} has no rows", empty + 1)));
    }
    Ok(ClassIndex { lists })
}

/// `l` distinct entries of `class_list`, uniform over subsets, by a partial
/// Fisher-Yates shuffle. Returned in draw order.
pub fn sample_indices<R: Rng + ?Sized>(class_list: &[usize], l: u64, rng: &mut R) -> Result<Vec<usize>> {
    let n = class_list.len();
    if l as usize > n || l == 0 {
        return Err(SynthError::InsufficientClassSize {
            class: 0,
            size: n,
            l,
        });
    }
    let l = l as usize;
    let mut picked = Vec::with_capacity(l);
    if 4 * l >= n {
        let mut pool = class_list.to_vec();
        for i in 0..l {
            let j = rng.random_range(i..n);
            pool.swap(i, j);
            picked.push(pool[i]);
        }
    } else {
        // Only the displaced slots of the virtual array are stored.
        let mut moved: HashMap<usize, usize> = HashMap::with_capacity(2 * l);
        for i in 0..l {
            let j = rng.random_range(i..n);
            let at_j = *moved.get(&j).unwrap_or(&j);
            let at_i = *moved.get(&i).unwrap_or(&i);
            moved.insert(j, at_i);
            picked.push(class_list[at_j]);
        }
    }
    Ok(picked)
}

/// One synthetic sample before it is placed in the output.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub features: Array1<f64>,
    pub label_scores: Array1<f64>,
    /// Argmax of `label_scores` as a class id in `1..=K`.
    pub label: u32,
}

fn add_noise<R: Rng + ?Sized>(v: &mut Array1<f64>, sigma: f64, rng: &mut R) {
    if sigma > 0.0 {
        for x in v.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *x += sigma * z;
        }
    }
}

fn mean_rows(rows: ArrayView2<f64>) -> Array1<f64> {
    let mut acc = Array1::zeros(rows.ncols());
    for r in rows.rows() {
        acc += &r;
    }
    acc / rows.nrows() as f64
}

/// Averages `rows` and `onehots` (one row per mixed point), adds
/// `N(0, sigma_x^2)` to each feature and `N(0, sigma_y^2)` to each label
/// score, and decodes the label (lowest index wins ties).
pub fn synthesize_sample<R: Rng + ?Sized>(
    rows: ArrayView2<f64>,
    onehots: ArrayView2<f64>,
    sigma_x: f64,
    sigma_y: f64,
    rng: &mut R,
) -> Result<SynthSample> {
    if rows.nrows() == 0 || rows.nrows() != onehots.nrows() {
        return Err(SynthError::Dimension(format!(
            "{} feature rows and {} label rows",
            rows.nrows(),
            onehots.nrows()
        )));
    }
    let mut features = mean_rows(rows);
    add_noise(&mut features, sigma_x, rng);
    let mut label_scores = mean_rows(onehots);
    add_noise(&mut label_scores, sigma_y, rng);
    let label = argmax(label_scores.view()) as u32 + 1;
    Ok(SynthSample {
        features,
        label_scores,
        label,
    })
}

/// The stream of synthetic sample `index` of class `class`.
pub fn sample_stream(seed: u64, class: u32, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(class) << SAMPLE_INDEX_BITS) | index);
    rng
}

/// `floor(T / K)` per class, plus one for each of the first `T mod K` classes.
pub fn class_quotas(t: u64, k: u32) -> Vec<u64> {
    let k64 = u64::from(k);
    (0..k64).map(|i| t / k64 + u64::from(i < t % k64)).collect()
}

/// Synthesizes `cfg.t` samples from a normalized, clipped dataset on the
/// current rayon pool. Output is class-major and identical for any pool size.
pub fn synthesize_dataset(ds: &Dataset, cfg: &SynthesisConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let k = ds.class_count();
    if k as u64 >= 1 << (64 - SAMPLE_INDEX_BITS) {
        return Err(SynthError::Config(format!("{k} classes is too many")));
    }
    let index = partition_by_class(ds.labels(), k)?;
    for class in 1..=k {
        let size = index.class(class).len();
        if (size as u64) < cfg.l {
            return Err(SynthError::InsufficientClassSize {
                class,
                size,
                l: cfg.l,
            });
        }
    }
    let x = ds.features();
    let bound = cfg.c * (1.0 + NORM_SLACK);
    if let Some(i) = x
        .rows()
        .into_iter()
        .position(|r| r.dot(&r).sqrt() > bound)
    {
        return Err(SynthError::Config(format!(
            "row {i} has norm above c = {}; normalize and clip first",
            cfg.c
        )));
    }

    let d_x = ds.dim();
    let quotas = class_quotas(cfg.t, k);
    let jobs: Vec<(u32, u64)> = quotas
        .iter()
        .enumerate()
        .flat_map(|(c, &q)| (0..q).map(move |i| (c as u32 + 1, i)))
        .collect();

    let mut features = vec![0.0f64; jobs.len() * d_x];
    let mut labels = vec![0u32; jobs.len()];
    features
        .par_chunks_mut(d_x)
        .zip(labels.par_iter_mut())
        .zip(jobs.par_iter())
        .for_each(|((out_x, out_y), &(class, i))| {
            let mut rng = sample_stream(cfg.seed, class, i);
            let mut picked = sample_indices(index.class(class), cfg.l, &mut rng)
                .expect("class sizes checked above");
            // Summation order follows row order, not draw order.
            picked.sort_unstable();
            let rows = x.select(ndarray::Axis(0), &picked);
            let mut onehots = Array2::zeros((picked.len(), k as usize));
            onehots.column_mut(class as usize - 1).fill(1.0);
            let s = synthesize_sample(rows.view(), onehots.view(), cfg.sigma_x, cfg.sigma_y, &mut rng)
                .expect("shapes built above");
            out_x.copy_from_slice(s.features.as_slice().unwrap());
            *out_y = s.label;
        });

    Ok(SyntheticDataset {
        features: Array2::from_shape_vec((jobs.len(), d_x), features)
            .map_err(|e| SynthError::Dimension(e.to_string()))?,
        labels,
        class_count: k,
        metadata: SyntheticMetadata {
            source_name: ds.source_name().to_string(),
            original_labels: ds.original_labels().to_vec(),
            config: cfg.clone(),
            privacy: None,
        },
    })
}

/// [`synthesize_dataset`] on a dedicated pool of `threads` workers
/// (`None` uses the global pool).
pub fn synthesize_dataset_with_threads(
    ds: &Dataset,
    cfg: &SynthesisConfig,
    threads: Option<usize>,
) -> Result<SyntheticDataset> {
    match threads {
        None => synthesize_dataset(ds, cfg),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| SynthError::Config(format!("thread pool: {e}")))?;
            pool.install(|| synthesize_dataset(ds, cfg))
        }
    }
}
