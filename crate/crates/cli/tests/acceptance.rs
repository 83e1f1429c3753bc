//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the summary prints on every run. Each
//! criterion also has a wall-clock budget; exceeding it fails the criterion.
//! Pass a substring as the first free argument to run a subset.

use std::collections::HashMap;
use std::fs;
use std::panic;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use dpcda::accountant::sweep::log_spaced;
use dpcda::accountant::{
    base_rdp_epsilon, calibrate_noise, compare_with_baseline, compose_and_convert, higher_order_g,
    moment_term_b, subsampled_rdp_epsilon, AccountingParams,
};
use dpcda::dataset::{
    decode_synthetic, encode_preview, encode_synthetic, load_cifar10_batch, load_csv, load_idx,
    read_synthetic, write_synthetic, Channels, Dataset, DatasetError, LabelColumn, OutputFormat,
    PreviewGrid, SyntheticDataset, SyntheticMetadata, CONTAINER_HEADER_BYTES,
};
use dpcda::preprocess::{normalize_dataset, ClipParam};
use dpcda::synth::{
    class_quotas, sample_indices, sample_stream, synthesize_dataset_with_threads, SynthesisConfig,
};
use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde_json::Value;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

struct Criterion {
    name: &'static str,
    budget: Duration,
    check: fn() -> Outcome,
}

// Tolerances.
const B2_REL: f64 = 1e-12;
const LIMIT_ABS: f64 = 1e-9;
const ORACLE_REL: f64 = 1e-6;
const ARM_REL: f64 = 1e-9;
// Slack for "never increases": the comparison is on two rounded results.
const MONOTONE_REL: f64 = 1e-12;
const CALIBRATION_REL: f64 = 1e-3;
// Chi-square critical values at p = 0.001.
const CHI2_CRIT_DF2: f64 = 13.816;
const CHI2_CRIT_DF5: f64 = 20.515;

fn core_fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn json(name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(core_fixture(name)).unwrap()).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs()
    }
}

fn mnist_like(l: u64, sigma_x: f64, sigma_y: f64) -> AccountingParams {
    AccountingParams::new(l, 1.0, sigma_x, sigma_y, 60000, 60000)
}

fn powers_of_two(from: u32, to: u32) -> Vec<u64> {
    (from..=to).map(|k| 1u64 << k).collect()
}

fn identities() -> Outcome {
    let p = AccountingParams::new(4, 1.0, 0.3, 0.1, 60000, 1);
    let b1 = moment_term_b(1, &p).map_err(|e| e.to_string())?;
    ensure!(b1 == 0.0, "B(1) = {b1}");
    let b2 = moment_term_b(2, &p).map_err(|e| e.to_string())?;
    let want = base_rdp_epsilon(2, &p).exp_m1();
    ensure!(rel(b2, want) <= B2_REL, "B(2) = {b2}, e^eps(2) - 1 = {want}");
    let g2 = higher_order_g(2, &p).map_err(|e| e.to_string())?;
    ensure!(g2 == 0.0, "G(2) = {g2}");

    let quiet = mnist_like(1, 1e6, 1e6);
    let r = compose_and_convert(&quiet).map_err(|e| e.to_string())?;
    ensure!(r.failed_orders.is_empty(), "orders failed at sigma = 1e6: {:?}", r.failed_orders);
    let worst = r.per_release_rdp.points.iter().map(|p| p.epsilon).fold(0.0, f64::max);
    ensure!(worst <= LIMIT_ABS, "eps'(alpha) reaches {worst} at sigma = 1e6");
    let floor = (1.0 / quiet.delta).ln() / (quiet.alpha_max - 1) as f64;
    ensure!(r.epsilon <= floor + 1e-6, "eps = {} above {floor} + 1e-6", r.epsilon);

    // T enters only as a multiplier on the per-release curve.
    let once = compose_and_convert(&AccountingParams::new(8, 1.0, 1.0, 1.0, 5000, 1)).map_err(|e| e.to_string())?;
    let many = compose_and_convert(&AccountingParams::new(8, 1.0, 1.0, 1.0, 5000, 7)).map_err(|e| e.to_string())?;
    ensure!(once.per_release_rdp == many.per_release_rdp, "per-release curve depends on T");
    let mut best = f64::INFINITY;
    for pt in &many.per_release_rdp.points {
        let log_term = (-many.delta.ln()) / (pt.alpha as f64 - 1.0);
        let converted = many.converted_at(pt.alpha).unwrap();
        ensure!(converted == 7.0 * pt.epsilon + log_term, "composition at alpha {}", pt.alpha);
        best = best.min(converted);
    }
    ensure!(many.epsilon == best, "reported eps {} is not the minimum {best}", many.epsilon);

    // Both arms of min{4(e^eps2 - 1), 2 e^eps2}, recomputed by hand at alpha = 3.
    let mut arms = Vec::new();
    for p in [AccountingParams::new(4, 1.0, 2.0, 2.0, 1000, 1), AccountingParams::new(1, 1.0, 1.0, 1.0, 1000, 1)] {
        let e2 = base_rdp_epsilon(2, &p);
        let q = p.sampling_ratio();
        let arm = (4.0 * e2.exp_m1()).min(2.0 * e2.exp());
        let b2 = moment_term_b(2, &p).map_err(|e| e.to_string())?;
        let b4 = moment_term_b(4, &p).map_err(|e| e.to_string())?;
        let g3 = q.powi(3) * (b2 * b4).sqrt();
        let want = (q * q * 3.0 * arm + 4.0 * g3).ln_1p() / 2.0;
        let got = subsampled_rdp_epsilon(3, &p).map_err(|e| e.to_string())?;
        ensure!(rel(got, want) <= ARM_REL, "eps'(3) = {got}, by hand {want} (eps(2) = {e2})");
        arms.push(e2 < std::f64::consts::LN_2);
    }
    ensure!(arms == [true, false], "min arms not both exercised: {arms:?}");
    Ok(format!("B(2) rel err {:.1e}, max eps' at sigma 1e6 = {worst:.1e}", rel(b2, want)))
}

fn oracle_equivalence() -> Outcome {
    let fx = json("oracle_values.json");
    let cases = fx["randomized"].as_array().unwrap();
    ensure!(cases.len() >= 10, "only {} oracle cases", cases.len());
    let mut worst: f64 = 0.0;
    for case in cases {
        let q = &case["params"];
        let params = AccountingParams::new(
            q["l"].as_u64().unwrap(),
            q["c"].as_f64().unwrap(),
            q["sigma_x"].as_f64().unwrap(),
            q["sigma_y"].as_f64().unwrap(),
            q["n"].as_u64().unwrap(),
            q["t"].as_u64().unwrap(),
        )
        .with_delta(q["delta"].as_f64().unwrap())
        .with_alpha_max(q["alpha_max"].as_u64().unwrap() as u32);
        let report = compose_and_convert(&params).map_err(|e| format!("{params:?}: {e}"))?;
        let want = case["epsilon"].as_f64().unwrap();
        let err = rel(report.epsilon, want);
        ensure!(err <= ORACLE_REL, "l = {}: eps {} vs oracle {want}", params.l, report.epsilon);
        ensure!(
            u64::from(report.alpha_star) == case["alpha_star"].as_u64().unwrap(),
            "l = {}: alpha* {} vs oracle {}",
            params.l,
            report.alpha_star,
            case["alpha_star"]
        );
        worst = worst.max(err);
    }
    Ok(format!("{} configs, worst rel err {worst:.1e}", cases.len()))
}

fn monotonicity() -> Outcome {
    let sigmas = log_spaced(0.1, 10.0, 10);
    let ls = powers_of_two(0, 9);
    let cells: Vec<(u64, f64)> = ls.iter().flat_map(|&l| sigmas.iter().map(move |&s| (l, s))).collect();
    let eps = |p: AccountingParams| compose_and_convert(&p).map(|r| r.epsilon).map_err(|e| format!("{p:?}: {e}"));
    let violations: Vec<String> = cells
        .par_iter()
        .map(|&(l, s)| -> Result<Vec<String>, String> {
            let mut bad = Vec::new();
            let base = eps(mnist_like(l, s, s))?;
            let wider_x = eps(mnist_like(l, 2.0 * s, s))?;
            let wider_y = eps(mnist_like(l, s, 2.0 * s))?;
            let tight = eps(mnist_like(l, s, s).with_delta(1e-6))?;
            let loose = eps(mnist_like(l, s, s).with_delta(1e-4))?;
            let le = |a: f64, b: f64| a <= b * (1.0 + MONOTONE_REL);
            if !le(wider_x, base) {
                bad.push(format!("l={l} sigma={s}: doubling sigma_x {base} -> {wider_x}"));
            }
            if !le(wider_y, base) {
                bad.push(format!("l={l} sigma={s}: doubling sigma_y {base} -> {wider_y}"));
            }
            if !(le(loose, base) && le(base, tight)) {
                bad.push(format!("l={l} sigma={s}: delta 1e-6/1e-5/1e-4 gives {tight}/{base}/{loose}"));
            }
            Ok(bad)
        })
        .collect::<Result<Vec<_>, _>>()?
        .concat();
    ensure!(violations.is_empty(), "{} violations, first: {}", violations.len(), violations[0]);
    Ok(format!("{} cells, 5 accountings each", cells.len()))
}

fn tightness() -> Outcome {
    let cells: Vec<(u64, f64)> = powers_of_two(1, 9)
        .into_iter()
        .flat_map(|l| [0.1, 0.3, 1.0].map(move |s| (l, s)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(l, s)| {
            let r = compare_with_baseline(&mnist_like(l, s, s), 784, 10).map_err(|e| format!("l={l} sigma={s}: {e}"))?;
            Ok((l, s, r.epsilon, r.baseline_epsilon.unwrap()))
        })
        .collect::<Result<Vec<_>, String>>()?;
    let mut min_ratio = f64::INFINITY;
    for (l, s, ours, base) in rows {
        ensure!(ours < base, "l={l} sigma={s}: ours {ours} >= baseline {base}");
        min_ratio = min_ratio.min(base / ours);
    }
    Ok(format!("{} cells, baseline/ours >= {min_ratio:.3}", cells.len()))
}

fn calibration_round_trip() -> Outcome {
    let template = mnist_like(4, 1.0, 1.0);
    let mut detail = Vec::new();
    for target in [10.0, 20.0] {
        let cal = calibrate_noise(target, &template, 1.0).map_err(|e| e.to_string())?;
        let again = compose_and_convert(&template.clone().with_sigmas(cal.sigma_x, cal.sigma_y))
            .map_err(|e| e.to_string())?;
        ensure!(rel(again.epsilon, target) <= CALIBRATION_REL, "target {target}: got {}", again.epsilon);
        detail.push(format!("eps {target} -> sigma {:.6}", cal.sigma_x));
    }
    Ok(detail.join(", "))
}

fn toy_dataset(per_class: usize, classes: u32, d_x: usize, seed: u64) -> Dataset {
    let mut rng = sample_stream(seed, 0, 0);
    let n = per_class * classes as usize;
    let labels: Vec<u32> = (0..n).map(|i| (i % classes as usize) as u32 + 1).collect();
    let x = Array2::from_shape_fn((n, d_x), |(i, j)| rng.random::<f64>() * 4.0 - 2.0 + labels[i] as f64 * (j as f64 + 1.0));
    let raw = Dataset::new(x, labels, classes, "toy").unwrap();
    normalize_dataset(&raw, ClipParam::new(1.0).unwrap()).unwrap().0
}

fn generating_classes(t: u64, k: u32) -> Vec<u32> {
    class_quotas(t, k)
        .iter()
        .enumerate()
        .flat_map(|(c, &q)| std::iter::repeat_n(c as u32 + 1, q as usize))
        .collect()
}

fn class_rows(ds: &Dataset, k: u32) -> Vec<Vec<f64>> {
    ds.features()
        .rows()
        .into_iter()
        .zip(ds.labels())
        .filter(|(_, &y)| y == k)
        .map(|(r, _)| r.to_vec())
        .collect()
}

fn synthesize(ds: &Dataset, cfg: &SynthesisConfig, threads: usize) -> Result<SyntheticDataset, String> {
    synthesize_dataset_with_threads(ds, cfg, Some(threads)).map_err(|e| e.to_string())
}

fn synthesis_properties() -> Outcome {
    let toy = toy_dataset(250, 4, 3, 11);

    // Balance: with sigma_y = 0 decoded labels are the generating classes.
    let cfg = SynthesisConfig::new(5, 1003, 1.0, 0.5, 0.0, 1);
    let out = synthesize(&toy, &cfg, 4)?;
    let counts = out.class_counts();
    ensure!(counts.iter().sum::<usize>() == 1003, "sum {counts:?}");
    ensure!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1, "counts {counts:?}");
    ensure!(out.labels == generating_classes(1003, 4), "label purity at sigma_y = 0 fails");

    // Thread count does not reach the bytes.
    let cfg = SynthesisConfig::new(8, 1000, 1.0, 0.7, 0.4, 2);
    let one = encode_synthetic(&synthesize(&toy, &cfg, 1)?).map_err(|e| e.to_string())?;
    let eight = encode_synthetic(&synthesize(&toy, &cfg, 8)?).map_err(|e| e.to_string())?;
    ensure!(one == eight, "1 and 8 threads give different containers");

    // l = 1 without noise copies rows of the right class.
    let cfg = SynthesisConfig::new(1, 400, 1.0, 0.0, 0.0, 3);
    let out = synthesize(&toy, &cfg, 4)?;
    for (row, &y) in out.features.rows().into_iter().zip(&out.labels) {
        ensure!(class_rows(&toy, y).contains(&row.to_vec()), "l = 1 sample is not a class row");
    }

    // l = N_k without noise is the class centroid, summed in row order.
    let cfg = SynthesisConfig::new(250, 40, 1.0, 0.0, 0.0, 4);
    let out = synthesize(&toy, &cfg, 4)?;
    for (row, &y) in out.features.rows().into_iter().zip(&out.labels) {
        let members = class_rows(&toy, y);
        let mut sum = vec![0.0; 3];
        for m in &members {
            for (s, v) in sum.iter_mut().zip(m) {
                *s += v;
            }
        }
        let centroid: Vec<f64> = sum.iter().map(|s| s / members.len() as f64).collect();
        ensure!(row.to_vec() == centroid, "class {y}: {row} is not the centroid {centroid:?}");
    }

    // sigma_x = 0: each sample is the mean of some l-subset of its class.
    let small = toy_dataset(6, 2, 3, 12);
    let cfg = SynthesisConfig::new(3, 30, 1.0, 0.0, 0.8, 5);
    let out = synthesize(&small, &cfg, 2)?;
    for (row, &k) in out.features.rows().into_iter().zip(&generating_classes(30, 2)) {
        let members = class_rows(&small, k);
        let mut found = false;
        for a in 0..6 {
            for b in a + 1..6 {
                for c in b + 1..6 {
                    let mean: Vec<f64> = (0..3)
                        .map(|j| (members[a][j] + members[b][j] + members[c][j]) / 3.0)
                        .collect();
                    found |= row.to_vec() == mean;
                }
            }
        }
        ensure!(found, "sample {row} is not a 3-point mean of class {k}");
    }

    let (chi_pairs, chi_single) = uniformity()?;
    Ok(format!("chi2 pairs {chi_pairs:.2} (crit {CHI2_CRIT_DF5}), singles {chi_single:.2} (crit {CHI2_CRIT_DF2})"))
}

/// Chi-square statistics for l = 2 over 4 rows and l = 1 over 3 rows, drawn
/// from the per-sample streams the synthesizer uses.
fn uniformity() -> Result<(f64, f64), String> {
    let check = |list: &[usize], l: u64, draws: u64, cells: usize| -> Result<f64, String> {
        let mut counts: HashMap<Vec<usize>, u64> = HashMap::new();
        for i in 0..draws {
            let mut rng = sample_stream(99, 1, i);
            let mut pick = sample_indices(list, l, &mut rng).map_err(|e| e.to_string())?;
            pick.sort_unstable();
            *counts.entry(pick).or_default() += 1;
        }
        ensure!(counts.len() == cells, "{} distinct subsets, expected {cells}", counts.len());
        let expected = draws as f64 / cells as f64;
        let p = 1.0 / cells as f64;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        let mut chi = 0.0;
        for (subset, &c) in &counts {
            ensure!((c as f64 - expected).abs() <= 3.0 * sd, "subset {subset:?}: {c} vs {expected:.0}");
            chi += (c as f64 - expected).powi(2) / expected;
        }
        Ok(chi)
    };
    let pairs = check(&[10, 11, 12, 13], 2, 60000, 6)?;
    ensure!(pairs < CHI2_CRIT_DF5, "pair chi2 {pairs}");
    let singles = check(&[4, 5, 6], 1, 30000, 3)?;
    ensure!(singles < CHI2_CRIT_DF2, "single chi2 {singles}");
    Ok((pairs, singles))
}

fn matrix(v: &Value) -> Array2<f64> {
    let rows: Vec<Vec<f64>> = v
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect())
        .collect();
    Array2::from_shape_vec((rows.len(), rows[0].len()), rows.concat()).unwrap()
}

fn labels_of(v: &Value) -> Vec<u32> {
    v.as_array().unwrap().iter().map(|x| x.as_u64().unwrap() as u32).collect()
}

fn io_round_trips() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (t, d_x) = (10usize, 784usize);
    let mut rng = sample_stream(7, 0, 0);
    let ds = SyntheticDataset {
        features: Array2::from_shape_fn((t, d_x), |_| rng.random::<f64>() * 2.0 - 1.0),
        labels: (0..t).map(|i| (i % 10) as u32 + 1).collect(),
        class_count: 10,
        metadata: SyntheticMetadata {
            source_name: "acceptance".into(),
            original_labels: (0..10).collect(),
            config: SynthesisConfig::new(4, t as u64, 1.0, 0.5, 0.5, 7),
            privacy: None,
        },
    };
    let path = dir.path().join("s.dpcd");
    write_synthetic(&ds, &path, OutputFormat::Container).map_err(|e| e.to_string())?;
    let bytes = fs::read(&path).map_err(|e| e.to_string())?;
    let payload = CONTAINER_HEADER_BYTES + t * d_x * 4 + t;
    ensure!(payload == 32 + 31360 + 10, "payload size {payload}");
    let meta_len = u32::from_le_bytes(bytes[payload..payload + 4].try_into().unwrap()) as usize;
    ensure!(bytes.len() == payload + 4 + meta_len, "file is {} bytes", bytes.len());
    let back = read_synthetic(&path).map_err(|e| e.to_string())?;
    ensure!(back.labels == ds.labels && back.class_count == 10 && back.metadata == ds.metadata, "header fields differ");
    ensure!(
        back.features.iter().zip(ds.features.iter()).all(|(a, b)| *a == f64::from(*b as f32)),
        "features differ beyond f32 rounding"
    );
    ensure!(encode_synthetic(&back).map_err(|e| e.to_string())? == bytes, "re-encoding changes bytes");
    let mut bad = bytes.clone();
    bad[0] = b'Q';
    ensure!(matches!(decode_synthetic(&bad), Err(DatasetError::Format(_))), "bad magic accepted");
    ensure!(
        matches!(decode_synthetic(&bytes[..1000]), Err(DatasetError::Length { actual: 1000, .. })),
        "truncation not reported as a length error"
    );

    let exp = json("io_expected.json");
    let idx = load_idx(&core_fixture("idx3-images.idx"), &core_fixture("idx3-labels.idx")).map_err(|e| e.to_string())?;
    ensure!(idx.features() == &matrix(&exp["idx"]["rows"]), "IDX rows differ");
    ensure!(idx.labels() == labels_of(&exp["idx"]["labels"]).as_slice(), "IDX labels differ");
    let cifar = load_cifar10_batch(&core_fixture("cifar2.bin")).map_err(|e| e.to_string())?;
    ensure!(cifar.features() == &matrix(&exp["cifar"]["rows"]), "CIFAR rows differ");
    ensure!(cifar.labels() == labels_of(&exp["cifar"]["labels"]).as_slice(), "CIFAR labels differ");
    let csv = load_csv(&core_fixture("random100.csv"), &LabelColumn::Name("class".into())).map_err(|e| e.to_string())?;
    ensure!(csv.features() == &matrix(&exp["csv"]["rows"]), "CSV values differ");

    let mut grid = PreviewGrid::new(1, 1, 28, 28, Channels::Gray);
    let pgm = encode_preview(Array2::zeros((1, 784)).view(), &mut grid).map_err(|e| e.to_string())?;
    ensure!(pgm == [b"P5\n28 28\n255\n".as_slice(), &[0u8; 784]].concat(), "zero PGM differs");
    let four = Array2::from_shape_fn((4, 784), |(i, j)| (i * 784 + j) as f64);
    let mut grid = PreviewGrid::new(2, 2, 28, 28, Channels::Gray);
    let pgm = encode_preview(four.view(), &mut grid).map_err(|e| e.to_string())?;
    let header = b"P5\n56 56\n255\n";
    ensure!(pgm.starts_with(header) && pgm.len() == header.len() + 56 * 56, "2x2 PGM geometry");
    Ok(format!("container {} bytes, metadata {meta_len} bytes", bytes.len()))
}

fn privacy_grid_sweep() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join("sweep.csv");
    let ls: Vec<String> = powers_of_two(0, 9).iter().map(u64::to_string).collect();
    let args = [
        "dpcda", "sweep", "--n", "60000", "--t", "60000", "--l-values", &ls.join(","), "--sigma-min", "0.1",
        "--sigma-max", "10", "--sigma-count", "13", "--alpha-max", "256", "--out", out.to_str().unwrap(),
    ];
    let (mut stdout, mut stderr) = (Vec::new(), Vec::new());
    let code = dpcda_cli::run(args, &mut stdout, &mut stderr);
    ensure!(code == 0, "exit {code}: {}", String::from_utf8_lossy(&stderr));
    let text = fs::read_to_string(&out).map_err(|e| e.to_string())?;
    let mut lines = text.lines();
    ensure!(lines.next() == Some("l,sigma_x,sigma_y,alpha_star,epsilon,status"), "CSV header");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    ensure!(rows.len() == 130, "{} rows", rows.len());
    let mut boundary = 0;
    for r in &rows {
        ensure!(r.len() == 6 && !r[4].is_empty(), "incomplete row {r:?}");
        ensure!(r[5] == "ok" || r[5] == "ok-boundary", "row {r:?}");
        boundary += usize::from(r[5] == "ok-boundary");
    }
    Ok(format!("{} cells, {boundary} with the minimum at alpha_max", rows.len()))
}

fn main() {
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria = [
        Criterion { name: "accountant-identities", budget: Duration::from_secs(1), check: identities },
        Criterion { name: "oracle-equivalence", budget: Duration::from_secs(60), check: oracle_equivalence },
        Criterion { name: "monotonicity", budget: Duration::from_secs(120), check: monotonicity },
        Criterion { name: "tightness-vs-baseline", budget: Duration::from_secs(120), check: tightness },
        Criterion { name: "calibration-round-trip", budget: Duration::from_secs(60), check: calibration_round_trip },
        Criterion { name: "synthesis-properties", budget: Duration::from_secs(120), check: synthesis_properties },
        Criterion { name: "io-round-trips", budget: Duration::from_secs(30), check: io_round_trips },
        Criterion { name: "privacy-grid-sweep", budget: Duration::from_secs(300), check: privacy_grid_sweep },
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    let mut ran = 0;
    for c in criteria.iter().filter(|c| filter.as_deref().is_none_or(|f| c.name.contains(f))) {
        ran += 1;
        let start = Instant::now();
        let result = panic::catch_unwind(c.check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok(d) if elapsed <= c.budget => (true, d),
            Ok(d) => (false, format!("over budget; {d}")),
            Err(e) => (false, e),
        };
        failed += usize::from(!pass);
        println!(
            "{} {:<24} {:>7.2}s / {:>3}s  {detail}",
            if pass { "PASS" } else { "FAIL" },
            c.name,
            elapsed.as_secs_f64(),
            c.budget.as_secs()
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
