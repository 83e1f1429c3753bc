//! The `dpcda` command line: synthesize, account, calibrate, sweep, preview
//! and compare.
//!
//! Exit codes: 0 success, 1 validation error (including bad flags), 2 loss of
//! numerical precision in the accountant, 3 IO failure.

mod manifest;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use dpcda::accountant::{
    calibrate_noise, compare_with_baseline, compose_and_convert, sweep, AccountantError,
    AccountingParams, PrivacyReport, SamplingMode, DEFAULT_ALPHA_MAX, DEFAULT_DELTA,
};
use dpcda::accountant::sweep::{log_spaced, write_sweep_csv};
use dpcda::dataset::{
    load_cifar10, load_csv, load_idx, read_synthetic, render_preview_grid, write_synthetic,
    Channels, Dataset, DatasetError, LabelColumn, OutputFormat, PreviewGrid, PrivacySummary,
};
use dpcda::preprocess::{normalize_dataset, ClipParam, PreprocessError};
use dpcda::synth::{partition_by_class, synthesize_dataset_with_threads, SynthError, SynthesisConfig};
use serde::Serialize;
use thiserror::Error;

pub use manifest::{manifest_path, read_manifest, RunManifest};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Precision(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Precision(_) => 2,
            CliError::Io { .. } => 3,
        }
    }
}

impl From<AccountantError> for CliError {
    fn from(e: AccountantError) -> Self {
        if e.is_precision_failure() {
            CliError::Precision(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { path, source } => CliError::Io { path, source },
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<PreprocessError> for CliError {
    fn from(e: PreprocessError) -> Self {
        CliError::Validation(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "dpcda", version, about = "Private synthetic data by class-centric mixing", disable_help_flag = true)]
struct Cli {
    #[arg(long, action = ArgAction::Help, global = true, help = "Print help")]
    help: Option<bool>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a private one.
    Synthesize(SynthesizeArgs),
    /// Report (epsilon, delta) for a parameter set.
    Account(AccountArgs),
    /// Find the noise scale that meets a target epsilon.
    Calibrate(CalibrateArgs),
    /// Account a grid of (l, sigma) values into CSV.
    Sweep(SweepArgs),
    /// Render synthetic samples as a PGM/PPM grid.
    Preview(PreviewArgs),
    /// Tabulate our epsilon against the dimension-dependent bound.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum InputFormat {
    Idx,
    Cifar10,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum PMode {
    Global,
    PerClass,
}

impl From<PMode> for SamplingMode {
    fn from(m: PMode) -> Self {
        match m {
            PMode::Global => SamplingMode::Global,
            PMode::PerClass => SamplingMode::PerClass,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum OutFormat {
    Container,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ChannelArg {
    Gray,
    Rgb,
}

/// Accounting inputs shared by account and calibrate.
#[derive(Debug, Args, Serialize)]
struct AccountingFlags {
    #[arg(long)]
    n: u64,
    #[arg(long)]
    t: u64,
    #[arg(long)]
    l: u64,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = DEFAULT_ALPHA_MAX)]
    alpha_max: u32,
    #[arg(long, value_enum, default_value_t = PMode::Global)]
    p_mode: PMode,
    /// Smallest class size, for `--p-mode per-class`.
    #[arg(long)]
    min_class_size: Option<u64>,
}

impl AccountingFlags {
    fn params(&self, sigma_x: f64, sigma_y: f64) -> AccountingParams {
        let mut p = AccountingParams::new(self.l, self.c, sigma_x, sigma_y, self.n, self.t)
            .with_delta(self.delta)
            .with_alpha_max(self.alpha_max);
        p.sampling = self.p_mode.into();
        p.min_class_size = self.min_class_size;
        p
    }
}

#[derive(Debug, Args, Serialize)]
struct AccountArgs {
    #[command(flatten)]
    #[serde(flatten)]
    acct: AccountingFlags,
    #[arg(long)]
    sigma_x: f64,
    /// Defaults to `--ratio` times `--sigma-x`.
    #[arg(long)]
    sigma_y: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    ratio: f64,
    /// Write the report JSON here (and a manifest beside it).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct CalibrateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    acct: AccountingFlags,
    #[arg(long, alias = "epsilon")]
    target_epsilon: f64,
    /// `sigma_y / sigma_x`.
    #[arg(long, default_value_t = 1.0)]
    ratio: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SweepArgs {
    #[arg(long)]
    n: u64,
    /// Defaults to `--n`.
    #[arg(long)]
    t: Option<u64>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64,128,256,512")]
    l_values: Vec<u64>,
    /// Explicit sigma_x values; otherwise a log-spaced grid.
    #[arg(long, value_delimiter = ',')]
    sigma_values: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    sigma_min: f64,
    #[arg(long, default_value_t = 10.0)]
    sigma_max: f64,
    #[arg(long, default_value_t = 13)]
    sigma_count: usize,
    #[arg(long, default_value_t = 1.0)]
    ratio: f64,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = DEFAULT_ALPHA_MAX)]
    alpha_max: u32,
    #[arg(long, value_enum, default_value_t = PMode::Global)]
    p_mode: PMode,
    #[arg(long)]
    min_class_size: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct CompareArgs {
    #[arg(long)]
    n: u64,
    #[arg(long)]
    t: Option<u64>,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32,64,128,256,512")]
    l_values: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,1.0")]
    sigma_values: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    ratio: f64,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 784)]
    d_x: u64,
    #[arg(long, default_value_t = 10)]
    d_y: u64,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = DEFAULT_ALPHA_MAX)]
    alpha_max: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SynthesizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: InputFormat,
    /// IDX label file.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// CSV label column, by header name or zero-based index.
    #[arg(long, default_value = "label")]
    label_column: String,
    #[arg(long)]
    l: u64,
    /// Defaults to the input size.
    #[arg(long)]
    t: Option<u64>,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long)]
    sigma_x: Option<f64>,
    #[arg(long)]
    sigma_y: Option<f64>,
    /// Calibrate the noise to this epsilon instead of giving sigmas.
    #[arg(long, alias = "target-epsilon")]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    ratio: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_ALPHA_MAX)]
    alpha_max: u32,
    #[arg(long, value_enum, default_value_t = PMode::Global)]
    p_mode: PMode,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = OutFormat::Container)]
    out_format: OutFormat,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
struct PreviewArgs {
    /// Synthetic container.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Grid rows in storage order; needs `--cols`.
    #[arg(long, requires = "cols")]
    rows: Option<usize>,
    #[arg(long, requires = "rows")]
    cols: Option<usize>,
    /// One row per class with this many samples each (default 10).
    #[arg(long, conflicts_with = "rows")]
    per_class: Option<usize>,
    #[arg(long, requires = "width")]
    height: Option<usize>,
    #[arg(long, requires = "height")]
    width: Option<usize>,
    #[arg(long, value_enum)]
    channels: Option<ChannelArg>,
}

/// Parses `argv` (including the program name), runs it, and returns the exit
/// code. The summary goes to `stdout`, errors to `stderr`.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{text}");
                    0
                }
                _ => {
                    let _ = write!(stderr, "{text}");
                    1
                }
            };
        }
    };
    let started = Instant::now();
    let result = match &cli.command {
        Command::Synthesize(a) => synthesize(a, stdout),
        Command::Account(a) => account(a, stdout),
        Command::Calibrate(a) => calibrate(a, stdout),
        Command::Sweep(a) => run_sweep(a, stdout),
        Command::Preview(a) => preview(a, stdout),
        Command::Compare(a) => compare(a, stdout),
    };
    match result.and_then(|manifest| match manifest {
        Some((mut m, path)) => {
            m.duration_seconds = started.elapsed().as_secs_f64();
            m.write(&path)
        }
        None => Ok(()),
    }) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

/// A manifest to write once the command finishes, and where.
type Outcome = Result<Option<(RunManifest, PathBuf)>>;

fn out_err(e: io::Error) -> CliError {
    CliError::io(Path::new("<stdout>"), e)
}

fn to_value<S: Serialize>(s: &S) -> serde_json::Value {
    serde_json::to_value(s).expect("arguments serialize")
}

fn print_report(out: &mut dyn Write, report: &PrivacyReport) -> Result<()> {
    writeln!(
        out,
        "epsilon = {} (delta = {:e}) at alpha* = {}",
        report.epsilon, report.delta, report.alpha_star
    )
    .map_err(out_err)?;
    writeln!(
        out,
        "sampling ratio p = {:e}, sigma_x = {}, sigma_y = {}",
        report.sampling_ratio, report.params.sigma_x, report.params.sigma_y
    )
    .map_err(out_err)?;
    if let Some(w) = &report.boundary_warning {
        writeln!(out, "warning: {w}").map_err(out_err)?;
    }
    if !report.failed_orders.is_empty() {
        writeln!(out, "warning: {} orders skipped after precision loss", report.failed_orders.len())
            .map_err(out_err)?;
    }
    writeln!(out, "precision: {}", report.precision_note).map_err(out_err)?;
    Ok(())
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Validation(format!("encoding {}: {e}", path.display())))?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn account(a: &AccountArgs, out: &mut dyn Write) -> Outcome {
    let sigma_y = a.sigma_y.unwrap_or(a.ratio * a.sigma_x);
    let report = compose_and_convert(&a.acct.params(a.sigma_x, sigma_y))?;
    print_report(out, &report)?;
    let Some(path) = &a.out else { return Ok(None) };
    write_json(path, &report)?;
    let mut m = RunManifest::new("account", to_value(a));
    m.outputs.push(path.clone());
    m.privacy_report = Some(report);
    Ok(Some((m, manifest_path(path))))
}

fn calibrate(a: &CalibrateArgs, out: &mut dyn Write) -> Outcome {
    let cal = calibrate_noise(a.target_epsilon, &a.acct.params(1.0, a.ratio), a.ratio)?;
    writeln!(out, "sigma_x = {}", cal.sigma_x).map_err(out_err)?;
    writeln!(out, "sigma_y = {}", cal.sigma_y).map_err(out_err)?;
    if cal.bracket_bound_hit {
        writeln!(out, "note: the smallest searched sigma already meets the target").map_err(out_err)?;
    }
    print_report(out, &cal.report)?;
    let Some(path) = &a.out else { return Ok(None) };
    write_json(path, &cal)?;
    let mut params = to_value(a);
    params["sigma_x"] = cal.sigma_x.into();
    params["sigma_y"] = cal.sigma_y.into();
    let mut m = RunManifest::new("calibrate", params);
    m.outputs.push(path.clone());
    m.privacy_report = Some(cal.report);
    Ok(Some((m, manifest_path(path))))
}

fn with_pool<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn run_sweep(a: &SweepArgs, out: &mut dyn Write) -> Outcome {
    let sigmas = if a.sigma_values.is_empty() {
        if !(a.sigma_min > 0.0 && a.sigma_max >= a.sigma_min && a.sigma_count > 0) {
            return Err(CliError::Validation("need 0 < sigma-min <= sigma-max and sigma-count >= 1".into()));
        }
        log_spaced(a.sigma_min, a.sigma_max, a.sigma_count)
    } else {
        a.sigma_values.clone()
    };
    let mut template = AccountingParams::new(1, a.c, 1.0, 1.0, a.n, a.t.unwrap_or(a.n))
        .with_delta(a.delta)
        .with_alpha_max(a.alpha_max);
    template.sampling = a.p_mode.into();
    template.min_class_size = a.min_class_size;
    let rows = with_pool(a.threads, || sweep(&a.l_values, &sigmas, a.ratio, &template))??;

    let file = fs::File::create(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    write_sweep_csv(&rows, io::BufWriter::new(file)).map_err(|e| CliError::io(&a.out, e.into()))?;
    let failures = rows.iter().filter(|r| r.is_precision_failure()).count();
    let ok = rows.iter().filter(|r| r.status.starts_with("ok")).count();
    writeln!(out, "{} cells written to {}: {ok} ok, {failures} precision failures", rows.len(), a.out.display())
        .map_err(out_err)?;

    let mut params = to_value(a);
    params["sigma_values"] = to_value(&sigmas);
    let mut m = RunManifest::new("sweep", params);
    m.outputs.push(a.out.clone());
    let manifest = manifest_path(&a.out);
    if failures > 0 {
        m.duration_seconds = 0.0;
        m.write(&manifest)?;
        return Err(CliError::Precision(format!("{failures} sweep cells lost precision")));
    }
    Ok(Some((m, manifest)))
}

fn compare(a: &CompareArgs, out: &mut dyn Write) -> Outcome {
    let t = a.t.unwrap_or(a.n);
    let mut table = Vec::new();
    writeln!(out, "{:>5} {:>10} {:>10} {:>14} {:>14}", "l", "sigma_x", "sigma_y", "epsilon", "baseline").map_err(out_err)?;
    for &l in &a.l_values {
        for &s in &a.sigma_values {
            let params = AccountingParams::new(l, a.c, s, a.ratio * s, a.n, t)
                .with_delta(a.delta)
                .with_alpha_max(a.alpha_max);
            let report = compare_with_baseline(&params, a.d_x, a.d_y)?;
            let baseline = report.baseline_epsilon.expect("filled by compare_with_baseline");
            writeln!(out, "{l:>5} {s:>10} {:>10} {:>14.6e} {:>14.6e}", a.ratio * s, report.epsilon, baseline)
                .map_err(out_err)?;
            table.push((l, s, a.ratio * s, report.epsilon, baseline));
        }
    }
    let Some(path) = &a.out else { return Ok(None) };
    let mut w = csv_writer(path)?;
    let io_err = |e: csv::Error| CliError::io(path, e.into());
    w.write_record(["l", "sigma_x", "sigma_y", "epsilon", "baseline_epsilon"]).map_err(io_err)?;
    for (l, sx, sy, e, b) in &table {
        w.write_record([l.to_string(), sx.to_string(), sy.to_string(), e.to_string(), b.to_string()])
            .map_err(io_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    let mut m = RunManifest::new("compare", to_value(a));
    m.outputs.push(path.clone());
    Ok(Some((m, manifest_path(path))))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn load_input(a: &SynthesizeArgs) -> Result<Dataset> {
    Ok(match a.format {
        InputFormat::Idx => {
            let labels = a
                .labels
                .as_ref()
                .ok_or_else(|| CliError::Validation("--format idx needs --labels".into()))?;
            load_idx(&a.input, labels)?
        }
        InputFormat::Cifar10 => load_cifar10(&a.input)?,
        InputFormat::Csv => {
            let column: LabelColumn = a.label_column.parse().expect("infallible");
            load_csv(&a.input, &column)?
        }
    })
}

fn synthesize(a: &SynthesizeArgs, out: &mut dyn Write) -> Outcome {
    let clip = ClipParam::new(a.c)?;
    let raw = load_input(a)?;
    let index = partition_by_class(raw.labels(), raw.class_count())?;
    let min_class = index.min_count() as u64;
    if a.l > min_class {
        let class = index.counts().iter().position(|&n| (n as u64) < a.l).unwrap() as u32 + 1;
        return Err(SynthError::InsufficientClassSize {
            class,
            size: index.class(class).len(),
            l: a.l,
        }
        .into());
    }
    let (ds, _stats) = normalize_dataset(&raw, clip)?;
    let n = ds.len() as u64;
    let t = a.t.unwrap_or(n);

    let mut template = AccountingParams::new(a.l, a.c, 1.0, 1.0, n, t)
        .with_delta(a.delta)
        .with_alpha_max(a.alpha_max);
    if a.p_mode == PMode::PerClass {
        template = template.with_per_class_sampling(min_class);
    }
    let (sigma_x, sigma_y, report) = match (a.epsilon, a.sigma_x) {
        (Some(_), Some(_)) => {
            return Err(CliError::Validation("give either --epsilon or --sigma-x, not both".into()))
        }
        (None, None) => return Err(CliError::Validation("one of --epsilon or --sigma-x is required".into())),
        (Some(eps), None) => {
            if a.sigma_y.is_some() {
                return Err(CliError::Validation("--sigma-y conflicts with --epsilon; use --ratio".into()));
            }
            let cal = calibrate_noise(eps, &template, a.ratio)?;
            (cal.sigma_x, cal.sigma_y, Some(cal.report))
        }
        (None, Some(sx)) => {
            let sy = a.sigma_y.unwrap_or(a.ratio * sx);
            let params = template.clone().with_sigmas(sx, sy);
            match compose_and_convert(&params) {
                Ok(r) => (sx, sy, Some(r)),
                Err(AccountantError::NonPrivate) => (sx, sy, None),
                Err(e) => return Err(e.into()),
            }
        }
    };

    let cfg = SynthesisConfig::new(a.l, t, a.c, sigma_x, sigma_y, a.seed);
    let mut synthetic = synthesize_dataset_with_threads(&ds, &cfg, a.threads)?;
    synthetic.metadata.privacy = report.as_ref().map(|r| PrivacySummary {
        epsilon: r.epsilon,
        delta: r.delta,
        alpha_star: r.alpha_star,
        alpha_max: r.params.alpha_max,
        sampling: r.params.sampling,
        sampling_ratio: r.sampling_ratio,
        dataset_size: n,
    });
    let format = match a.out_format {
        OutFormat::Container => OutputFormat::Container,
        OutFormat::Csv => OutputFormat::Csv,
    };
    write_synthetic(&synthetic, &a.out, format)?;

    writeln!(
        out,
        "wrote {} samples ({} classes, d_x = {}) to {}",
        synthetic.len(),
        synthetic.class_count,
        synthetic.dim(),
        a.out.display()
    )
    .map_err(out_err)?;
    match &report {
        Some(r) => print_report(out, r)?,
        None => writeln!(out, "warning: zero noise, the output is not differentially private").map_err(out_err)?,
    }

    let mut params = to_value(a);
    params["n"] = n.into();
    params["t"] = t.into();
    params["sigma_x"] = sigma_x.into();
    params["sigma_y"] = sigma_y.into();
    params["class_count"] = synthetic.class_count.into();
    params["min_class_size"] = min_class.into();
    let mut m = RunManifest::new("synthesize", params);
    m.inputs.push(a.input.clone());
    if let Some(l) = &a.labels {
        m.inputs.push(l.clone());
    }
    m.outputs.push(a.out.clone());
    m.privacy_report = report;
    Ok(Some((m, manifest_path(&a.out))))
}

fn default_cell(d_x: usize) -> Option<(usize, usize, Channels)> {
    let square = |n: usize| {
        let s = (n as f64).sqrt().round() as usize;
        (s * s == n).then_some(s)
    };
    if let Some(s) = square(d_x) {
        return Some((s, s, Channels::Gray));
    }
    if d_x % 3 == 0 {
        if let Some(s) = square(d_x / 3) {
            return Some((s, s, Channels::Rgb));
        }
    }
    None
}

fn preview(a: &PreviewArgs, out: &mut dyn Write) -> Outcome {
    let beside = manifest_path(&a.input);
    if beside.exists() {
        read_manifest(&beside)?;
    }
    let ds = read_synthetic(&a.input)?;
    let (height, width, channels) = match (a.height, a.width) {
        (Some(h), Some(w)) => {
            let ch = match a.channels {
                Some(ChannelArg::Rgb) => Channels::Rgb,
                Some(ChannelArg::Gray) => Channels::Gray,
                None if h * w * 3 == ds.dim() => Channels::Rgb,
                None => Channels::Gray,
            };
            (h, w, ch)
        }
        _ => default_cell(ds.dim()).ok_or_else(|| {
            CliError::Validation(format!("cannot infer an image shape for d_x = {}; pass --height and --width", ds.dim()))
        })?,
    };
    let (source, rows, cols) = match (a.rows, a.cols) {
        (Some(r), Some(c)) => (ds, r, c),
        _ => {
            let per_class = a.per_class.unwrap_or(10);
            let fewest = ds.class_counts().into_iter().min().unwrap_or(0);
            let per_class = per_class.min(fewest);
            if per_class == 0 {
                return Err(CliError::Validation("a class has no samples to preview".into()));
            }
            let rows = ds.class_count as usize;
            (ds.first_per_class(per_class), rows, per_class)
        }
    };
    let grid = render_preview_grid(&source, &PreviewGrid::new(rows, cols, height, width, channels), &a.out)?;
    let (lo, hi) = grid.pixel_range.unwrap_or((0.0, 0.0));
    writeln!(out, "wrote {rows} x {cols} preview to {} (values {lo} .. {hi} mapped to 0 .. 255)", a.out.display())
        .map_err(out_err)?;
    let mut params = to_value(a);
    params["rows"] = rows.into();
    params["cols"] = cols.into();
    params["height"] = height.into();
    params["width"] = width.into();
    params["pixel_range"] = to_value(&grid.pixel_range);
    let mut m = RunManifest::new("preview", params);
    m.inputs.push(a.input.clone());
    m.outputs.push(a.out.clone());
    Ok(Some((m, manifest_path(&a.out))))
}
