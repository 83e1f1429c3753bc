use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{compose_and_convert, AccountantError, AccountingParams};

/// Column order of the sweep CSV.
pub const SWEEP_CSV_HEADER: [&str; 6] = ["l", "sigma_x", "sigma_y", "alpha_star", "epsilon", "status"];

/// One `(l, sigma)` cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub l: u64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub alpha_star: Option<u32>,
    pub epsilon: Option<f64>,
    /// `ok`, `ok-boundary`, `precision-failure`, `non-private` or `invalid`.
    pub status: String,
}

impl SweepRow {
    pub fn is_precision_failure(&self) -> bool {
        self.status == "precision-failure"
    }
}

/// Accounts every `(l, sigma)` cell, with `sigma_x = sigma` and
/// `sigma_y = ratio * sigma`. Rows come back l-major in input order; a failing
/// cell is recorded in its row rather than aborting the sweep.
pub fn sweep(
    l_values: &[u64],
    sigma_values: &[f64],
    ratio: f64,
    template: &AccountingParams,
) -> Result<Vec<SweepRow>, AccountantError> {
    if l_values.is_empty() || sigma_values.is_empty() {
        return Err(AccountantError::InvalidParams("sweep grid is empty".into()));
    }
    let cells: Vec<(u64, f64)> = l_values
        .iter()
        .flat_map(|&l| sigma_values.iter().map(move |&s| (l, s)))
        .collect();
    Ok(cells
        .par_iter()
        .map(|&(l, sigma)| {
            let mut params = template.clone().with_sigmas(sigma, ratio * sigma);
            params.l = l;
            let mut row = SweepRow {
                l,
                sigma_x: params.sigma_x,
                sigma_y: params.sigma_y,
                alpha_star: None,
                epsilon: None,
                status: String::new(),
            };
            match compose_and_convert(&params) {
                Ok(report) => {
                    row.alpha_star = Some(report.alpha_star);
                    row.epsilon = Some(report.epsilon);
                    row.status = if report.interior_minimum { "ok" } else { "ok-boundary" }.into();
                }
                Err(e) if e.is_precision_failure() => row.status = "precision-failure".into(),
                Err(AccountantError::NonPrivate) => row.status = "non-private".into(),
                Err(_) => row.status = "invalid".into(),
            }
            row
        })
        .collect())
}

/// Writes rows under [`SWEEP_CSV_HEADER`]; missing values are empty fields.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(SWEEP_CSV_HEADER)?;
    for row in rows {
        writer.write_record([
            row.l.to_string(),
            row.sigma_x.to_string(),
            row.sigma_y.to_string(),
            row.alpha_star.map(|a| a.to_string()).unwrap_or_default(),
            row.epsilon.map(|e| e.to_string()).unwrap_or_default(),
            row.status.clone(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// `count` values spaced evenly in log between `lo` and `hi`, inclusive.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count)
                .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
                .collect()
        }
    }
}
