use serde::{Deserialize, Serialize};

use super::{compose_and_convert, AccountantError, AccountingParams, PrivacyReport, Result};

/// Search interval for `sigma_x`.
pub const CALIBRATION_BRACKET: (f64, f64) = (1e-4, 1e4);
const MAX_ITERATIONS: usize = 200;
// Stop once the bracket is this tight (relative); epsilon is continuous in sigma.
const BRACKET_RESOLUTION: f64 = 1e-10;

/// Outcome of fitting the noise scale to a target epsilon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub target_epsilon: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    /// `sigma_y / sigma_x`.
    pub ratio: f64,
    pub iterations: usize,
    /// The low end of the bracket already met the target.
    pub bracket_bound_hit: bool,
    pub report: PrivacyReport,
}

/// Finds the smallest `sigma_x` (with `sigma_y = ratio * sigma_x`) whose
/// accounted epsilon does not exceed `target_epsilon`.
///
/// The sigma fields of `template` are ignored. Epsilon is nonincreasing in
/// both noise scales, so a geometric bisection over [`CALIBRATION_BRACKET`]
/// converges; the returned sigma always satisfies the target.
pub fn calibrate_noise(
    target_epsilon: f64,
    template: &AccountingParams,
    ratio: f64,
) -> Result<Calibration> {
    if !(target_epsilon.is_finite() && target_epsilon > 0.0) {
        return Err(AccountantError::InvalidParams(format!(
            "target epsilon must be positive, got {target_epsilon}"
        )));
    }
    if !(ratio.is_finite() && ratio > 0.0) {
        return Err(AccountantError::InvalidParams(format!(
            "sigma ratio must be positive, got {ratio}"
        )));
    }
    let account = |sigma_x: f64| {
        compose_and_convert(&template.clone().with_sigmas(sigma_x, ratio * sigma_x))
    };

    let (mut lo, mut hi) = CALIBRATION_BRACKET;
    let mut hi_report = account(hi)?;
    let lo_report = account(lo)?;
    if hi_report.epsilon > target_epsilon {
        return Err(AccountantError::CalibrationUnreachable {
            target: target_epsilon,
            sigma_lo: lo,
            sigma_hi: hi,
            epsilon_at_lo: lo_report.epsilon,
            epsilon_at_hi: hi_report.epsilon,
        });
    }
    if lo_report.epsilon <= target_epsilon {
        return Ok(Calibration {
            target_epsilon,
            sigma_x: lo,
            sigma_y: ratio * lo,
            ratio,
            iterations: 0,
            bracket_bound_hit: true,
            report: lo_report,
        });
    }

    let mut iterations = 0;
    while iterations < MAX_ITERATIONS && hi / lo - 1.0 > BRACKET_RESOLUTION {
        iterations += 1;
        let mid = (lo * hi).sqrt();
        let report = account(mid)?;
        if report.epsilon <= target_epsilon {
            hi = mid;
            hi_report = report;
        } else {
            lo = mid;
        }
    }

    Ok(Calibration {
        target_epsilon,
        sigma_x: hi,
        sigma_y: ratio * hi,
        ratio,
        iterations,
        bracket_bound_hit: false,
        report: hi_report,
    })
}
