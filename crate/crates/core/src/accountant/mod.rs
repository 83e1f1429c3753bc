//! Rényi-DP accounting for class-centric mixing.
//!
//! A single synthetic sample averages `l` clipped rows and `l` one-hot labels
//! and adds Gaussian noise to both, so it is a Gaussian mechanism whose RDP is
//! linear in the order: `eps(a) = a * slope` with
//! `slope = (2 c^2 / sigma_x^2 + 1 / sigma_y^2) / l^2` (sensitivities `2c/l`
//! and `sqrt(2)/l`). Picking the `l` rows at random amplifies this through the
//! subsampled-RDP bound
//!
//! ```text
//! eps'(a) = log(1 + p^2 C(a,2) min{4(e^{eps(2)} - 1), 2 e^{eps(2)}} + 4 G(a)) / (a - 1)
//! G(a)    = sum_{j=3..a} p^j C(a,j) sqrt(B(2 floor(j/2)) B(2 ceil(j/2)))
//! ```
//!
//! and `T` releases compose to `T eps'(a)`, which converts to
//! `(T eps'(a) + log(1/delta)/(a-1), delta)`-DP; the reported epsilon is the
//! minimum over integer orders `3..=alpha_max`. All values are natural-log
//! units.
//!
//! The z-score statistics used during preprocessing are not released and are
//! not charged to the budget computed here.

pub mod calibrate;
pub mod logspace;
pub mod moments;
pub mod sweep;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use logspace::{ln_expm1, log_add_exp, log_sum_exp, softplus, LnFactorials};
use moments::MomentTable;

pub use calibrate::{calibrate_noise, Calibration, CALIBRATION_BRACKET};
pub use sweep::{sweep, SweepRow};

pub const DEFAULT_DELTA: f64 = 1e-5;
pub const DEFAULT_ALPHA_MAX: u32 = 256;
pub const MIN_ALPHA: u32 = 3;
/// Upper limit on `alpha_max`; the moment table grows quadratically with it.
pub const ALPHA_MAX_LIMIT: u32 = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AccountantError {
    #[error("invalid accounting parameters: {0}")]
    InvalidParams(String),
    #[error("a noise standard deviation is zero: the release is not differentially private")]
    NonPrivate,
    #[error("precision failure in moment term B({order}): {detail}")]
    PrecisionFailure { order: u32, detail: String },
    #[error("moment term B({order}) is negative (|B| = exp({ln_abs:.6}))")]
    NegativeMoment { order: u32, ln_abs: f64 },
    #[error("every order in 3..={alpha_max} failed: {first}")]
    AllOrdersFailed {
        alpha_max: u32,
        first: Box<AccountantError>,
    },
    #[error(
        "target epsilon {target} is unreachable for sigma_x in [{sigma_lo:e}, {sigma_hi:e}]: \
         epsilon is {epsilon_at_lo} at the low end and {epsilon_at_hi} at the high end"
    )]
    CalibrationUnreachable {
        target: f64,
        sigma_lo: f64,
        sigma_hi: f64,
        epsilon_at_lo: f64,
        epsilon_at_hi: f64,
    },
}

impl AccountantError {
    /// True for errors caused by loss of numerical significance.
    pub fn is_precision_failure(&self) -> bool {
        match self {
            AccountantError::PrecisionFailure { .. } | AccountantError::NegativeMoment { .. } => {
                true
            }
            AccountantError::AllOrdersFailed { first, .. } => first.is_precision_failure(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, AccountantError>;

/// Which population the `l` mixed rows are considered to be drawn from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// `p = l / N`.
    #[default]
    Global,
    /// `p = l / min_k N_k`, matching the per-class draw of the generator.
    PerClass,
}

/// Everything the accountant needs for one synthesis run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountingParams {
    /// Order of mixture.
    pub l: u64,
    /// Clipping bound on row norms.
    pub c: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    /// Private dataset size.
    pub n: u64,
    /// Number of released synthetic samples.
    pub t: u64,
    pub delta: f64,
    pub alpha_max: u32,
    pub sampling: SamplingMode,
    /// Smallest class size; required in [`SamplingMode::PerClass`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_class_size: Option<u64>,
}

impl AccountingParams {
    pub fn new(l: u64, c: f64, sigma_x: f64, sigma_y: f64, n: u64, t: u64) -> Self {
        AccountingParams {
            l,
            c,
            sigma_x,
            sigma_y,
            n,
            t,
            delta: DEFAULT_DELTA,
            alpha_max: DEFAULT_ALPHA_MAX,
            sampling: SamplingMode::Global,
            min_class_size: None,
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_alpha_max(mut self, alpha_max: u32) -> Self {
        self.alpha_max = alpha_max;
        self
    }

    pub fn with_per_class_sampling(mut self, min_class_size: u64) -> Self {
        self.sampling = SamplingMode::PerClass;
        self.min_class_size = Some(min_class_size);
        self
    }

    pub fn with_sigmas(mut self, sigma_x: f64, sigma_y: f64) -> Self {
        self.sigma_x = sigma_x;
        self.sigma_y = sigma_y;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(AccountantError::InvalidParams(msg));
        if self.l == 0 {
            return bad("l must be at least 1".into());
        }
        if !(self.c.is_finite() && self.c > 0.0) {
            return bad(format!("clipping bound c must be positive, got {}", self.c));
        }
        for (name, s) in [("sigma_x", self.sigma_x), ("sigma_y", self.sigma_y)] {
            if s.is_nan() || s < 0.0 {
                return bad(format!("{name} must be nonnegative, got {s}"));
            }
        }
        if self.n == 0 || self.t == 0 {
            return bad("n and t must be positive".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.alpha_max < MIN_ALPHA || self.alpha_max > ALPHA_MAX_LIMIT {
            return bad(format!(
                "alpha_max must lie in {MIN_ALPHA}..={ALPHA_MAX_LIMIT}, got {}",
                self.alpha_max
            ));
        }
        if self.sampling == SamplingMode::PerClass && self.min_class_size.is_none() {
            return bad("per-class sampling needs the smallest class size".into());
        }
        let population = self.sampling_population();
        if population == 0 || self.l > population {
            return bad(format!(
                "l = {} exceeds the sampling population {population}",
                self.l
            ));
        }
        Ok(())
    }

    fn sampling_population(&self) -> u64 {
        match self.sampling {
            SamplingMode::Global => self.n,
            SamplingMode::PerClass => self.min_class_size.unwrap_or(0),
        }
    }

    /// Subsampling ratio `p`.
    pub fn sampling_ratio(&self) -> f64 {
        self.l as f64 / self.sampling_population() as f64
    }

    /// `eps(a) / a` for the dimension-free base mechanism; `+inf` when a sigma is zero.
    pub fn rdp_slope(&self) -> f64 {
        if self.sigma_x == 0.0 || self.sigma_y == 0.0 {
            return f64::INFINITY;
        }
        let l = self.l as f64;
        (2.0 * self.c * self.c / (self.sigma_x * self.sigma_x)
            + 1.0 / (self.sigma_y * self.sigma_y))
            / (l * l)
    }

    /// `eps(a) / a` for the dimension-dependent comparison bound.
    pub fn baseline_rdp_slope(&self, d_x: u64, d_y: u64) -> f64 {
        if self.sigma_x == 0.0 || self.sigma_y == 0.0 {
            return f64::INFINITY;
        }
        let l = self.l as f64;
        (d_x as f64 / (self.sigma_x * self.sigma_x) + d_y as f64 / (self.sigma_y * self.sigma_y))
            / (2.0 * l * l)
    }
}

/// One point of the per-release RDP curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdpPoint {
    pub alpha: u32,
    pub epsilon: f64,
}

/// Per-release `eps'(a)` over the searched orders.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RdpCurve {
    pub points: Vec<RdpPoint>,
}

impl RdpCurve {
    pub fn get(&self, alpha: u32) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.alpha == alpha)
            .map(|p| p.epsilon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseBound {
    /// Sensitivity-based bound, independent of the data dimension.
    DimensionFree,
    /// `a/(2 l^2) (d_x/sigma_x^2 + d_y/sigma_y^2)`, kept for comparison.
    DimensionDependent { d_x: u64, d_y: u64 },
}

/// Final `(epsilon, delta)` guarantee and everything that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub epsilon: f64,
    pub delta: f64,
    pub alpha_star: u32,
    /// `alpha_star < alpha_max`.
    pub interior_minimum: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_warning: Option<String>,
    pub sampling_ratio: f64,
    pub rdp_slope: f64,
    pub base_bound: BaseBound,
    pub params: AccountingParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_epsilon: Option<f64>,
    /// Orders skipped because a moment term could not be resolved.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failed_orders: Vec<u32>,
    pub precision_note: String,
    pub per_release_rdp: RdpCurve,
}

impl PrivacyReport {
    /// Converted epsilon at a given order: `T eps'(a) + log(1/delta)/(a-1)`.
    pub fn converted_at(&self, alpha: u32) -> Option<f64> {
        self.per_release_rdp
            .get(alpha)
            .map(|e| convert(self.params.t, e, self.delta, alpha))
    }
}

fn convert(t: u64, per_release: f64, delta: f64, alpha: u32) -> f64 {
    t as f64 * per_release + (-delta.ln()) / (alpha as f64 - 1.0)
}

/// `eps(a) = a * slope`; zero at `a = 0`, `+inf` for a zero sigma.
pub fn base_rdp_epsilon(alpha: u32, params: &AccountingParams) -> f64 {
    if alpha == 0 {
        return 0.0;
    }
    alpha as f64 * params.rdp_slope()
}

/// The subsampled mechanism for one slope and ratio, with its moment table.
#[derive(Debug, Clone)]
pub struct AmplifiedGaussian {
    slope: f64,
    ln_p: f64,
    moments: MomentTable,
    factorials: LnFactorials,
}

impl AmplifiedGaussian {
    /// Prepares every moment term needed for orders up to `alpha_max`.
    pub fn new(slope: f64, p: f64, alpha_max: u32) -> Result<Self> {
        if !slope.is_finite() {
            return Err(AccountantError::NonPrivate);
        }
        if !(slope >= 0.0) || !(p > 0.0 && p <= 1.0) {
            return Err(AccountantError::InvalidParams(format!(
                "slope {slope} / ratio {p} out of range"
            )));
        }
        let top = 2 * alpha_max.div_ceil(2);
        let orders: Vec<u32> = (0..=top).step_by(2).collect();
        Ok(AmplifiedGaussian {
            slope,
            ln_p: p.ln(),
            moments: MomentTable::compute(slope, &orders),
            factorials: LnFactorials::new(alpha_max.max(2) as usize),
        })
    }

    pub fn moments(&self) -> &MomentTable {
        &self.moments
    }

    pub fn base_epsilon(&self, alpha: u32) -> f64 {
        if alpha == 0 {
            0.0
        } else {
            alpha as f64 * self.slope
        }
    }

    /// `ln G(a)`; `-inf` for `a < 3`.
    pub fn ln_g(&self, alpha: u32) -> Result<f64> {
        let mut terms = Vec::with_capacity(alpha as usize);
        for j in 3..=alpha {
            let lo = self.moments.ln_moment(2 * (j / 2))?;
            let hi = self.moments.ln_moment(2 * j.div_ceil(2))?;
            terms.push(
                j as f64 * self.ln_p
                    + self.factorials.ln_binomial(alpha as usize, j as usize)
                    + 0.5 * (lo + hi),
            );
        }
        Ok(log_sum_exp(terms))
    }

    /// Per-release RDP `eps'(a)` of the subsampled mechanism, `a >= 2`.
    pub fn epsilon_prime(&self, alpha: u32) -> Result<f64> {
        if alpha < 2 {
            return Err(AccountantError::InvalidParams(format!(
                "subsampled RDP needs alpha >= 2, got {alpha}"
            )));
        }
        let eps2 = self.base_epsilon(2);
        let ln_min = (4f64.ln() + ln_expm1(eps2)).min(2f64.ln() + eps2);
        let second = 2.0 * self.ln_p + self.factorials.ln_binomial(alpha as usize, 2) + ln_min;
        let ln_inner = log_add_exp(second, 4f64.ln() + self.ln_g(alpha)?);
        Ok((softplus(ln_inner) / (alpha as f64 - 1.0)).max(0.0))
    }
}

fn checked_chain(params: &AccountingParams, slope: f64, alpha_max: u32) -> Result<AmplifiedGaussian> {
    params.validate()?;
    AmplifiedGaussian::new(slope, params.sampling_ratio(), alpha_max)
}

/// `B(j)` for the run described by `params`.
pub fn moment_term_b(j: u32, params: &AccountingParams) -> Result<f64> {
    ln_moment_term_b(j, params).map(f64::exp)
}

/// `ln B(j)`; use this when `B(j)` leaves the f64 range.
pub fn ln_moment_term_b(j: u32, params: &AccountingParams) -> Result<f64> {
    params.validate()?;
    let slope = params.rdp_slope();
    if !slope.is_finite() {
        return Err(AccountantError::NonPrivate);
    }
    MomentTable::compute(slope, &[j]).ln_moment(j)
}

/// `G(a)`; zero for `a < 3`.
pub fn higher_order_g(alpha: u32, params: &AccountingParams) -> Result<f64> {
    ln_higher_order_g(alpha, params).map(f64::exp)
}

pub fn ln_higher_order_g(alpha: u32, params: &AccountingParams) -> Result<f64> {
    if alpha < 3 {
        return Ok(f64::NEG_INFINITY);
    }
    checked_chain(params, params.rdp_slope(), alpha)?.ln_g(alpha)
}

/// `eps'(a)`, the RDP of a single synthetic sample at order `a >= 2`.
pub fn subsampled_rdp_epsilon(alpha: u32, params: &AccountingParams) -> Result<f64> {
    checked_chain(params, params.rdp_slope(), alpha.max(2))?.epsilon_prime(alpha)
}

/// Composes `T` releases and converts to `(epsilon, delta)`-DP at the best order.
pub fn compose_and_convert(params: &AccountingParams) -> Result<PrivacyReport> {
    let slope = params.rdp_slope();
    account_with_slope(params, slope, BaseBound::DimensionFree)
}

/// Same pipeline with the dimension-dependent base bound substituted.
pub fn dimension_dependent_baseline(
    params: &AccountingParams,
    d_x: u64,
    d_y: u64,
) -> Result<PrivacyReport> {
    if d_x == 0 || d_y == 0 {
        return Err(AccountantError::InvalidParams(
            "baseline dimensions must be at least 1".into(),
        ));
    }
    let slope = params.baseline_rdp_slope(d_x, d_y);
    account_with_slope(params, slope, BaseBound::DimensionDependent { d_x, d_y })
}

/// Our report with `baseline_epsilon` filled in from the dimension-dependent bound.
pub fn compare_with_baseline(
    params: &AccountingParams,
    d_x: u64,
    d_y: u64,
) -> Result<PrivacyReport> {
    let mut ours = compose_and_convert(params)?;
    let baseline = dimension_dependent_baseline(params, d_x, d_y)?;
    ours.baseline_epsilon = Some(baseline.epsilon);
    Ok(ours)
}

fn account_with_slope(
    params: &AccountingParams,
    slope: f64,
    base_bound: BaseBound,
) -> Result<PrivacyReport> {
    let chain = checked_chain(params, slope, params.alpha_max)?;

    let mut curve = Vec::with_capacity(params.alpha_max as usize);
    let mut failed = Vec::new();
    let mut first_error = None;
    let mut best: Option<(f64, u32)> = None;
    for alpha in MIN_ALPHA..=params.alpha_max {
        match chain.epsilon_prime(alpha) {
            Ok(per_release) => {
                curve.push(RdpPoint {
                    alpha,
                    epsilon: per_release,
                });
                let converted = convert(params.t, per_release, params.delta, alpha);
                if best.is_none_or(|(b, _)| converted < b) {
                    best = Some((converted, alpha));
                }
            }
            Err(e) => {
                failed.push(alpha);
                first_error.get_or_insert(e);
            }
        }
    }

    let Some((epsilon, alpha_star)) = best else {
        return Err(AccountantError::AllOrdersFailed {
            alpha_max: params.alpha_max,
            first: Box::new(first_error.expect("at least one order was searched")),
        });
    };

    let interior_minimum = alpha_star < params.alpha_max;
    let boundary_warning = (!interior_minimum).then(|| {
        format!(
            "minimum reached at the largest searched order {}; raising alpha_max may lower epsilon",
            params.alpha_max
        )
    });
    let (extended, widest) = chain.moments().extended_usage();
    let total = params.alpha_max.div_ceil(2) + 1;
    let precision_note = if extended == 0 {
        format!("f64 log-space evaluation of all {total} moment terms")
    } else {
        format!(
            "f64 log-space; {extended} of {total} moment terms re-evaluated at up to {widest}-bit precision"
        )
    };

    Ok(PrivacyReport {
        epsilon,
        delta: params.delta,
        alpha_star,
        interior_minimum,
        boundary_warning,
        sampling_ratio: params.sampling_ratio(),
        rdp_slope: slope,
        base_bound,
        params: params.clone(),
        baseline_epsilon: None,
        failed_orders: failed,
        precision_note,
        per_release_rdp: RdpCurve { points: curve },
    })
}
