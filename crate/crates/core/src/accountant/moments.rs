//! The alternating moment sums
//!
//! ```text
//! B(j) = sum_{i=0..j} (-1)^i C(j,i) exp((i-1) eps(i)),   eps(i) = slope * i
//! ```
//!
//! For a Gaussian base mechanism `B(j) = E[(1 - L)^j]` where `L` is the
//! likelihood ratio, so even orders are nonnegative and tiny when the slope is
//! small, while the individual terms are of order `2^j`. The sum is first
//! evaluated in f64 log space with adjacent terms combined pairwise; when the
//! estimated number of trustworthy bits falls under [`REQUIRED_BITS`] the
//! whole family is recomputed with extended-precision binary floats as a
//! forward-difference table, doubling the working precision until every
//! requested order is resolved or [`MAX_PRECISION_BITS`] is exceeded.

use astro_float::{BigFloat, Consts, RoundingMode};

use super::logspace::{log_sum_exp, LnFactorials, SignedLog};
use super::AccountantError;

/// Minimum trustworthy bits in `ln B(j)` (relative to `max(1, |ln B(j)|)`).
pub const REQUIRED_BITS: f64 = 40.0;
/// Starting mantissa width of the extended evaluation.
pub const INITIAL_PRECISION_BITS: usize = 256;
/// Largest mantissa width tried before reporting a precision failure.
pub const MAX_PRECISION_BITS: usize = 1 << 17;
/// Negative results smaller than this fraction of the largest term are roundoff.
pub const CLAMP_TOLERANCE: f64 = 1e-9;

// Extra bits demanded from the extended path on top of REQUIRED_BITS.
const EXTENDED_MARGIN_BITS: f64 = 8.0;
// Beyond this exponent (nats) the extended float exponent range is at risk.
const MAX_EXTENDED_LN_TERM: f64 = 1.0e9;

/// How a moment term was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Evaluation {
    /// Closed form (orders 0 and 1, or a zero slope).
    Exact,
    /// f64 log-space summation.
    Float,
    /// Extended-precision summation with the given mantissa width.
    Extended { bits: usize },
}

/// `ln B(j)` together with bookkeeping about how it was computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentValue {
    /// Natural log of `B(j)`; `-inf` when `B(j) == 0`.
    pub ln_value: f64,
    pub evaluation: Evaluation,
    /// A negative roundoff residue was replaced by zero.
    pub clamped: bool,
}

impl MomentValue {
    pub fn value(&self) -> f64 {
        self.ln_value.exp()
    }
}

/// Moment terms for one slope, indexed by order.
#[derive(Debug, Clone)]
pub struct MomentTable {
    slope: f64,
    entries: Vec<Option<Result<MomentValue, AccountantError>>>,
}

impl MomentTable {
    /// Evaluates `B(j)` for every order in `orders`.
    pub fn compute(slope: f64, orders: &[u32]) -> Self {
        let jmax = orders.iter().copied().max().unwrap_or(0) as usize;
        let factorials = LnFactorials::new(jmax.max(1));
        let mut entries: Vec<Option<Result<MomentValue, AccountantError>>> = vec![None; jmax + 1];
        let mut deferred: Vec<(u32, f64)> = Vec::new();

        for &j in orders {
            if entries[j as usize].is_some() {
                continue;
            }
            match float_moment(slope, j, &factorials) {
                FloatOutcome::Done(value) => entries[j as usize] = Some(value),
                FloatOutcome::Deferred { ln_largest } => {
                    if !deferred.iter().any(|(o, _)| *o == j) {
                        deferred.push((j, ln_largest));
                    }
                }
            }
        }

        if !deferred.is_empty() {
            for (j, result) in extended_moments(slope, &deferred) {
                entries[j as usize] = Some(result);
            }
        }

        MomentTable { slope, entries }
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    /// The stored result for order `j`, if it was requested.
    pub fn get(&self, j: u32) -> Option<&Result<MomentValue, AccountantError>> {
        self.entries.get(j as usize).and_then(|e| e.as_ref())
    }

    /// `ln B(j)`, or the error recorded for it.
    pub fn ln_moment(&self, j: u32) -> Result<f64, AccountantError> {
        match self.get(j) {
            Some(Ok(v)) => Ok(v.ln_value),
            Some(Err(e)) => Err(e.clone()),
            None => Err(AccountantError::InvalidParams(format!(
                "moment order {j} was not evaluated"
            ))),
        }
    }

    /// Number of orders that needed the extended path, and the widest mantissa used.
    pub fn extended_usage(&self) -> (usize, usize) {
        let mut count = 0;
        let mut widest = 0;
        for v in self.entries.iter().flatten().flatten() {
            if let Evaluation::Extended { bits } = v.evaluation {
                count += 1;
                widest = widest.max(bits);
            }
        }
        (count, widest)
    }
}

enum FloatOutcome {
    Done(Result<MomentValue, AccountantError>),
    Deferred { ln_largest: f64 },
}

fn float_moment(slope: f64, j: u32, factorials: &LnFactorials) -> FloatOutcome {
    let exact = |ln_value| {
        FloatOutcome::Done(Ok(MomentValue {
            ln_value,
            evaluation: Evaluation::Exact,
            clamped: false,
        }))
    };
    match j {
        0 => return exact(0.0),
        1 => return exact(f64::NEG_INFINITY),
        _ if slope == 0.0 => return exact(f64::NEG_INFINITY),
        _ => {}
    }

    let n = j as usize;
    let ln_terms: Vec<f64> = (0..=n)
        .map(|i| factorials.ln_binomial(n, i) + slope * (i * i.saturating_sub(1)) as f64)
        .collect();
    let ln_largest = ln_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    // Adjacent (even, odd) pairs first: term_{2m} - term_{2m+1}.
    let mut positives = Vec::with_capacity(n / 2 + 1);
    let mut negatives = Vec::with_capacity(n / 2 + 1);
    for pair in ln_terms.chunks(2) {
        let combined = match pair {
            [even, odd] => SignedLog::difference(*even, *odd),
            [even] => SignedLog::positive(*even),
            _ => unreachable!(),
        };
        if combined.is_zero() {
            continue;
        }
        if combined.negative {
            negatives.push(combined.ln_abs);
        } else {
            positives.push(combined.ln_abs);
        }
    }
    let result = SignedLog::difference(log_sum_exp(positives), log_sum_exp(negatives));
    if result.is_zero() {
        return FloatOutcome::Deferred { ln_largest };
    }

    // Each term carries relative error ~ (|exponent| + j) ulp from the rounded
    // exponent, the binomial table and the pairwise combination.
    let ln_error = log_sum_exp(
        ln_terms
            .iter()
            .map(|&t| t + (t.abs() + n as f64 + 8.0).ln()),
    ) + (2.0 * f64::EPSILON).ln();
    if trusted_bits(result.ln_abs, ln_error) < REQUIRED_BITS {
        return FloatOutcome::Deferred { ln_largest };
    }
    FloatOutcome::Done(classify(result, ln_largest, j, Evaluation::Float))
}

/// Bits of agreement in `ln B`, measured against `max(1, |ln B|)`.
fn trusted_bits(ln_abs: f64, ln_error: f64) -> f64 {
    let relative = (ln_error - ln_abs).exp();
    if !relative.is_finite() {
        return f64::NEG_INFINITY;
    }
    -(relative / ln_abs.abs().max(1.0)).log2()
}

/// Applies the sign rule: a negative sum within [`CLAMP_TOLERANCE`] of the
/// largest term is roundoff and becomes zero; anything larger is reported.
fn classify(
    result: SignedLog,
    ln_largest: f64,
    j: u32,
    evaluation: Evaluation,
) -> Result<MomentValue, AccountantError> {
    if !result.negative || result.is_zero() {
        return Ok(MomentValue {
            ln_value: result.ln_abs,
            evaluation,
            clamped: false,
        });
    }
    if result.ln_abs <= ln_largest + CLAMP_TOLERANCE.ln() {
        Ok(MomentValue {
            ln_value: f64::NEG_INFINITY,
            evaluation,
            clamped: true,
        })
    } else {
        Err(AccountantError::NegativeMoment {
            order: j,
            ln_abs: result.ln_abs,
        })
    }
}

fn extended_moments(
    slope: f64,
    requests: &[(u32, f64)],
) -> Vec<(u32, Result<MomentValue, AccountantError>)> {
    let jmax = requests.iter().map(|(j, _)| *j).max().unwrap_or(0) as usize;
    let mut out = Vec::with_capacity(requests.len());

    if slope * (jmax * jmax) as f64 > MAX_EXTENDED_LN_TERM {
        for &(j, _) in requests {
            out.push((
                j,
                Err(AccountantError::PrecisionFailure {
                    order: j,
                    detail: format!(
                        "terms near exp({:.3e}) exceed the extended-precision exponent range",
                        slope * (jmax * jmax) as f64
                    ),
                }),
            ));
        }
        return out;
    }

    let mut consts = match Consts::new() {
        Ok(c) => c,
        Err(e) => {
            for &(j, _) in requests {
                out.push((
                    j,
                    Err(AccountantError::PrecisionFailure {
                        order: j,
                        detail: format!("extended-precision setup failed: {e:?}"),
                    }),
                ));
            }
            return out;
        }
    };

    let mut pending: Vec<(u32, f64)> = requests.to_vec();
    let mut precision = INITIAL_PRECISION_BITS;
    loop {
        let table = difference_table(slope, jmax_of(&pending), precision, &mut consts);
        let mut next_precision = precision * 2;
        let mut still_pending = Vec::new();
        for &(j, ln_largest) in &pending {
            let b = &table[j as usize];
            let bits = extended_trusted_bits(b, slope, j, precision);
            let needed = REQUIRED_BITS + EXTENDED_MARGIN_BITS;
            if bits >= needed {
                let result = SignedLog {
                    ln_abs: ln_abs_big(b),
                    negative: b.is_negative(),
                };
                out.push((
                    j,
                    classify(result, ln_largest, j, Evaluation::Extended { bits: precision }),
                ));
            } else {
                if bits.is_finite() {
                    let want = precision as f64 + (needed - bits) + 32.0;
                    next_precision = next_precision.max(round_to_word(want));
                }
                still_pending.push((j, ln_largest));
            }
        }
        if still_pending.is_empty() {
            break;
        }
        if precision >= MAX_PRECISION_BITS {
            for (j, _) in still_pending {
                out.push((
                    j,
                    Err(AccountantError::PrecisionFailure {
                        order: j,
                        detail: format!(
                            "fewer than {REQUIRED_BITS} significant bits at {precision}-bit precision"
                        ),
                    }),
                ));
            }
            break;
        }
        precision = next_precision.min(MAX_PRECISION_BITS);
        pending = still_pending;
    }
    out
}

fn jmax_of(pending: &[(u32, f64)]) -> usize {
    pending.iter().map(|(j, _)| *j).max().unwrap_or(0) as usize
}

fn round_to_word(bits: f64) -> usize {
    let bits = bits.ceil().max(64.0) as usize;
    bits.div_ceil(64) * 64
}

/// `B(0..=jmax)` via repeated differencing of `t_i = q^{i(i-1)/2}`, `q = e^{2 slope}`.
fn difference_table(slope: f64, jmax: usize, precision: usize, consts: &mut Consts) -> Vec<BigFloat> {
    let rm = RoundingMode::ToEven;
    let one = BigFloat::from_f64(1.0, precision);
    let q = BigFloat::from_f64(2.0 * slope, precision).exp(precision, rm, consts);

    let mut row = Vec::with_capacity(jmax + 1);
    row.push(one.clone());
    let mut q_power = one.clone();
    let mut current = one;
    for i in 1..=jmax {
        if i >= 2 {
            q_power = q_power.mul(&q, precision, rm);
        }
        current = current.mul(&q_power, precision, rm);
        row.push(current.clone());
    }

    let mut moments = Vec::with_capacity(jmax + 1);
    moments.push(row[0].clone());
    for k in 1..=jmax {
        for i in 0..=(jmax - k) {
            row[i] = row[i].sub(&row[i + 1], precision, rm);
        }
        moments.push(row[0].clone());
    }
    moments
}

/// Error model: every differencing level rounds at most `2^k t_j` and the
/// powers of `q` inherit `O(j^2)` ulps from the rounded base.
fn extended_trusted_bits(b: &BigFloat, slope: f64, j: u32, precision: usize) -> f64 {
    if b.is_zero() {
        return f64::NEG_INFINITY;
    }
    let jf = j as f64;
    let ln_top = slope * jf * (jf - 1.0);
    let log2_error = -(precision as f64)
        + jf
        + ln_top / std::f64::consts::LN_2
        + 2.0 * (jf + 1.0).log2()
        + 3.0;
    let ln_abs = ln_abs_big(b);
    trusted_bits(ln_abs, log2_error * std::f64::consts::LN_2)
}

/// Natural log of `|x|` read straight from the binary mantissa and exponent.
pub(crate) fn ln_abs_big(x: &BigFloat) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    match x.as_raw_parts() {
        Some((words, _, _, exponent, _)) => {
            let hi = *words.last().unwrap_or(&0) as f64;
            let lo = if words.len() >= 2 {
                words[words.len() - 2] as f64
            } else {
                0.0
            };
            let mantissa = (hi + lo / 18446744073709551616.0) / 18446744073709551616.0;
            mantissa.ln() + exponent as f64 * std::f64::consts::LN_2
        }
        None => f64::NAN,
    }
}
