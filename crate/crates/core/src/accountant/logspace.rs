//! Log-domain arithmetic used by the accountant.
//!
//! Every quantity in the amplification bound can exceed the f64 range by
//! hundreds of orders of magnitude, so values are carried as natural logs and
//! only leave the log domain at the very end.

/// `ln(e^a + e^b)`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(sum(e^v))`; empty input gives `-inf`.
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max == f64::INFINITY {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `ln(e^x - 1)` for `x >= 0`; `-inf` at zero.
pub fn ln_expm1(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if x < 30.0 {
        x.exp_m1().ln()
    } else {
        x + (-(-x).exp()).ln_1p()
    }
}

/// `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// A real number stored as `sign * e^ln_abs`. Zero is `ln_abs == -inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedLog {
    pub ln_abs: f64,
    pub negative: bool,
}

impl SignedLog {
    pub const ZERO: SignedLog = SignedLog {
        ln_abs: f64::NEG_INFINITY,
        negative: false,
    };

    pub fn positive(ln_abs: f64) -> Self {
        SignedLog {
            ln_abs,
            negative: false,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.ln_abs == f64::NEG_INFINITY
    }

    /// `e^pos - e^neg` without leaving the log domain.
    pub fn difference(pos: f64, neg: f64) -> Self {
        if pos == neg {
            return SignedLog::ZERO;
        }
        if pos > neg {
            SignedLog {
                ln_abs: pos + (-(neg - pos).exp_m1()).ln(),
                negative: false,
            }
        } else {
            SignedLog {
                ln_abs: neg + (-(pos - neg).exp_m1()).ln(),
                negative: true,
            }
        }
    }

    pub fn value(&self) -> f64 {
        let v = self.ln_abs.exp();
        if self.negative {
            -v
        } else {
            v
        }
    }
}

/// Table of `ln(k!)` for `k <= max`, accumulated with Neumaier compensation.
#[derive(Debug, Clone)]
pub struct LnFactorials {
    table: Vec<f64>,
}

impl LnFactorials {
    pub fn new(max: usize) -> Self {
        let mut table = Vec::with_capacity(max + 1);
        table.push(0.0);
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for k in 1..=max {
            let x = (k as f64).ln();
            let t = sum + x;
            if sum.abs() >= x.abs() {
                comp += (sum - t) + x;
            } else {
                comp += (x - t) + sum;
            }
            sum = t;
            table.push(sum + comp);
        }
        LnFactorials { table }
    }

    pub fn max(&self) -> usize {
        self.table.len() - 1
    }

    pub fn ln_factorial(&self, k: usize) -> f64 {
        self.table[k]
    }

    /// `ln C(n, k)`; `-inf` when `k > n`.
    pub fn ln_binomial(&self, n: usize, k: usize) -> f64 {
        if k > n {
            return f64::NEG_INFINITY;
        }
        self.table[n] - self.table[k] - self.table[n - k]
    }
}
