//! Exact permanents by Ryser's inclusion–exclusion formula with Gray-code
//! subset iteration, and the `(1 ± δ)` estimator interface built on top.

use super::perfect_matching_on_support;
use crate::linalg::{sinkhorn_scale, CompensatedSum};
use crate::parallel::{map_indexed, Parallelism};
use crate::{Error, Matrix, Result};

/// Largest order accepted by the exact permanent.
pub const PERMANENT_CAP: usize = 20;

/// Subsets handled per independently seeded Gray-code run. Fixed, so the
/// reduction order does not depend on the thread count.
const CHUNK_BITS: u32 = 12;

/// `perm(B) = Σ_σ Π_i B[i, σ(i)]`, computed sequentially.
pub fn permanent(b: &Matrix) -> Result<f64> {
    permanent_with(b, Parallelism::Sequential)
}

pub fn permanent_with(b: &Matrix, mode: Parallelism) -> Result<f64> {
    if !b.is_square() {
        return Err(Error::DimensionMismatch {
            expected: b.nrows(),
            found: b.ncols(),
        });
    }
    let n = b.nrows();
    if n > PERMANENT_CAP {
        return Err(Error::BudgetExceeded(format!(
            "exact permanent limited to n <= {PERMANENT_CAP}, got {n}"
        )));
    }
    Ok(ryser(b, mode))
}

fn ryser(b: &Matrix, mode: Parallelism) -> f64 {
    let n = b.nrows();
    if n == 0 {
        return 1.0;
    }
    let total: u64 = 1 << n;
    let chunk: u64 = 1 << CHUNK_BITS.min(n as u32);
    let chunks = (total / chunk) as usize;
    let partials = map_indexed(chunks, mode, |c| {
        let start = c as u64 * chunk;
        ryser_range(b, start, start + chunk)
    });
    let sum: CompensatedSum = partials.into_iter().collect();
    if n % 2 == 1 {
        -sum.value()
    } else {
        sum.value()
    }
}

/// Signed Ryser terms for subset indices `start..end` in Gray-code order.
fn ryser_range(b: &Matrix, start: u64, end: u64) -> f64 {
    let n = b.nrows();
    let gray = |i: u64| i ^ (i >> 1);
    let mut row_sums = vec![0.0; n];
    let g0 = gray(start);
    for j in 0..n {
        if g0 >> j & 1 == 1 {
            for (i, s) in row_sums.iter_mut().enumerate() {
                *s += b[(i, j)];
            }
        }
    }
    let term = |sums: &[f64], g: u64| {
        let prod: f64 = sums.iter().product();
        if g.count_ones() % 2 == 1 {
            -prod
        } else {
            prod
        }
    };
    let mut acc = CompensatedSum::new();
    acc.add(term(&row_sums, g0));
    for i in start + 1..end {
        let bit = i.trailing_zeros() as usize;
        let g = gray(i);
        let sign = if g >> bit & 1 == 1 { 1.0 } else { -1.0 };
        for (r, s) in row_sums.iter_mut().enumerate() {
            *s += sign * b[(r, bit)];
        }
        acc.add(term(&row_sums, g));
    }
    acc.value()
}

/// `log perm(B)` for a nonnegative matrix; `-inf` when the support admits no
/// perfect matching. Rows and columns are rescaled towards doubly stochastic
/// before Ryser's formula so its alternating sum does not cancel away the
/// result when entries span many orders of magnitude.
pub fn log_permanent(b: &Matrix, mode: Parallelism) -> Result<f64> {
    if b.iter().any(|v| *v < 0.0 || v.is_nan()) {
        return Err(Error::InvalidArgument(
            "log_permanent needs a nonnegative matrix".into(),
        ));
    }
    let logs = b.map(|v| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY });
    log_permanent_exp(&logs, mode)
}

/// `log perm(e^Y)` with `e^{-inf} = 0`.
pub fn log_permanent_exp(y: &Matrix, mode: Parallelism) -> Result<f64> {
    if !y.is_square() {
        return Err(Error::DimensionMismatch {
            expected: y.nrows(),
            found: y.ncols(),
        });
    }
    let n = y.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    if n > PERMANENT_CAP {
        return Err(Error::BudgetExceeded(format!(
            "exact permanent limited to n <= {PERMANENT_CAP}, got {n}"
        )));
    }
    if y.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::InvalidArgument("log-matrix entries must be < +inf".into()));
    }
    if perfect_matching_on_support(n, |i, j| y[(i, j)] > f64::NEG_INFINITY).is_none() {
        return Ok(f64::NEG_INFINITY);
    }
    // factor out row maxima, then balance
    let mut offset = 0.0;
    let mut shifted = y.clone();
    for i in 0..n {
        let m = y.row(i).max();
        offset += m;
        for j in 0..n {
            shifted[(i, j)] -= m;
        }
    }
    let col_max: Vec<f64> = (0..n).map(|j| shifted.column(j).max()).collect();
    for (j, &m) in col_max.iter().enumerate() {
        offset += m;
        for i in 0..n {
            shifted[(i, j)] -= m;
        }
    }
    let base = shifted.map(f64::exp);
    let (scaled, log_r, log_c) = sinkhorn_scale(&base, 30, 1e-3);
    let p = ryser(&scaled, mode);
    if p <= 0.0 {
        return Err(Error::Estimator(format!(
            "nonpositive permanent {p:e} on a matrix with a perfect matching"
        )));
    }
    let undo: f64 = log_r.iter().sum::<f64>() + log_c.iter().sum::<f64>();
    Ok(offset + p.ln() - undo)
}

/// Bracket `[e^lower, e^upper]` around a permanent, stored in log space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermanentInterval {
    pub log_lower: f64,
    pub log_upper: f64,
}

impl PermanentInterval {
    pub fn exact(log_value: f64) -> Self {
        Self {
            log_lower: log_value,
            log_upper: log_value,
        }
    }

    /// Log of the midpoint; a `(1 ± δ)` point estimate whenever the
    /// interval honours the estimator contract.
    pub fn log_point(&self) -> f64 {
        if self.log_lower == f64::NEG_INFINITY {
            return self.log_upper - std::f64::consts::LN_2;
        }
        let d = self.log_upper - self.log_lower;
        self.log_lower + ((1.0 + d.exp()) / 2.0).ln()
    }
}

/// Source of `(1 ± δ)` permanent estimates: the returned interval must
/// contain the true permanent and have width at most `2δ · perm`.
pub trait PermanentEstimator: Sync {
    /// Bracket for `perm(e^Y)` (entries of `Y` may be `-inf`).
    fn estimate_exp(&self, y: &Matrix, delta: f64) -> Result<PermanentInterval>;

    fn estimate(&self, b: &Matrix, delta: f64) -> Result<PermanentInterval> {
        if b.iter().any(|v| *v < 0.0 || v.is_nan()) {
            return Err(Error::InvalidArgument("estimator needs a nonnegative matrix".into()));
        }
        self.estimate_exp(&b.map(|v| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY }), delta)
    }
}

/// Default backend: the exact permanent as a zero-width interval.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactPermanent {
    pub mode: Parallelism,
}

impl PermanentEstimator for ExactPermanent {
    fn estimate_exp(&self, y: &Matrix, delta: f64) -> Result<PermanentInterval> {
        if !(delta > 0.0) {
            return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
        }
        Ok(PermanentInterval::exact(log_permanent_exp(y, self.mode)?))
    }
}

/// Checks an interval against the estimator contract for a known
/// `log perm`: containment plus relative width at most `2δ`.
pub fn check_estimate(true_log: f64, interval: &PermanentInterval, delta: f64) -> bool {
    let slack = 1e-12;
    if true_log == f64::NEG_INFINITY {
        return interval.log_upper == f64::NEG_INFINITY;
    }
    if interval.log_lower > true_log + slack || interval.log_upper < true_log - slack {
        return false;
    }
    let width = (interval.log_upper - true_log).exp() - (interval.log_lower - true_log).exp();
    width <= 2.0 * delta + slack
}
