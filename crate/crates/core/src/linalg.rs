//! Small dense helpers shared by the solvers.

use crate::Matrix;
use nalgebra::{DMatrix, DVector};

/// Frobenius inner product `A • B`.
pub fn frobenius(a: &Matrix, b: &Matrix) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.carry += (self.sum - t) + value;
        } else {
            self.carry += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Largest deviation of any row or column sum from one.
pub fn doubly_stochastic_residual(q: &Matrix) -> f64 {
    let rows = (0..q.nrows()).map(|i| (q.row(i).sum() - 1.0).abs());
    let cols = (0..q.ncols()).map(|j| (q.column(j).sum() - 1.0).abs());
    rows.chain(cols).fold(0.0, f64::max)
}

/// Row and column scaling of a nonnegative matrix towards unit row and
/// column sums. Returns the scaled matrix together with the log row and
/// column factors applied (`scaled = diag(e^r) · m · diag(e^c)`). Stops
/// early once every row sum is within `tol` of one after a column sweep.
pub fn sinkhorn_scale(m: &Matrix, sweeps: usize, tol: f64) -> (Matrix, Vec<f64>, Vec<f64>) {
    let (rows, cols) = m.shape();
    let mut scaled = m.clone();
    let mut log_r = vec![0.0; rows];
    let mut log_c = vec![0.0; cols];
    for _ in 0..sweeps {
        for i in 0..rows {
            let s = scaled.row(i).sum();
            if s > 0.0 && s.is_finite() {
                scaled.row_mut(i).scale_mut(1.0 / s);
                log_r[i] -= s.ln();
            }
        }
        for j in 0..cols {
            let s = scaled.column(j).sum();
            if s > 0.0 && s.is_finite() {
                scaled.column_mut(j).scale_mut(1.0 / s);
                log_c[j] -= s.ln();
            }
        }
        if (0..rows).all(|i| (scaled.row(i).sum() - 1.0).abs() <= tol) {
            break;
        }
    }
    (scaled, log_r, log_c)
}

/// Solves a symmetric positive definite system, falling back to a
/// pseudo-inverse when the Cholesky factorization fails.
pub fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    match a.clone().cholesky() {
        Some(ch) => Some(ch.solve(b)),
        None => solve_pinv(a, b, 1e-13),
    }
}

/// Minimum-norm least squares solution via SVD, discarding singular values
/// below `rel_tol · σ_max`.
pub fn solve_pinv(a: DMatrix<f64>, b: &DVector<f64>, rel_tol: f64) -> Option<DVector<f64>> {
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return None;
    }
    let svd = a.try_svd(true, true, f64::EPSILON, 10_000)?;
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = (smax * rel_tol).max(f64::MIN_POSITIVE);
    svd.solve(b, eps).ok()
}

/// Unevaluated sum `hi + lo` carrying about twice the precision of `f64`.
/// Only addition is provided; it is used where small differences of large
/// accumulated quantities must stay accurate.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

impl DoubleDouble {
    pub fn new(v: f64) -> Self {
        Self { hi: v, lo: 0.0 }
    }

    pub fn add_f64(self, b: f64) -> Self {
        let (s, e) = two_sum(self.hi, b);
        Self::renormalize(s, e + self.lo)
    }

    pub fn add(self, o: Self) -> Self {
        let (s, e) = two_sum(self.hi, o.hi);
        Self::renormalize(s, e + self.lo + o.lo)
    }

    pub fn sub(self, o: Self) -> Self {
        self.add(Self {
            hi: -o.hi,
            lo: -o.lo,
        })
    }

    pub fn value(self) -> f64 {
        self.hi + self.lo
    }

    fn renormalize(a: f64, b: f64) -> Self {
        let hi = a + b;
        Self {
            hi,
            lo: b - (hi - a),
        }
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// `log(Σ e^{x_i})` without overflow; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let acc: CompensatedSum = values.iter().map(|v| (v - max).exp()).collect();
    max + acc.value().ln()
}
