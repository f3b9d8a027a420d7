//! Marginals `f(Y) = Σ_σ e^{Y•M_σ} M_σ` and their derivatives, evaluated
//! through permanents of minors of `e^Y`.

use super::NormalizationMode;
use crate::combinatorics::{log_permanent_exp, PermanentEstimator, PERMANENT_CAP};
use crate::parallel::{map_indexed, Parallelism};
use crate::{Error, Matrix, Result};

/// `Y` with the listed rows and columns deleted.
pub(crate) fn minor(y: &Matrix, rows: &[usize], cols: &[usize]) -> Matrix {
    let n = y.nrows();
    let keep_r: Vec<usize> = (0..n).filter(|i| !rows.contains(i)).collect();
    let keep_c: Vec<usize> = (0..n).filter(|j| !cols.contains(j)).collect();
    Matrix::from_fn(keep_r.len(), keep_c.len(), |a, b| y[(keep_r[a], keep_c[b])])
}

fn check_shape(y: &Matrix) -> Result<usize> {
    if !y.is_square() {
        return Err(Error::DimensionMismatch {
            expected: y.nrows(),
            found: y.ncols(),
        });
    }
    let n = y.nrows();
    if n == 0 {
        return Err(Error::InvalidArgument("empty parameter matrix".into()));
    }
    if n > PERMANENT_CAP + 1 {
        return Err(Error::BudgetExceeded(format!(
            "moment map needs permanents of order {}, cap is {PERMANENT_CAP}",
            n - 1
        )));
    }
    if y.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::InvalidArgument("parameter entries must be finite or -inf".into()));
    }
    Ok(n)
}

fn shift(mode: NormalizationMode) -> f64 {
    match mode {
        NormalizationMode::Plain => 0.0,
        NormalizationMode::ShiftedMinusOne => 1.0,
    }
}

/// Entrywise `log f(Y)` (plain mode); `-inf` where no outcome passes through
/// the cell.
pub fn log_moment_map(y: &Matrix, par: Parallelism) -> Result<Matrix> {
    let n = check_shape(y)?;
    let cells = map_indexed(n * n, par, |c| {
        let (i, j) = (c / n, c % n);
        if y[(i, j)] == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(y[(i, j)] + log_permanent_exp(&minor(y, &[i], &[j]), Parallelism::Sequential)?)
    });
    let mut out = Matrix::zeros(n, n);
    for (c, v) in cells.into_iter().enumerate() {
        out[(c / n, c % n)] = v?;
    }
    Ok(out)
}

/// `Σ_σ p_σ M_σ` for `p_σ = e^{Y•M_σ}` (plain) or `e^{Y•M_σ − 1}` (shifted).
pub fn moment_map(y: &Matrix, mode: NormalizationMode) -> Result<Matrix> {
    moment_map_with(y, mode, Parallelism::Parallel)
}

pub fn moment_map_with(y: &Matrix, mode: NormalizationMode, par: Parallelism) -> Result<Matrix> {
    check_shape(y)?;
    if mode == NormalizationMode::Plain && y.iter().any(|v| *v > 0.0) {
        return Err(Error::InvalidArgument(
            "plain-mode parameters must be <= 0".into(),
        ));
    }
    let s = shift(mode);
    Ok(log_moment_map(y, par)?.map(|v| (v - s).exp()))
}

/// `log Σ_σ p_σ`, i.e. `log perm(e^Y)` minus the mode's shift.
pub fn log_normalizer(y: &Matrix, mode: NormalizationMode) -> Result<f64> {
    check_shape(y)?;
    Ok(log_permanent_exp(y, Parallelism::Sequential)? - shift(mode))
}

/// Gradient of `f_ij` in plain mode: `f_ij` itself at `(i, j)`,
/// `e^{Y_ij + Y_kl} perm(e^{Y''})` at cells sharing no row or column with
/// `(i, j)` (`Y''` drops rows `i, k` and columns `j, l`), zero elsewhere.
pub fn moment_gradient(y: &Matrix, i: usize, j: usize) -> Result<Matrix> {
    let n = check_shape(y)?;
    if i >= n || j >= n {
        return Err(Error::IndexOutOfRange(format!("cell ({i}, {j}) in {n}x{n}")));
    }
    let log = log_gradient(y, i, j, |m| log_permanent_exp(m, Parallelism::Sequential))?;
    Ok(log.map(f64::exp))
}

/// Gradient of `f_ij` with every permanent replaced by the estimator's point
/// value at accuracy `gamma`.
pub fn estimated_gradient(
    y: &Matrix,
    i: usize,
    j: usize,
    estimator: &dyn PermanentEstimator,
    gamma: f64,
) -> Result<Matrix> {
    check_shape(y)?;
    let log = log_gradient(y, i, j, |m| Ok(estimator.estimate_exp(m, gamma)?.log_point()))?;
    Ok(log.map(f64::exp))
}

fn log_gradient(
    y: &Matrix,
    i: usize,
    j: usize,
    log_perm: impl Fn(&Matrix) -> Result<f64>,
) -> Result<Matrix> {
    let n = y.nrows();
    let mut out = Matrix::from_element(n, n, f64::NEG_INFINITY);
    if y[(i, j)] == f64::NEG_INFINITY {
        return Ok(out);
    }
    out[(i, j)] = y[(i, j)] + log_perm(&minor(y, &[i], &[j]))?;
    for k in (0..n).filter(|&k| k != i) {
        for l in (0..n).filter(|&l| l != j) {
            if y[(k, l)] == f64::NEG_INFINITY {
                continue;
            }
            out[(k, l)] = y[(i, j)] + y[(k, l)] + log_perm(&minor(y, &[i, k], &[j, l]))?;
        }
    }
    Ok(out)
}

/// Estimated `log f̂(Y)` at accuracy `delta`.
pub fn estimated_log_moments(
    y: &Matrix,
    estimator: &dyn PermanentEstimator,
    delta: f64,
) -> Result<Matrix> {
    let n = check_shape(y)?;
    let mut out = Matrix::from_element(n, n, f64::NEG_INFINITY);
    for i in 0..n {
        for j in 0..n {
            if y[(i, j)] > f64::NEG_INFINITY {
                let est = estimator.estimate_exp(&minor(y, &[i], &[j]), delta)?;
                out[(i, j)] = y[(i, j)] + est.log_point();
            }
        }
    }
    Ok(out)
}
