use super::moments::{log_moment_map, moment_gradient};
use super::preprocess::{preprocess_qmin, DEFAULT_QMIN_FLOOR};
use super::{canonicalize, log_normalizer, masked_cells, FitDiagnostics, FitMethod, MaxEntModel,
    NormalizationMode};
use crate::combinatorics::log_permanent_exp;
use crate::linalg::solve_pinv;
use crate::market::PriceMatrix;
use crate::parallel::Parallelism;
use crate::{Error, Matrix, Result};
use nalgebra::DVector;

/// Largest `n` accepted by the exact fit.
const MAX_EXACT_N: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactOptions {
    /// Target max-entry gradient norm.
    pub gradient_tol: f64,
    /// Gradient norm accepted when the line search stalls before `gradient_tol`.
    pub acceptable_tol: f64,
    pub max_iterations: usize,
    /// Entries below this are removed before fitting.
    pub qmin_floor: f64,
    pub parallelism: Parallelism,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            gradient_tol: 1e-11,
            acceptable_tol: 1e-8,
            max_iterations: 200,
            qmin_floor: DEFAULT_QMIN_FLOOR,
            parallelism: Parallelism::Parallel,
        }
    }
}

/// Maximum-entropy model with marginals `Q` in the `e^{Y•M_σ − 1}` form.
pub fn fit_exact(q: &PriceMatrix) -> Result<MaxEntModel> {
    fit_exact_with(q, &ExactOptions::default())
}

pub fn fit_exact_with(q: &PriceMatrix, opts: &ExactOptions) -> Result<MaxEntModel> {
    let n = q.n();
    if n == 0 {
        return Err(Error::InvalidArgument("empty target".into()));
    }
    if n > MAX_EXACT_N {
        return Err(Error::BudgetExceeded(format!(
            "exact max-entropy fit limited to n <= {MAX_EXACT_N}, got {n}"
        )));
    }
    let pre = preprocess_qmin(q, opts.qmin_floor)?;
    let target = pre.rebalanced();
    let cells: Vec<(usize, usize)> = (0..n * n)
        .map(|c| (c / n, c % n))
        .filter(|&(i, j)| !pre.is_masked(i, j))
        .collect();
    let mode = NormalizationMode::ShiftedMinusOne;

    // p_σ = Π Q_{iσ(i)} / perm(Q): a proper distribution to start from
    let log_q = Matrix::from_fn(n, n, |i, j| {
        if pre.is_masked(i, j) {
            f64::NEG_INFINITY
        } else {
            target[(i, j)].ln()
        }
    });
    let lp = log_permanent_exp(&log_q, Parallelism::Sequential)?;
    let mut y = log_q.map(|v| v - (lp - 1.0) / n as f64);

    let objective = |y: &Matrix| -> Result<f64> {
        let lin: f64 = cells.iter().map(|&(i, j)| target[(i, j)] * y[(i, j)]).sum();
        Ok(lin - log_normalizer(y, mode)?.exp())
    };
    let gradient = |y: &Matrix| -> Result<(DVector<f64>, f64)> {
        let f = log_moment_map(y, opts.parallelism)?;
        let g = DVector::from_iterator(
            cells.len(),
            cells.iter().map(|&(i, j)| target[(i, j)] - (f[(i, j)] - 1.0).exp()),
        );
        let norm = g.amax();
        Ok((g, norm))
    };

    let (mut g, mut gnorm) = gradient(&y)?;
    let mut phi = objective(&y)?;
    let mut iterations = 0;
    while gnorm > opts.gradient_tol {
        if iterations >= opts.max_iterations {
            break;
        }
        iterations += 1;
        let hess = second_moments(&y, &cells)?;
        let Some(dir) = solve_pinv(hess, &g, 1e-13) else {
            return Err(Error::NonConvergence("singular second-moment matrix".into()));
        };
        let slope = g.dot(&dir);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial = y.clone();
            for (k, &(i, j)) in cells.iter().enumerate() {
                trial[(i, j)] += alpha * dir[k];
            }
            let phi_t = objective(&trial)?;
            let slack = 1e-13 * phi.abs().max(1.0);
            if phi_t.is_finite() && phi_t >= phi + 1e-4 * alpha * slope - slack {
                accepted = Some((trial, phi_t));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, phi_t)) = accepted else {
            break;
        };
        let (g_t, n_t) = gradient(&trial)?;
        if alpha < 1.0 && n_t >= gnorm && gnorm <= opts.acceptable_tol {
            // only roundoff left to chase
            break;
        }
        y = trial;
        phi = phi_t;
        g = g_t;
        gnorm = n_t;
    }
    if !(gnorm <= opts.acceptable_tol) {
        return Err(Error::NonConvergence(format!(
            "dual Newton stopped at gradient norm {gnorm:.3e} after {iterations} iterations"
        )));
    }

    let y = canonicalize(&y);
    let f = log_moment_map(&y, opts.parallelism)?.map(|v| (v - 1.0).exp());
    let marginal_residual = (&f - q.matrix()).abs().max();
    Ok(MaxEntModel {
        n,
        masked: masked_cells(&y),
        y,
        normalization: mode,
        target: q.clone(),
        q_min: pre.q_min,
        fit: FitDiagnostics {
            method: FitMethod::Exact,
            epsilon: None,
            delta: None,
            gamma: None,
            t: None,
            iterations,
            oracle_calls: 0,
            marginal_residual,
            gradient_norm: Some(gnorm),
        },
    })
}

/// `E[M_a M_b]` over the free cells, i.e. minus the Hessian of the dual.
fn second_moments(y: &Matrix, cells: &[(usize, usize)]) -> Result<Matrix> {
    let n = y.nrows();
    let index = |i: usize, j: usize| cells.iter().position(|&c| c == (i, j));
    let d = cells.len();
    let mut h = Matrix::zeros(d, d);
    for (a, &(i, j)) in cells.iter().enumerate() {
        let grad = moment_gradient(y, i, j)?;
        for k in 0..n {
            for l in 0..n {
                if let Some(b) = index(k, l) {
                    h[(a, b)] = grad[(k, l)] * (-1.0f64).exp();
                }
            }
        }
    }
    Ok((&h + h.transpose()) * 0.5)
}
