//! Relaxed max-entropy program solved as a sequence of convex feasibility
//! problems: for a level `t`, find `Y` with `Q•Y − 1 ≥ t`,
//! `f(Y) ≤ (1 + ε) Q` and `−n log n / q_min ≤ Y ≤ 0`, then bisect on `t`.

use super::moments::{estimated_gradient, estimated_log_moments, moment_map};
use super::preprocess::{preprocess_qmin, DEFAULT_QMIN_FLOOR};
use super::{masked_cells, FitDiagnostics, FitMethod, MaxEntModel, NormalizationMode};
use crate::combinatorics::{ExactPermanent, PermanentEstimator};
use crate::market::PriceMatrix;
use crate::parallel::Parallelism;
use crate::{Error, Matrix, Result};
use nalgebra::DVector;

/// One member of the family of bodies `K_ε` indexed by the objective level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexBodySpec {
    pub t: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Separation {
    InBody,
    /// `C` with `C•(X − Y) ≤ 0` for every `X` in the exact body.
    Hyperplane(Matrix),
}

fn delta_for(epsilon: f64) -> f64 {
    (epsilon / 12.0).min(1.0)
}

fn gamma_for(delta: f64, q_min: f64, n: usize) -> f64 {
    delta * q_min / (2.0 * (n as f64).powi(4))
}

/// Lower end of the parameter box.
fn box_floor(n: usize, q_min: f64) -> f64 {
    let nf = n as f64;
    -nf * nf.ln() / q_min
}

/// Membership test for `K_ε(t)`. Cells where `target` is zero are treated
/// as removed (`Y = −inf`) whatever `y` holds there. Side constraints are
/// checked exactly; the marginal constraint uses `(1 ± δ)` permanent
/// estimates and accepts when `f̂ ≤ (1 + 3δ) Q`.
pub fn separation_oracle(
    y: &Matrix,
    body: &ConvexBodySpec,
    target: &Matrix,
    q_min: f64,
    estimator: &dyn PermanentEstimator,
) -> Result<Separation> {
    let n = target.nrows();
    if !target.is_square() || y.shape() != target.shape() {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: y.nrows(),
        });
    }
    if !(body.epsilon > 0.0) || !(q_min > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "oracle needs epsilon > 0 and q_min > 0, got {} and {q_min}",
            body.epsilon
        )));
    }
    let lower = box_floor(n, q_min);
    let free = |i: usize, j: usize| target[(i, j)] > 0.0;
    let unit = |i: usize, j: usize, s: f64| {
        let mut c = Matrix::zeros(n, n);
        c[(i, j)] = s;
        c
    };
    let mut objective = 0.0;
    for i in 0..n {
        for j in 0..n {
            if !free(i, j) {
                continue;
            }
            let v = y[(i, j)];
            if v.is_nan() || v > 0.0 {
                return Ok(Separation::Hyperplane(unit(i, j, 1.0)));
            }
            if v < lower {
                return Ok(Separation::Hyperplane(unit(i, j, -1.0)));
            }
            objective += target[(i, j)] * v;
        }
    }
    if objective - 1.0 < body.t {
        return Ok(Separation::Hyperplane(-target.clone()));
    }

    let delta = delta_for(body.epsilon);
    let y_eff = Matrix::from_fn(n, n, |i, j| if free(i, j) { y[(i, j)] } else { f64::NEG_INFINITY });
    let log_f = estimated_log_moments(&y_eff, estimator, delta)?;
    let bound = (1.0 + 3.0 * delta).ln();
    let mut worst: Option<(usize, usize, f64)> = None;
    for i in 0..n {
        for j in 0..n {
            if !free(i, j) {
                continue;
            }
            let excess = log_f[(i, j)] - target[(i, j)].ln() - bound;
            if excess > 0.0 && worst.is_none_or(|w| excess > w.2) {
                worst = Some((i, j, excess));
            }
        }
    }
    match worst {
        None => Ok(Separation::InBody),
        Some((i, j, _)) => {
            let gamma = gamma_for(delta, q_min, n);
            Ok(Separation::Hyperplane(estimated_gradient(&y_eff, i, j, estimator, gamma)?))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipsoidOptions {
    pub qmin_floor: f64,
    pub max_bisections: usize,
    /// Bisection stops once the bracket on `t` is this narrow.
    pub width: f64,
    /// Feasibility runs give up once the ellipsoid volume falls below a ball
    /// of radius `radius_factor · δ · q_min / n²`.
    pub radius_factor: f64,
}

impl Default for EllipsoidOptions {
    fn default() -> Self {
        Self {
            qmin_floor: DEFAULT_QMIN_FLOOR,
            max_bisections: 40,
            width: 1e-6,
            radius_factor: 0.25,
        }
    }
}

/// Approximate max-entropy model in the plain `e^{Y•M_σ}` form whose
/// marginals lie between `(1 − ε) Q` and `Q`.
pub fn fit_ellipsoid(q: &PriceMatrix, epsilon: f64) -> Result<MaxEntModel> {
    let exact = ExactPermanent {
        mode: Parallelism::Sequential,
    };
    fit_ellipsoid_with(q, epsilon, &EllipsoidOptions::default(), &exact)
}

pub fn fit_ellipsoid_with(
    q: &PriceMatrix,
    epsilon: f64,
    opts: &EllipsoidOptions,
    estimator: &dyn PermanentEstimator,
) -> Result<MaxEntModel> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be in (0, 1), got {epsilon}")));
    }
    let n = q.n();
    if n < 2 {
        return Err(Error::InvalidArgument("ellipsoid fit needs n >= 2".into()));
    }
    let pre = preprocess_qmin(q, opts.qmin_floor)?;
    let target = pre.q.clone();
    let q_min = pre.q_min;
    let cells: Vec<(usize, usize)> = (0..n * n)
        .map(|c| (c / n, c % n))
        .filter(|&(i, j)| !pre.is_masked(i, j))
        .collect();
    let d = cells.len();
    let delta = delta_for(epsilon);
    let gamma = gamma_for(delta, q_min, n);
    let lower = box_floor(n, q_min);
    let radius = (n * n) as f64 * lower.abs();
    let r_min = opts.radius_factor * delta * q_min / (n * n) as f64;
    let df = d as f64;
    let budget = (2.0 * (df + 1.0) * df * (radius / r_min).ln()).ceil() as usize;

    let mut iterations = 0usize;
    let mut oracle_calls = 0usize;
    let to_matrix = |z: &DVector<f64>| {
        let mut y = pre.masked_fill(0.0);
        for (k, &(i, j)) in cells.iter().enumerate() {
            y[(i, j)] = z[k];
        }
        y
    };

    let mut find_point = |t: f64| -> Result<Option<Matrix>> {
        let body = ConvexBodySpec { t, epsilon };
        let mut z = DVector::from_element(d, lower / 2.0);
        let mut p = Matrix::identity(d, d) * (radius * radius);
        for step in 0..budget {
            let y = to_matrix(&z);
            oracle_calls += 1;
            iterations += 1;
            let cut = match separation_oracle(&y, &body, &target, q_min, estimator)? {
                Separation::InBody => return Ok(Some(y)),
                Separation::Hyperplane(c) => c,
            };
            let a = DVector::from_iterator(d, cells.iter().map(|&(i, j)| cut[(i, j)]));
            let pa = &p * &a;
            let apa = a.dot(&pa);
            if !(apa > 0.0 && apa.is_finite()) {
                return Ok(None);
            }
            let b = pa / apa.sqrt();
            z -= &b / (df + 1.0);
            p.ger(-2.0 / (df + 1.0), &b, &b, 1.0);
            p *= df * df / (df * df - 1.0);
            if step % 32 == 31 {
                p = (&p + p.transpose()) * 0.5;
            }
        }
        Ok(None)
    };

    let nf = n as f64;
    let (mut lo, mut hi) = (-nf * nf.ln() - 1.0, 0.0);
    let mut best: Option<(Matrix, f64)> = None;
    for _ in 0..opts.max_bisections {
        if hi - lo <= opts.width {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match find_point(mid)? {
            Some(y) => {
                best = Some((y, mid));
                lo = mid;
            }
            None => hi = mid,
        }
    }
    if best.is_none() {
        best = find_point(lo)?.map(|y| (y, lo));
    }
    let Some((y_bar, t)) = best else {
        return Err(Error::Infeasible(
            "bisection on the objective level found no feasible body".into(),
        ));
    };

    let shift = (1.0 + epsilon).ln() / nf;
    let y_hat = y_bar.map(|v| v - shift);
    let f = moment_map(&y_hat, NormalizationMode::Plain)?;
    let marginal_residual = (&f - q.matrix()).abs().max();
    Ok(MaxEntModel {
        n,
        masked: masked_cells(&y_hat),
        y: y_hat,
        normalization: NormalizationMode::Plain,
        target: q.clone(),
        q_min,
        fit: FitDiagnostics {
            method: FitMethod::Ellipsoid,
            epsilon: Some(epsilon),
            delta: Some(delta),
            gamma: Some(gamma),
            t: Some(t),
            iterations,
            oracle_calls,
            marginal_residual,
            gradient_norm: None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::factorial;
    use crate::maxent::fit_exact;

    fn exact() -> ExactPermanent {
        ExactPermanent {
            mode: Parallelism::Sequential,
        }
    }

    #[test]
    fn deep_interior_point_is_in_body() {
        let n = 4;
        let q = Matrix::from_element(n, n, 0.25);
        let y = Matrix::from_element(n, n, -(n as f64) * (n as f64).ln());
        // Q•Y − 1 = −n² log n − 1 ≈ −23.2
        let body = ConvexBodySpec { t: -30.0, epsilon: 0.1 };
        let s = separation_oracle(&y, &body, &q, 0.25, &exact()).unwrap();
        assert_eq!(s, Separation::InBody);
        let f = moment_map(&y, NormalizationMode::Plain).unwrap();
        assert!(f.iter().all(|v| *v <= 0.25 * 1.1));
    }

    #[test]
    fn box_violation_gives_coordinate_cut() {
        let q = Matrix::from_element(3, 3, 1.0 / 3.0);
        let mut y = Matrix::from_element(3, 3, -1.0);
        y[(2, 1)] = 0.3;
        let body = ConvexBodySpec { t: -5.0, epsilon: 0.1 };
        match separation_oracle(&y, &body, &q, 1.0 / 3.0, &exact()).unwrap() {
            Separation::Hyperplane(c) => {
                assert_eq!(c[(2, 1)], 1.0);
                assert_eq!(c.abs().sum(), 1.0);
            }
            s => panic!("{s:?}"),
        }
    }

    #[test]
    fn uniform_target_at_zero_is_cut_by_a_gradient() {
        let n = 4;
        let q = Matrix::from_element(n, n, 0.25);
        let body = ConvexBodySpec { t: -10.0, epsilon: 0.1 };
        let Separation::Hyperplane(c) =
            separation_oracle(&Matrix::zeros(n, n), &body, &q, 0.25, &exact()).unwrap()
        else {
            panic!("expected a cut");
        };
        // f_ij(0) = (n-1)! and ‖∇f_ij‖₁ = n f_ij
        assert!((c.sum() - n as f64 * factorial(n - 1)).abs() < 1e-9);
    }

    #[test]
    fn uniform_three_by_three() {
        let q = PriceMatrix::uniform(3);
        let m = fit_ellipsoid(&q, 0.1).unwrap();
        let f = m.marginals().unwrap();
        assert!(f.iter().all(|v| *v <= 1.0 / 3.0 + 1e-12 && *v >= 0.9 / 3.0), "{f}");
        let exact = fit_exact(&q).unwrap().entropy().unwrap();
        assert!(m.entropy().unwrap() >= 0.9 * exact - 1e-6);
        assert!(m.fit.t.unwrap() >= -exact - 1.0);
    }
}
