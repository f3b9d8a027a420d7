//! Maximum-entropy distributions over permutations with prescribed
//! marginals. The optimum has the form `p_σ ∝ e^{Y•M_σ}`; [`fit_exact`]
//! finds `Y` by Newton's method on the dual, [`fit_ellipsoid`] runs the
//! ellipsoid method against a separation oracle for the relaxed program.

mod ellipsoid;
mod exact;
mod moments;
mod preprocess;
mod sample;

pub use ellipsoid::{
    fit_ellipsoid, fit_ellipsoid_with, separation_oracle, ConvexBodySpec, EllipsoidOptions,
    Separation,
};
pub use exact::{fit_exact, fit_exact_with, ExactOptions};
pub use moments::{
    estimated_gradient, estimated_log_moments, log_moment_map, log_normalizer, moment_gradient,
    moment_map, moment_map_with,
};
pub use preprocess::{preprocess_qmin, Preprocessed, DEFAULT_QMIN_FLOOR};
pub use sample::{distribution, sample, MAX_SAMPLING_N};

use crate::market::PriceMatrix;
use crate::{Error, Matrix, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    /// `p_σ = e^{Y•M_σ − 1}`
    ShiftedMinusOne,
    /// `p_σ = e^{Y•M_σ}`
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Exact,
    Ellipsoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub method: FitMethod,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub gamma: Option<f64>,
    /// Objective level `Q•Y − 1 ≥ t` of the last feasible body.
    pub t: Option<f64>,
    pub iterations: usize,
    pub oracle_calls: usize,
    /// `max |Σ p_σ M_σ − Q|` against the unmasked target.
    pub marginal_residual: f64,
    pub gradient_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxEntModel {
    pub n: usize,
    /// Parameters; masked cells hold `-inf` (`null` in JSON).
    #[serde(with = "log_rows")]
    pub y: Matrix,
    pub normalization: NormalizationMode,
    pub target: PriceMatrix,
    pub q_min: f64,
    pub masked: Vec<[usize; 2]>,
    pub fit: FitDiagnostics,
}

impl MaxEntModel {
    /// A model with given parameters and no fit history.
    pub fn from_parameters(
        y: Matrix,
        normalization: NormalizationMode,
        target: PriceMatrix,
    ) -> Result<Self> {
        let n = y.nrows();
        if !y.is_square() || target.n() != n {
            return Err(Error::DimensionMismatch {
                expected: target.n(),
                found: y.nrows(),
            });
        }
        let masked = masked_cells(&y);
        let mut model = Self {
            n,
            q_min: target.min_entry(),
            y,
            normalization,
            target,
            masked,
            fit: FitDiagnostics {
                method: FitMethod::Exact,
                epsilon: None,
                delta: None,
                gamma: None,
                t: None,
                iterations: 0,
                oracle_calls: 0,
                marginal_residual: f64::NAN,
                gradient_norm: None,
            },
        };
        model.fit.marginal_residual = (model.marginals()? - model.target.matrix()).abs().max();
        Ok(model)
    }

    /// `Σ_σ p_σ M_σ` with the model's own (unnormalized) weights.
    pub fn marginals(&self) -> Result<Matrix> {
        moment_map(&self.y, self.normalization)
    }

    /// `log Σ_σ p_σ`.
    pub fn log_partition(&self) -> Result<f64> {
        log_normalizer(&self.y, self.normalization)
    }

    /// `log p_σ` before normalization.
    pub fn log_weight(&self, outcome: &crate::PermutationOutcome) -> f64 {
        outcome.score(&self.y) - self.shift()
    }

    fn shift(&self) -> f64 {
        match self.normalization {
            NormalizationMode::Plain => 0.0,
            NormalizationMode::ShiftedMinusOne => 1.0,
        }
    }

    /// `−Σ_σ p_σ log p_σ` for the model's weights as they stand (they sum to
    /// one only for exact fits).
    pub fn entropy(&self) -> Result<f64> {
        let f = self.marginals()?;
        let mut ylf = 0.0;
        for (yv, fv) in self.y.iter().zip(f.iter()) {
            if *fv > 0.0 {
                ylf += yv * fv;
            }
        }
        let mass = self.log_partition()?.exp();
        Ok(-(ylf - self.shift() * mass))
    }

    /// Same distribution with `Y` shifted along the gauge directions so its
    /// row and column means are balanced.
    pub fn canonicalized(&self) -> Self {
        let mut out = self.clone();
        out.y = canonicalize(&self.y);
        out
    }
}

/// Entropy of the model's weights.
pub fn entropy(model: &MaxEntModel) -> Result<f64> {
    model.entropy()
}

/// `max |Σ_σ p_σ M_σ / Z − Q|` with `Z = Σ_σ p_σ`.
pub fn ml_check(model: &MaxEntModel, q: &PriceMatrix) -> Result<f64> {
    if q.n() != model.n {
        return Err(Error::DimensionMismatch {
            expected: model.n,
            found: q.n(),
        });
    }
    let f = log_moment_map(&model.y, crate::parallel::Parallelism::Parallel)?;
    let log_z = log_normalizer(&model.y, NormalizationMode::Plain)?;
    Ok((f.map(|v| (v - log_z).exp()) - q.matrix()).abs().max())
}

pub(crate) fn masked_cells(y: &Matrix) -> Vec<[usize; 2]> {
    let mut out = Vec::new();
    for i in 0..y.nrows() {
        for j in 0..y.ncols() {
            if y[(i, j)] == f64::NEG_INFINITY {
                out.push([i, j]);
            }
        }
    }
    out
}

/// Subtracts row means, then column means (finite cells only), and adds the
/// total back uniformly so every `Y•M_σ` is unchanged.
pub fn canonicalize(y: &Matrix) -> Matrix {
    let n = y.nrows();
    if n == 0 {
        return y.clone();
    }
    let mean = |vals: Vec<f64>| {
        let finite: Vec<f64> = vals.into_iter().filter(|v| v.is_finite()).collect();
        if finite.is_empty() {
            0.0
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        }
    };
    let mut out = y.clone();
    let mut removed = 0.0;
    for i in 0..n {
        let r = mean(out.row(i).iter().copied().collect());
        removed += r;
        out.row_mut(i).add_scalar_mut(-r);
    }
    for j in 0..n {
        let c = mean(out.column(j).iter().copied().collect());
        removed += c;
        out.column_mut(j).add_scalar_mut(-c);
    }
    out.add_scalar_mut(removed / n as f64);
    out
}

/// Matrix rows with `-inf` written as `null`.
mod log_rows {
    use crate::Matrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix, ser: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<Option<f64>>> = (0..m.nrows())
            .map(|i| {
                (0..m.ncols())
                    .map(|j| Some(m[(i, j)]).filter(|v| v.is_finite()))
                    .collect()
            })
            .collect();
        rows.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Matrix, D::Error> {
        let rows = Vec::<Vec<Option<f64>>>::deserialize(de)?;
        let plain: Vec<Vec<f64>> = rows
            .into_iter()
            .map(|r| r.into_iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect())
            .collect();
        crate::market::matrix_from_rows(&plain).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::factorial;

    fn uniform_model(n: usize) -> MaxEntModel {
        let c = -factorial(n).ln() / n as f64;
        MaxEntModel::from_parameters(
            Matrix::from_element(n, n, c),
            NormalizationMode::Plain,
            PriceMatrix::uniform(n),
        )
        .unwrap()
    }

    #[test]
    fn uniform_model_has_log_factorial_entropy() {
        let m = uniform_model(4);
        assert!((m.entropy().unwrap() - factorial(4).ln()).abs() < 1e-12);
        assert!(ml_check(&m, &PriceMatrix::uniform(4)).unwrap() < 1e-14);
    }

    #[test]
    fn perturbed_parameters_are_flagged() {
        let mut m = uniform_model(4);
        m.y[(0, 0)] += 0.1;
        assert!(ml_check(&m, &PriceMatrix::uniform(4)).unwrap() > 1e-3);
    }

    #[test]
    fn canonicalization_keeps_distribution() {
        let y = Matrix::from_fn(4, 4, |i, j| -((i * 3 + j * j) as f64) / 5.0 - i as f64);
        let c = canonicalize(&y);
        for p in crate::combinatorics::enumerate_permutations(4).unwrap() {
            assert!((p.score(&y) - p.score(&c)).abs() < 1e-12);
        }
        let rm: Vec<f64> = (0..4).map(|i| c.row(i).mean()).collect();
        assert!(rm.iter().all(|r| (r - rm[0]).abs() < 1e-12));
    }

    #[test]
    fn json_round_trip_with_masked_cells() {
        let mut m = uniform_model(3);
        m.y[(0, 1)] = f64::NEG_INFINITY;
        m.masked = masked_cells(&m.y);
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("null"));
        let back: MaxEntModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back.y[(0, 1)], f64::NEG_INFINITY);
        assert_eq!(back.masked, vec![[0, 1]]);
    }
}
