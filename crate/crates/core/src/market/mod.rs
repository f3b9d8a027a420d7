//! Orders, outcomes, market instances and the payout algebra.

mod io;
mod permutation;

pub use io::{load_market, MarketFormat, OrderBookDocument, OrderDocument};
pub use permutation::PermutationOutcome;

use crate::linalg::doubly_stochastic_residual;
use crate::{Error, Matrix, Result};
use serde::{Deserialize, Serialize};

/// Uniform starting order placed on every candidate-position pair when the
/// order book does not specify one.
pub const DEFAULT_THETA: f64 = 1e-4;

/// One trader's bid on a set of candidate-position pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct BidOrder {
    id: String,
    bid_matrix: Matrix,
    limit_price: f64,
    limit_quantity: f64,
}

impl BidOrder {
    /// Builds an order from the list of `(candidate, position)` pairs it bids on.
    pub fn from_pairs(
        id: impl Into<String>,
        n: usize,
        pairs: &[(usize, usize)],
        limit_price: f64,
        limit_quantity: f64,
    ) -> Result<Self> {
        let id = id.into();
        let mut bid_matrix = Matrix::zeros(n, n);
        for &(cand, pos) in pairs {
            if cand >= n || pos >= n {
                return Err(Error::IndexOutOfRange(format!(
                    "order `{id}` pair ({cand}, {pos}) with n = {n}"
                )));
            }
            bid_matrix[(cand, pos)] = 1.0;
        }
        Self::new(id, bid_matrix, limit_price, limit_quantity)
    }

    pub fn new(
        id: impl Into<String>,
        bid_matrix: Matrix,
        limit_price: f64,
        limit_quantity: f64,
    ) -> Result<Self> {
        let id = id.into();
        let invalid = |reason: &str| Error::InvalidOrder {
            id: id.clone(),
            reason: reason.to_string(),
        };
        if !bid_matrix.is_square() {
            return Err(invalid("bid matrix is not square"));
        }
        if bid_matrix.iter().any(|&a| a != 0.0 && a != 1.0) {
            return Err(invalid("bid matrix entries must be 0 or 1"));
        }
        if bid_matrix.iter().all(|&a| a == 0.0) {
            return Err(invalid("bid matrix has no nonzero entry"));
        }
        if !(limit_price.is_finite() && limit_price > 0.0) {
            return Err(invalid("limit price must be positive"));
        }
        if !(limit_quantity.is_finite() && limit_quantity > 0.0) {
            return Err(invalid("limit quantity must be positive"));
        }
        Ok(Self {
            id,
            bid_matrix,
            limit_price,
            limit_quantity,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn bid_matrix(&self) -> &Matrix {
        &self.bid_matrix
    }

    pub fn limit_price(&self) -> f64 {
        self.limit_price
    }

    pub fn limit_quantity(&self) -> f64 {
        self.limit_quantity
    }

    pub fn n(&self) -> usize {
        self.bid_matrix.nrows()
    }

    /// The `(candidate, position)` pairs this order bids on, row-major.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if self.bid_matrix[(i, j)] != 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Same order with a different limit price.
    pub fn with_limit_price(&self, limit_price: f64) -> Result<Self> {
        Self::new(
            self.id.clone(),
            self.bid_matrix.clone(),
            limit_price,
            self.limit_quantity,
        )
    }
}

/// Units paid per accepted unit of `order` when `outcome` is realized:
/// the number of bid pairs the outcome hits.
pub fn payout(order: &BidOrder, outcome: &PermutationOutcome) -> Result<f64> {
    check_dims(order, outcome)?;
    Ok(outcome
        .mapping()
        .iter()
        .enumerate()
        .map(|(cand, &pos)| order.bid_matrix[(cand, pos)])
        .sum())
}

/// Fixed-reward variant: one unit if any bid pair is hit, else nothing.
pub fn fixed_reward_payout(order: &BidOrder, outcome: &PermutationOutcome) -> Result<f64> {
    Ok(if payout(order, outcome)? > 0.0 { 1.0 } else { 0.0 })
}

fn check_dims(order: &BidOrder, outcome: &PermutationOutcome) -> Result<()> {
    if order.n() != outcome.n() {
        return Err(Error::DimensionMismatch {
            expected: order.n(),
            found: outcome.n(),
        });
    }
    Ok(())
}

/// Solver tolerances and the θ→0 homotopy schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Primal/dual equality residual accepted at convergence.
    pub feasibility: f64,
    /// Complementarity (duality) gap accepted at convergence.
    pub gap: f64,
    /// Threshold below which certification residuals pass.
    pub certification: f64,
    pub max_iterations: usize,
    /// Strictly decreasing θ multipliers used by the homotopy.
    pub homotopy_schedule: Vec<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            feasibility: 1e-8,
            gap: 1e-7,
            certification: 1e-6,
            max_iterations: 300,
            homotopy_schedule: (1..=8).map(|k| 10f64.powi(-k)).collect(),
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("feasibility", self.feasibility),
            ("gap", self.gap),
            ("certification", self.certification),
        ] {
            if !(v.is_finite() && v >= f64::EPSILON) {
                return Err(Error::InvalidArgument(format!(
                    "tolerance `{name}` must be at least machine epsilon, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// An order book over `n` candidates together with the organizer's
/// starting orders and solver configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketInstance {
    n: usize,
    orders: Vec<BidOrder>,
    theta: Matrix,
    pub tolerances: Tolerances,
}

impl MarketInstance {
    /// `theta = None` seeds every pair with [`DEFAULT_THETA`].
    pub fn new(n: usize, orders: Vec<BidOrder>, theta: Option<Matrix>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("n must be at least 2, got {n}")));
        }
        for order in &orders {
            if order.n() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: order.n(),
                });
            }
        }
        let theta = match theta {
            Some(t) => {
                if t.shape() != (n, n) {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: t.nrows(),
                    });
                }
                if t.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
                    return Err(Error::InvalidTheta(
                        "every starting order must be positive".into(),
                    ));
                }
                t
            }
            None => Matrix::from_element(n, n, DEFAULT_THETA),
        };
        Ok(Self {
            n,
            orders,
            theta,
            tolerances: Tolerances::default(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn orders(&self) -> &[BidOrder] {
        &self.orders
    }

    pub fn theta(&self) -> &Matrix {
        &self.theta
    }

    pub fn with_tolerances(mut self, tolerances: Tolerances) -> Self {
        self.tolerances = tolerances;
        self
    }

    /// Copy with every starting order multiplied by `scale`.
    pub fn with_theta_scale(&self, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidTheta(format!("theta scale must be positive, got {scale}")));
        }
        let mut out = self.clone();
        out.theta *= scale;
        Ok(out)
    }

    /// Copy with a replaced order list (same `n`, θ and tolerances).
    pub fn with_orders(&self, orders: Vec<BidOrder>) -> Result<Self> {
        let mut out = Self::new(self.n, orders, Some(self.theta.clone()))?;
        out.tolerances = self.tolerances.clone();
        Ok(out)
    }

    /// `Σ_k x_k A_k`.
    pub fn weighted_bids(&self, x: &[f64]) -> Matrix {
        let mut w = Matrix::zeros(self.n, self.n);
        for (order, &xk) in self.orders.iter().zip(x) {
            w += order.bid_matrix() * xk;
        }
        w
    }
}

/// Marginal price matrix: entry `(i, j)` prices candidate `i` finishing in
/// position `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<f64>>", try_from = "Vec<Vec<f64>>")]
pub struct PriceMatrix {
    q: Matrix,
}

impl From<PriceMatrix> for Vec<Vec<f64>> {
    fn from(p: PriceMatrix) -> Self {
        matrix_to_rows(&p.q)
    }
}

/// Deserialization does not re-validate the sums, so that a damaged report
/// can still be loaded and certified.
impl TryFrom<Vec<Vec<f64>>> for PriceMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let q = matrix_from_rows(&rows)?;
        if !q.is_square() {
            return Err(Error::DimensionMismatch {
                expected: q.nrows(),
                found: q.ncols(),
            });
        }
        Ok(Self { q })
    }
}

impl PriceMatrix {
    /// Validates squareness, nonnegativity and row/column sums within `tol`.
    pub fn new(q: Matrix, tol: f64) -> Result<Self> {
        if !q.is_square() {
            return Err(Error::DimensionMismatch {
                expected: q.nrows(),
                found: q.ncols(),
            });
        }
        if q.iter().any(|v| !v.is_finite() || *v < -tol) {
            return Err(Error::InvalidArgument(
                "price matrix entries must be finite and nonnegative".into(),
            ));
        }
        let res = doubly_stochastic_residual(&q);
        if res > tol {
            return Err(Error::NotDoublyStochastic(res));
        }
        Ok(Self { q })
    }

    /// Wraps a matrix without checking row and column sums.
    pub fn new_unchecked(q: Matrix) -> Self {
        Self { q }
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            q: Matrix::from_element(n, n, 1.0 / n as f64),
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.q
    }

    pub fn into_matrix(self) -> Matrix {
        self.q
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn residual(&self) -> f64 {
        doubly_stochastic_residual(&self.q)
    }

    pub fn min_entry(&self) -> f64 {
        self.q.min()
    }

    /// Price of a bid: `Q • A`.
    pub fn price_of(&self, order: &BidOrder) -> f64 {
        crate::linalg::frobenius(&self.q, order.bid_matrix())
    }

    /// Row-major nested representation used in JSON artifacts.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.q)
    }
}

pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let n = rows.len();
    let cols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Malformed("ragged matrix".into()));
    }
    Ok(Matrix::from_fn(n, cols, |i, j| rows[i][j]))
}

/// `#[serde(with = "rows")]` adapter storing a matrix as nested rows.
pub mod rows {
    use super::{matrix_from_rows, matrix_to_rows};
    use crate::Matrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix, ser: S) -> Result<S::Ok, S::Error> {
        matrix_to_rows(m).serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Matrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(de)?;
        matrix_from_rows(&rows).map_err(serde::de::Error::custom)
    }
}
