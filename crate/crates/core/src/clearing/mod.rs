//! Organizer-side clearing: the compact LP, the starting-order barrier
//! program, certification of the resulting prices, and the θ→0 homotopy.

mod barrier;
mod certify;
mod homotopy;
mod lp;

pub use barrier::{clear_barrier, clear_barrier_from, BarrierStart};
pub use certify::{
    certify, CertificationReport, ConsistencyViolation, OrderBranch, OrderStatus, ViolationClass,
};
pub use homotopy::{limit_prices, trace_homotopy, HomotopyTrace, HOMOTOPY_NOISE_FLOOR};
pub use lp::clear_lp;

use crate::combinatorics::lexicographic_max_matching;
use crate::market::{rows, PriceMatrix};
use crate::{Error, Matrix, MarketInstance, PermutationOutcome, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClearingMethod {
    Lp,
    Barrier,
}

/// Primal-dual solution of one clearing problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClearingResult {
    pub method: ClearingMethod,
    pub order_ids: Vec<String>,
    /// Accepted quantity per order, aligned with `order_ids`.
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    #[serde(with = "rows")]
    pub s: Matrix,
    /// Worst-case payout `Σv + Σw`.
    pub r: f64,
    pub q: PriceMatrix,
    pub y: Vec<f64>,
    pub objective_primal: f64,
    pub objective_dual: f64,
    pub iterations: usize,
}

impl ClearingResult {
    /// Organizer's profit in the worst outcome, `π·x − r`.
    pub fn worst_case_profit(&self, instance: &MarketInstance) -> f64 {
        instance
            .orders()
            .iter()
            .zip(&self.x)
            .map(|(o, x)| o.limit_price() * x)
            .sum::<f64>()
            - self.r
    }
}

/// Maximum of `weights • M_σ` over permutations, with the lexicographically
/// smallest maximizing permutation.
pub fn worst_case_payout(weights: &Matrix) -> Result<(f64, PermutationOutcome)> {
    if !weights.is_square() {
        return Err(Error::DimensionMismatch {
            expected: weights.nrows(),
            found: weights.ncols(),
        });
    }
    if weights.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidArgument(
            "payout weights must be finite and nonnegative".into(),
        ));
    }
    lexicographic_max_matching(weights)
}

/// Objective of the LP dual at a given price matrix: the cheapest `y` is
/// `max(0, π_k − A_k•Q)`, so the value is `Σ q_k · max(0, π_k − A_k•Q)`.
pub fn lp_dual_objective(instance: &MarketInstance, q: &PriceMatrix) -> f64 {
    instance
        .orders()
        .iter()
        .map(|o| o.limit_quantity() * (o.limit_price() - q.price_of(o)).max(0.0))
        .sum()
}
