//! Brute-force reference solvers that materialize all `n!` outcomes. They
//! are slow by design and serve as ground truth for the compact solvers.

mod clearing;
mod entropy;

pub use clearing::{oracle_clear_fixed, oracle_clear_proportional, OracleClearing};
pub use entropy::{
    decompose_feasibility, oracle_maxent, oracle_relaxed_maxent, OracleDistribution,
};

use crate::combinatorics::{enumerate_permutations, factorial};
use crate::market::PermutationOutcome;
use crate::{Error, Matrix, Result};
use serde::{Deserialize, Serialize};

/// Limits on the outcome spaces the oracles will enumerate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleBudget {
    pub max_n: usize,
    pub max_outcomes: usize,
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self {
            max_n: 7,
            max_outcomes: 5040,
        }
    }
}

impl OracleBudget {
    pub fn new(max_n: usize, max_outcomes: usize) -> Result<Self> {
        if factorial(max_n) > max_outcomes as f64 {
            return Err(Error::InvalidArgument(format!(
                "{max_n}! exceeds the outcome limit {max_outcomes}"
            )));
        }
        Ok(Self {
            max_n,
            max_outcomes,
        })
    }

    /// The budget tightened to `n <= cap`.
    pub fn capped(self, cap: usize) -> Self {
        Self {
            max_n: self.max_n.min(cap),
            ..self
        }
    }

    pub fn check(&self, n: usize) -> Result<()> {
        if n > self.max_n || factorial(n) > self.max_outcomes as f64 {
            return Err(Error::BudgetExceeded(format!(
                "oracle limited to n <= {} ({} outcomes), got n = {n}",
                self.max_n, self.max_outcomes
            )));
        }
        Ok(())
    }

    /// All outcomes for `n`, if within budget.
    pub fn outcomes(&self, n: usize) -> Result<Vec<PermutationOutcome>> {
        self.check(n)?;
        Ok(enumerate_permutations(n)?.collect())
    }
}

/// `perm(B)` straight from the definition.
pub fn permanent_by_enumeration(b: &Matrix, budget: &OracleBudget) -> Result<f64> {
    if !b.is_square() {
        return Err(Error::DimensionMismatch {
            expected: b.nrows(),
            found: b.ncols(),
        });
    }
    Ok(budget
        .outcomes(b.nrows())?
        .iter()
        .map(|p| p.mapping().iter().enumerate().map(|(i, &j)| b[(i, j)]).product::<f64>())
        .sum())
}

/// `Σ_σ e^{Y•M_σ} M_σ` by enumeration.
pub fn moments_by_enumeration(y: &Matrix, budget: &OracleBudget) -> Result<Matrix> {
    let n = y.nrows();
    let mut f = Matrix::zeros(n, n);
    for p in budget.outcomes(n)? {
        let w = p.score(y).exp();
        for (i, &j) in p.mapping().iter().enumerate() {
            f[(i, j)] += w;
        }
    }
    Ok(f)
}
