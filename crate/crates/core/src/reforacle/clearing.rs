use super::OracleBudget;
use crate::market::{fixed_reward_payout, payout, PermutationOutcome};
use crate::simplex::{LinearProgram, Relation};
use crate::{Error, MarketInstance, Matrix, Result};

/// Solution of the exponential clearing LP over every outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleClearing {
    pub x: Vec<f64>,
    /// Worst-case payout.
    pub r: f64,
    pub objective: f64,
    pub outcomes: Vec<PermutationOutcome>,
    /// Dual price of each outcome's payout constraint.
    pub p: Vec<f64>,
}

impl OracleClearing {
    /// `Σ_σ p_σ M_σ`.
    pub fn marginal_prices(&self, n: usize) -> Matrix {
        let mut q = Matrix::zeros(n, n);
        for (o, w) in self.outcomes.iter().zip(&self.p) {
            for (i, &j) in o.mapping().iter().enumerate() {
                q[(i, j)] += w;
            }
        }
        q
    }
}

/// `max π·x − r  s.t.  r ≥ Σ_k (A_k•M_σ) x_k ∀σ,  0 ≤ x ≤ q`.
pub fn oracle_clear_proportional(
    instance: &MarketInstance,
    budget: &OracleBudget,
) -> Result<OracleClearing> {
    solve(instance, budget, |o, s| payout(o, s))
}

/// Fixed-reward variant: each accepted unit pays one if any of its pairs
/// occurs in the outcome.
pub fn oracle_clear_fixed(
    instance: &MarketInstance,
    budget: &OracleBudget,
) -> Result<OracleClearing> {
    solve(instance, &budget.capped(5), |o, s| fixed_reward_payout(o, s))
}

/// Solved through its dual, which has one column per outcome and only
/// `m + 1` rows: `min q·y  s.t.  y_k + Σ_σ p_σ a_kσ ≥ π_k,  Σ p_σ = 1`.
/// The row multipliers of that program are `x` and `r`.
fn solve(
    instance: &MarketInstance,
    budget: &OracleBudget,
    pay: impl Fn(&crate::BidOrder, &PermutationOutcome) -> Result<f64>,
) -> Result<OracleClearing> {
    let n = instance.n();
    let outcomes = budget.outcomes(n)?;
    let orders = instance.orders();
    let m = orders.len();
    let big_n = outcomes.len();
    let mut a = vec![vec![0.0; big_n]; m];
    for (k, o) in orders.iter().enumerate() {
        for (s, outcome) in outcomes.iter().enumerate() {
            a[k][s] = pay(o, outcome)?;
        }
    }
    // variables: p (N) then y (m); maximize −q·y
    let mut c = vec![0.0; big_n + m];
    for (k, o) in orders.iter().enumerate() {
        c[big_n + k] = -o.limit_quantity();
    }
    let mut lp = LinearProgram::maximize(c);
    lp.max_iterations = 100 * (big_n + 2 * m + 10);
    for (k, o) in orders.iter().enumerate() {
        let mut row = a[k].clone();
        row.resize(big_n + m, 0.0);
        row[big_n + k] = 1.0;
        lp.add_row(row, Relation::Ge, o.limit_price());
    }
    let mut total = vec![1.0; big_n];
    total.resize(big_n + m, 0.0);
    lp.add_row(total, Relation::Eq, 1.0);
    let sol = lp.solve().map_err(|e| match e {
        Error::Infeasible(msg) => Error::NonConvergence(format!("oracle LP: {msg}")),
        other => other,
    })?;

    let x: Vec<f64> = orders
        .iter()
        .enumerate()
        .map(|(k, o)| (-sol.duals[k]).clamp(0.0, o.limit_quantity()))
        .collect();
    let r = (0..big_n)
        .map(|s| (0..m).map(|k| a[k][s] * x[k]).sum::<f64>())
        .fold(0.0, f64::max);
    let p = sol.x[..big_n].iter().map(|v| v.max(0.0)).collect();
    Ok(OracleClearing {
        x,
        r,
        objective: -sol.objective,
        outcomes,
        p,
    })
}
