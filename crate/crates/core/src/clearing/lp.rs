use super::{ClearingMethod, ClearingResult};
use crate::market::PriceMatrix;
use crate::simplex::{LinearProgram, Relation, VarBound};
use crate::{Error, Matrix, MarketInstance, Result};

/// Solves the compact clearing LP
/// `max π·x − Σv − Σw  s.t.  v_i + w_j ≥ Σ_k x_k A_k[i,j],  0 ≤ x ≤ q`
/// and reads the price matrix off the duals of the pair constraints.
/// Starting orders are ignored.
pub fn clear_lp(instance: &MarketInstance) -> Result<ClearingResult> {
    instance.tolerances.validate()?;
    let n = instance.n();
    let orders = instance.orders();
    let m = orders.len();
    let nvars = m + 2 * n;
    let mut c = vec![0.0; nvars];
    for (k, o) in orders.iter().enumerate() {
        c[k] = o.limit_price();
    }
    for slot in c.iter_mut().skip(m) {
        *slot = -1.0;
    }
    let mut lp = LinearProgram::maximize(c);
    lp.max_iterations = 200 * (nvars + n * n + m).max(50);
    for j in m..nvars {
        lp.set_bound(j, VarBound::Free);
    }
    for i in 0..n {
        for j in 0..n {
            let mut row = vec![0.0; nvars];
            for (k, o) in orders.iter().enumerate() {
                row[k] = o.bid_matrix()[(i, j)];
            }
            row[m + i] = -1.0;
            row[m + n + j] = -1.0;
            lp.add_row(row, Relation::Le, 0.0);
        }
    }
    for (k, o) in orders.iter().enumerate() {
        let mut row = vec![0.0; nvars];
        row[k] = 1.0;
        lp.add_row(row, Relation::Le, o.limit_quantity());
    }
    let sol = lp.solve().map_err(|e| match e {
        Error::Infeasible(msg) => Error::NonConvergence(format!("clearing LP: {msg}")),
        other => other,
    })?;

    let x: Vec<f64> = sol.x[..m]
        .iter()
        .zip(orders)
        .map(|(v, o)| v.clamp(0.0, o.limit_quantity()))
        .collect();
    let v = sol.x[m..m + n].to_vec();
    let w = sol.x[m + n..].to_vec();
    let bids = instance.weighted_bids(&x);
    let s = Matrix::from_fn(n, n, |i, j| (v[i] + w[j] - bids[(i, j)]).max(0.0));
    let q = Matrix::from_fn(n, n, |i, j| sol.duals[i * n + j].max(0.0));
    let y: Vec<f64> = sol.duals[n * n..].iter().map(|d| d.max(0.0)).collect();
    let r = v.iter().sum::<f64>() + w.iter().sum::<f64>();
    let objective_dual = orders
        .iter()
        .zip(&y)
        .map(|(o, yk)| o.limit_quantity() * yk)
        .sum();
    log::debug!("clearing LP solved in {} pivots", sol.iterations);
    Ok(ClearingResult {
        method: ClearingMethod::Lp,
        order_ids: orders.iter().map(|o| o.id().to_string()).collect(),
        x,
        v,
        w,
        s,
        r,
        q: PriceMatrix::new_unchecked(q),
        y,
        objective_primal: sol.objective,
        objective_dual,
        iterations: sol.iterations,
    })
}
