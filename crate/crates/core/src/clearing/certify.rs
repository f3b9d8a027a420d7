use super::{ClearingMethod, ClearingResult};
use crate::linalg::doubly_stochastic_residual;
use crate::{Error, MarketInstance, Result};
use serde::{Deserialize, Serialize};

/// Fraction of an order's quantity below which it counts as untouched (or
/// above `1 −` which it counts as filled).
const ACTIVITY_FRACTION: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationClass {
    /// Some quantity accepted although the limit price is below `Q•A`.
    AcceptedBelowPrice,
    /// Quantity left unfilled although the limit price is above `Q•A`.
    RejectedAbovePrice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderBranch {
    Rejected,
    Interior,
    Filled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyViolation {
    pub order_id: String,
    pub class: ViolationClass,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderStatus {
    pub id: String,
    pub x: f64,
    pub limit_quantity: f64,
    pub limit_price: f64,
    /// `Q • A_k`.
    pub unit_price: f64,
    pub branch: OrderBranch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    /// `|r − Σ_k x_k (A_k•Q) − Σθ|` (no θ term for LP results).
    pub parimutuel_residual: f64,
    pub consistency_violations: Vec<ConsistencyViolation>,
    pub kkt_max_residual: f64,
    pub doubly_stochastic_residual: f64,
    pub duality_gap: f64,
    pub orders: Vec<OrderStatus>,
    pub tolerance: f64,
    pub passed: bool,
}

/// Re-derives every optimality certificate of `result` from scratch.
///
/// Fails only when the result does not belong to the instance (wrong number
/// of orders or wrong dimension).
pub fn certify(instance: &MarketInstance, result: &ClearingResult) -> Result<CertificationReport> {
    let n = instance.n();
    let orders = instance.orders();
    let m = orders.len();
    if result.x.len() != m || result.y.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: result.x.len(),
        });
    }
    if result.q.n() != n || result.s.shape() != (n, n) || result.v.len() != n || result.w.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: result.q.n(),
        });
    }
    let tol = instance.tolerances.certification;
    let q = result.q.matrix();
    let theta_total = match result.method {
        ClearingMethod::Barrier => instance.theta().sum(),
        ClearingMethod::Lp => 0.0,
    };
    let unit_prices: Vec<f64> = orders.iter().map(|o| result.q.price_of(o)).collect();
    let charged: f64 = result.x.iter().zip(&unit_prices).map(|(x, p)| x * p).sum();
    let parimutuel_residual = (result.r - charged - theta_total).abs();

    let mut statuses = Vec::with_capacity(m);
    let mut violations = Vec::new();
    for (k, order) in orders.iter().enumerate() {
        let x = result.x[k];
        let cap = order.limit_quantity();
        let price = order.limit_price();
        let unit = unit_prices[k];
        let thr = ACTIVITY_FRACTION * cap;
        let branch = if x <= thr {
            OrderBranch::Rejected
        } else if x >= cap - thr {
            OrderBranch::Filled
        } else {
            OrderBranch::Interior
        };
        if x > thr && unit - price > tol {
            violations.push(ConsistencyViolation {
                order_id: order.id().to_string(),
                class: ViolationClass::AcceptedBelowPrice,
                amount: unit - price,
            });
        }
        if x < cap - thr && price - unit > tol {
            violations.push(ConsistencyViolation {
                order_id: order.id().to_string(),
                class: ViolationClass::RejectedAbovePrice,
                amount: price - unit,
            });
        }
        statuses.push(OrderStatus {
            id: order.id().to_string(),
            x,
            limit_quantity: cap,
            limit_price: price,
            unit_price: unit,
            branch,
        });
    }

    let bids = instance.weighted_bids(&result.x);
    let mut kkt: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let s = result.s[(i, j)];
            kkt = kkt.max((result.v[i] + result.w[j] - s - bids[(i, j)]).abs());
            kkt = kkt.max((-s).max(0.0)).max((-q[(i, j)]).max(0.0));
            let target = match result.method {
                ClearingMethod::Barrier => instance.theta()[(i, j)],
                ClearingMethod::Lp => 0.0,
            };
            kkt = kkt.max((q[(i, j)] * s - target).abs());
        }
    }
    for (k, order) in orders.iter().enumerate() {
        let x = result.x[k];
        let y = result.y[k];
        let cap = order.limit_quantity();
        // multiplier of x ≥ 0 implied by stationarity
        let z = y - order.limit_price() + unit_prices[k];
        kkt = kkt
            .max((-x).max(0.0))
            .max((x - cap).max(0.0))
            .max((-y).max(0.0))
            .max((-z).max(0.0))
            .max((x * z.max(0.0)).abs())
            .max(((cap - x) * y).abs());
    }
    let doubly_stochastic_residual = doubly_stochastic_residual(q);
    let duality_gap = (result.objective_primal - result.objective_dual).abs();
    let finite = [parimutuel_residual, kkt, doubly_stochastic_residual, duality_gap]
        .iter()
        .all(|v| v.is_finite());
    let passed = finite
        && parimutuel_residual <= tol
        && violations.is_empty()
        && kkt <= tol
        && doubly_stochastic_residual <= tol
        && duality_gap <= instance.tolerances.gap;
    Ok(CertificationReport {
        parimutuel_residual,
        consistency_violations: violations,
        kkt_max_residual: kkt,
        doubly_stochastic_residual,
        duality_gap,
        orders: statuses,
        tolerance: tol,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clearing::{clear_barrier, clear_lp};
    use crate::market::PriceMatrix;
    use crate::BidOrder;

    fn book() -> MarketInstance {
        let orders = vec![
            BidOrder::from_pairs("a", 3, &[(0, 0)], 0.7, 1.0).unwrap(),
            BidOrder::from_pairs("b", 3, &[(0, 0), (1, 1)], 0.5, 1.0).unwrap(),
            BidOrder::from_pairs("c", 3, &[(2, 1)], 0.4, 2.0).unwrap(),
        ];
        MarketInstance::new(3, orders, None).unwrap()
    }

    #[test]
    fn solver_outputs_pass() {
        let inst = book();
        for res in [clear_barrier(&inst).unwrap(), clear_lp(&inst).unwrap()] {
            let rep = certify(&inst, &res).unwrap();
            assert!(rep.passed, "{rep:?}");
            assert!(rep.parimutuel_residual <= 1e-6);
        }
    }

    #[test]
    fn perturbed_prices_are_flagged() {
        let inst = book();
        let mut res = clear_barrier(&inst).unwrap();
        let mut q = res.q.matrix().clone();
        q[(0, 1)] += 0.01;
        let row_sum = q.row(0).sum();
        for j in 0..3 {
            q[(0, j)] /= row_sum;
        }
        res.q = PriceMatrix::new_unchecked(q);
        let rep = certify(&inst, &res).unwrap();
        assert!(!rep.passed);
        assert!(rep.doubly_stochastic_residual > 1e-4);
        assert!(rep.kkt_max_residual > 1e-6);
    }

    #[test]
    fn accepted_below_price_is_classified() {
        let inst = book();
        let res = clear_barrier(&inst).unwrap();
        // same fills, but order `a` now asks for less than its price
        let unit = res.q.price_of(&inst.orders()[0]);
        let mut orders = inst.orders().to_vec();
        orders[0] = orders[0].with_limit_price(unit * 0.5).unwrap();
        let mut forced = res.clone();
        forced.x[0] = 0.5 * inst.orders()[0].limit_quantity();
        let inst2 = inst.with_orders(orders).unwrap();
        let rep = certify(&inst2, &forced).unwrap();
        assert!(rep
            .consistency_violations
            .iter()
            .any(|v| v.order_id == "a" && v.class == ViolationClass::AcceptedBelowPrice));
        assert!(!rep.passed);
    }

    #[test]
    fn mismatched_result_is_an_error() {
        let inst = book();
        let res = clear_lp(&inst).unwrap();
        let other = inst.with_orders(vec![]).unwrap();
        assert!(certify(&other, &res).is_err());
    }
}
