use super::{ClearingMethod, ClearingResult};
use crate::linalg::DoubleDouble;
use crate::market::PriceMatrix;
use crate::{Error, Matrix, MarketInstance, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SIGMA: f64 = 0.1;
const STEP_FRACTION: f64 = 0.995;
/// Complementarity of the quantity bounds at convergence, relative to the
/// book's scale and, separately, to the smallest starting order: orders
/// resting exactly at their price carry quantities proportional to θ.
const BOX_COMPLEMENTARITY: f64 = 1e-14;
const BOX_COMPLEMENTARITY_THETA: f64 = 1e-9;
const CENTRALITY: f64 = 1e-8;
/// Equality residuals relative to the slack they define.
const RELATIVE_PRIMAL: f64 = 1e-9;
const DUAL: f64 = 1e-12;

/// Interior starting point for the barrier solver. Slacks are derived as
/// `v_i + w_j − Σ x_k A_k[i,j]`, which must be positive.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierStart {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub q: Matrix,
    pub z_lower: Vec<f64>,
    pub y: Vec<f64>,
}

impl BarrierStart {
    /// Half-filled orders, uniform prices, slacks of at least one.
    pub fn central(instance: &MarketInstance) -> Self {
        let n = instance.n();
        let x: Vec<f64> = instance.orders().iter().map(|o| 0.5 * o.limit_quantity()).collect();
        let bids = instance.weighted_bids(&x);
        let v = (0..n).map(|i| bids.row(i).max() + 1.0).collect();
        let m = x.len();
        Self {
            x,
            v,
            w: vec![0.0; n],
            q: Matrix::from_element(n, n, 1.0 / n as f64),
            z_lower: vec![1.0; m],
            y: vec![1.0; m],
        }
    }

    /// A random strictly interior point, reproducible from `seed`.
    pub fn random(instance: &MarketInstance, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = instance.n();
        let x: Vec<f64> = instance
            .orders()
            .iter()
            .map(|o| o.limit_quantity() * rng.random_range(0.05..0.95))
            .collect();
        let bids = instance.weighted_bids(&x);
        let v = (0..n)
            .map(|i| bids.row(i).max() + rng.random_range(0.2..3.0))
            .collect();
        let w = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let q = Matrix::from_fn(n, n, |_, _| rng.random_range(0.2..2.0) / n as f64);
        let m = x.len();
        let z_lower = (0..m).map(|_| rng.random_range(0.1..3.0)).collect();
        let y = (0..m).map(|_| rng.random_range(0.1..3.0)).collect();
        Self {
            x,
            v,
            w,
            q,
            z_lower,
            y,
        }
    }
}

/// Solves the starting-order barrier program from the central start.
pub fn clear_barrier(instance: &MarketInstance) -> Result<ClearingResult> {
    clear_barrier_from(instance, &BarrierStart::central(instance))
}

/// Primal-dual interior point method on
/// `max π·x − Σv − Σw + Σ θ_ij log s_ij  s.t.  v_i + w_j − s_ij = Σ_k x_k A_k[i,j],  0 ≤ x ≤ q`.
///
/// The multipliers of the equality rows form the price matrix `Q`, with
/// `Q_ij s_ij = θ_ij` at the optimum. The target for that product starts
/// inflated and is walked down to `θ` while the bound complementarity is
/// driven to zero.
pub fn clear_barrier_from(instance: &MarketInstance, start: &BarrierStart) -> Result<ClearingResult> {
    let tol = &instance.tolerances;
    tol.validate()?;
    let theta = instance.theta();
    if theta.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::InvalidTheta("barrier clearing needs positive starting orders".into()));
    }
    let n = instance.n();
    let orders = instance.orders();
    let m = orders.len();
    if start.x.len() != m
        || start.v.len() != n
        || start.w.len() != n
        || start.q.shape() != (n, n)
        || start.z_lower.len() != m
        || start.y.len() != m
    {
        return Err(Error::InvalidArgument("starting point does not match the instance".into()));
    }
    let pairs: Vec<Vec<(usize, usize)>> = orders.iter().map(|o| o.pairs()).collect();
    let pi: Vec<f64> = orders.iter().map(|o| o.limit_price()).collect();
    let cap: Vec<f64> = orders.iter().map(|o| o.limit_quantity()).collect();
    let scale = 1.0
        + cap.iter().cloned().fold(0.0, f64::max) * pi.iter().cloned().fold(n as f64, f64::max);
    let box_target = (BOX_COMPLEMENTARITY * scale).min(BOX_COMPLEMENTARITY_THETA * theta.min());

    // x, v, w are carried in double-double: on pairs where the slack is of
    // the order of θ, s = v + w − Σ x A is a tiny difference of O(1) terms
    let mut x: Vec<DoubleDouble> = start.x.iter().map(|&v| DoubleDouble::new(v)).collect();
    let mut v: Vec<DoubleDouble> = start.v.iter().map(|&v| DoubleDouble::new(v)).collect();
    let mut w: Vec<DoubleDouble> = start.w.iter().map(|&v| DoubleDouble::new(v)).collect();
    let mut t: Vec<f64> = (0..m).map(|k| cap[k] - start.x[k]).collect();
    let mut q = start.q.clone();
    let mut zl = start.z_lower.clone();
    let mut y = start.y.clone();
    let bids0 = exact_bids(&pairs, &x, n);
    let mut s = Matrix::from_fn(n, n, |i, j| v[i].add(w[j]).sub(bids0[i * n + j]).value());
    let interior = s.iter().all(|v| *v > 0.0)
        && q.iter().all(|v| *v > 0.0)
        && (0..m).all(|k| x[k].hi > 0.0 && t[k] > 0.0 && zl[k] > 0.0 && y[k] > 0.0);
    if !interior {
        return Err(Error::InvalidArgument("starting point is not strictly interior".into()));
    }

    let nsys = m + 2 * n - 1;
    let mut iterations = 0;
    loop {
        let bids = exact_bids(&pairs, &x, n);
        let r_p = Matrix::from_fn(n, n, |i, j| {
            v[i].add(w[j]).sub(bids[i * n + j]).add_f64(-s[(i, j)]).value()
        });
        let r_t: Vec<f64> = (0..m)
            .map(|k| DoubleDouble::new(cap[k]).sub(x[k]).add_f64(-t[k]).value())
            .collect();
        let xf: Vec<f64> = x.iter().map(|d| d.value()).collect();
        let aq: Vec<f64> = pairs
            .iter()
            .map(|p| p.iter().map(|&(i, j)| q[(i, j)]).sum())
            .collect();
        let r_x: Vec<f64> = (0..m).map(|k| pi[k] - aq[k] + zl[k] - y[k]).collect();
        let r_v: Vec<f64> = (0..n).map(|i| q.row(i).sum() - 1.0).collect();
        let r_w: Vec<f64> = (0..n).map(|j| q.column(j).sum() - 1.0).collect();
        let ratio = q.component_mul(&s).component_div(theta);
        let centrality = ratio.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
        let box_comp = (0..m)
            .map(|k| (xf[k] * zl[k]).max(t[k] * y[k]))
            .fold(0.0, f64::max);
        let primal_res = r_p
            .iter()
            .zip(s.iter())
            .map(|(r, sv)| r.abs() / sv)
            .chain(r_t.iter().zip(&t).map(|(r, tv)| r.abs() / tv))
            .fold(0.0, f64::max);
        let dual_res = inf_norm(&r_x) / (1.0 + pi.iter().cloned().fold(0.0, f64::max));
        let ds_res = inf_norm(&r_v).max(inf_norm(&r_w));
        log::trace!(
            "barrier it {iterations}: primal {primal_res:.2e} dual {dual_res:.2e} ds {ds_res:.2e} centrality {centrality:.2e} box {box_comp:.2e}"
        );
        if primal_res <= RELATIVE_PRIMAL
            && dual_res <= DUAL
            && ds_res <= DUAL
            && centrality <= CENTRALITY
            && box_comp <= box_target
        {
            break;
        }
        if iterations >= tol.max_iterations {
            return Err(Error::NonConvergence(format!(
                "barrier solver stopped after {iterations} iterations (primal {primal_res:.2e}, dual {dual_res:.2e}, centrality {centrality:.2e}, complementarity {box_comp:.2e})"
            )));
        }
        iterations += 1;

        let kappa = (SIGMA * ratio.mean()).max(1.0);
        let mu = if m > 0 {
            let mean = (0..m).map(|k| xf[k] * zl[k] + t[k] * y[k]).sum::<f64>() / (2 * m) as f64;
            (SIGMA * mean).max(0.1 * box_target)
        } else {
            0.0
        };
        let r_s = Matrix::from_fn(n, n, |i, j| q[(i, j)] * s[(i, j)] - kappa * theta[(i, j)]);
        let d = q.component_div(&s);
        let h = r_s.component_div(&s) + d.component_mul(&r_p);
        let r_l: Vec<f64> = (0..m).map(|k| xf[k] * zl[k] - mu).collect();
        let r_u: Vec<f64> = (0..m).map(|k| t[k] * y[k] - mu).collect();

        // reduced system in (Δx, Δv, Δw without its last entry)
        let mut kmat = DMatrix::<f64>::zeros(nsys, nsys);
        let mut rhs = DVector::<f64>::zeros(nsys);
        let vi = |i: usize| m + i;
        let wj = |j: usize| if j + 1 < n { Some(m + n + j) } else { None };
        for k in 0..m {
            kmat[(k, k)] += zl[k] / xf[k] + y[k] / t[k];
            for l in k..m {
                let g: f64 = pairs[k]
                    .iter()
                    .filter(|&&(i, j)| orders[l].bid_matrix()[(i, j)] != 0.0)
                    .map(|&(i, j)| d[(i, j)])
                    .sum();
                kmat[(k, l)] += g;
                if l != k {
                    kmat[(l, k)] += g;
                }
            }
            for &(i, j) in &pairs[k] {
                kmat[(k, vi(i))] -= d[(i, j)];
                kmat[(vi(i), k)] -= d[(i, j)];
                if let Some(c) = wj(j) {
                    kmat[(k, c)] -= d[(i, j)];
                    kmat[(c, k)] -= d[(i, j)];
                }
            }
            let ah: f64 = pairs[k].iter().map(|&(i, j)| h[(i, j)]).sum();
            rhs[k] = r_x[k] + ah - r_l[k] / xf[k] + (r_u[k] + y[k] * r_t[k]) / t[k];
        }
        for i in 0..n {
            kmat[(vi(i), vi(i))] += d.row(i).sum();
            for j in 0..n {
                if let Some(c) = wj(j) {
                    kmat[(vi(i), c)] += d[(i, j)];
                    kmat[(c, vi(i))] += d[(i, j)];
                }
            }
            rhs[vi(i)] = r_v[i] - h.row(i).sum();
        }
        for j in 0..n - 1 {
            let c = m + n + j;
            kmat[(c, c)] += d.column(j).sum();
            rhs[c] = r_w[j] - h.column(j).sum();
        }
        let sol = solve_kkt(kmat, &rhs)?;
        let dx: Vec<f64> = sol.rows(0, m).iter().cloned().collect();
        let dv: Vec<f64> = sol.rows(m, n).iter().cloned().collect();
        let mut dw: Vec<f64> = sol.rows(m + n, n - 1).iter().cloned().collect();
        dw.push(0.0);

        let mut dbids = Matrix::zeros(n, n);
        for k in 0..m {
            for &(i, j) in &pairs[k] {
                dbids[(i, j)] += dx[k];
            }
        }
        let ds = Matrix::from_fn(n, n, |i, j| dv[i] + dw[j] - dbids[(i, j)] + r_p[(i, j)]);
        let dq = Matrix::from_fn(n, n, |i, j| {
            (-r_s[(i, j)] - q[(i, j)] * ds[(i, j)]) / s[(i, j)]
        });
        let dt: Vec<f64> = (0..m).map(|k| r_t[k] - dx[k]).collect();
        let dzl: Vec<f64> = (0..m).map(|k| (-r_l[k] - zl[k] * dx[k]) / xf[k]).collect();
        let dy: Vec<f64> = (0..m).map(|k| (-r_u[k] - y[k] * dt[k]) / t[k]).collect();

        let mut alpha_max = f64::INFINITY;
        let mut limit = |value: f64, step: f64| {
            if step < 0.0 {
                alpha_max = alpha_max.min(-value / step);
            }
        };
        for (sv, dsv) in s.iter().zip(ds.iter()) {
            limit(*sv, *dsv);
        }
        for (qv, dqv) in q.iter().zip(dq.iter()) {
            limit(*qv, *dqv);
        }
        for k in 0..m {
            limit(xf[k], dx[k]);
            limit(t[k], dt[k]);
            limit(zl[k], dzl[k]);
            limit(y[k], dy[k]);
        }
        let alpha = (STEP_FRACTION * alpha_max).min(1.0);
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::NonConvergence(format!(
                "barrier solver stalled at iteration {iterations}"
            )));
        }
        for k in 0..m {
            x[k] = x[k].add_f64(alpha * dx[k]);
            t[k] += alpha * dt[k];
            zl[k] += alpha * dzl[k];
            y[k] += alpha * dy[k];
        }
        for i in 0..n {
            v[i] = v[i].add_f64(alpha * dv[i]);
            w[i] = w[i].add_f64(alpha * dw[i]);
        }
        s += &ds * alpha;
        q += &dq * alpha;
    }

    let r = v
        .iter()
        .chain(&w)
        .fold(DoubleDouble::default(), |acc, d| acc.add(*d))
        .value();
    let x: Vec<f64> = (0..m).map(|k| x[k].value().clamp(0.0, cap[k])).collect();
    let v: Vec<f64> = v.iter().map(|d| d.value()).collect();
    let w: Vec<f64> = w.iter().map(|d| d.value()).collect();
    let barrier: f64 = theta.iter().zip(s.iter()).map(|(t, sv)| t * sv.ln()).sum();
    let objective_primal = pi.iter().zip(&x).map(|(p, xk)| p * xk).sum::<f64>() - r + barrier;
    let dual_constant: f64 = theta
        .iter()
        .zip(q.iter())
        .map(|(t, qv)| t * (t.ln() - 1.0 - qv.ln()))
        .sum();
    let objective_dual = cap.iter().zip(&y).map(|(c, yk)| c * yk).sum::<f64>() + dual_constant;
    log::debug!("barrier clearing converged in {iterations} iterations");
    Ok(ClearingResult {
        method: ClearingMethod::Barrier,
        order_ids: orders.iter().map(|o| o.id().to_string()).collect(),
        x,
        v,
        w,
        s,
        r,
        q: PriceMatrix::new_unchecked(q),
        y,
        objective_primal,
        objective_dual,
        iterations,
    })
}

/// `Σ_k x_k A_k` in double-double, row-major.
fn exact_bids(pairs: &[Vec<(usize, usize)>], x: &[DoubleDouble], n: usize) -> Vec<DoubleDouble> {
    let mut out = vec![DoubleDouble::default(); n * n];
    for (p, xk) in pairs.iter().zip(x) {
        for &(i, j) in p {
            out[i * n + j] = out[i * n + j].add(*xk);
        }
    }
    out
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

fn solve_kkt(kmat: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    // symmetric diagonal scaling keeps Cholesky usable when D spans many
    // orders of magnitude
    let dim = kmat.nrows();
    let scale: Vec<f64> = (0..dim)
        .map(|i| {
            let d = kmat[(i, i)];
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let scaled = DMatrix::from_fn(dim, dim, |i, j| kmat[(i, j)] * scale[i] * scale[j]);
    let srhs = DVector::from_fn(dim, |i, _| rhs[i] * scale[i]);
    let sol = crate::linalg::solve_spd(scaled, &srhs)
        .ok_or_else(|| Error::NonConvergence("singular barrier Newton system".into()))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonConvergence("non-finite barrier Newton step".into()));
    }
    Ok(DVector::from_fn(dim, |i, _| sol[i] * scale[i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::BidOrder;

    fn three_orders() -> MarketInstance {
        let orders = vec![
            BidOrder::from_pairs("a", 3, &[(0, 0)], 0.6, 2.0).unwrap(),
            BidOrder::from_pairs("b", 3, &[(1, 1)], 0.3, 1.0).unwrap(),
            BidOrder::from_pairs("c", 3, &[(0, 1), (2, 2)], 0.9, 1.5).unwrap(),
        ];
        MarketInstance::new(3, orders, None).unwrap()
    }

    #[test]
    fn empty_book_gives_uniform_prices() {
        let inst = MarketInstance::new(4, vec![], None).unwrap();
        let res = clear_barrier(&inst).unwrap();
        let uniform = PriceMatrix::uniform(4);
        assert!((res.q.matrix() - uniform.matrix()).amax() < 1e-9);
    }

    #[test]
    fn qs_equals_theta() {
        let inst = three_orders();
        let res = clear_barrier(&inst).unwrap();
        let qs: f64 = res.q.matrix().component_mul(&res.s).sum();
        assert!((qs - inst.theta().sum()).abs() < 1e-10);
        assert!(res.q.min_entry() > 0.0);
        assert!(res.q.residual() < 1e-9);
        let gap = (res.objective_primal - res.objective_dual).abs();
        assert!(gap < 1e-7, "gap {gap}");
    }

    #[test]
    fn random_starts_agree() {
        let inst = three_orders();
        let base = clear_barrier(&inst).unwrap();
        for seed in 0..4 {
            let res = clear_barrier_from(&inst, &BarrierStart::random(&inst, seed)).unwrap();
            assert!((res.q.matrix() - base.q.matrix()).amax() < 1e-8);
        }
    }

    #[test]
    fn rejects_non_interior_start() {
        let inst = three_orders();
        let mut start = BarrierStart::central(&inst);
        start.x[0] = 0.0;
        assert!(clear_barrier_from(&inst, &start).is_err());
    }
}
