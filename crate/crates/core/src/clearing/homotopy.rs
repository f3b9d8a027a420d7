use super::clear_barrier;
use crate::market::PriceMatrix;
use crate::parallel::{map_slice, Parallelism};
use crate::{Error, MarketInstance, Result};
use serde::{Deserialize, Serialize};

/// Largest final step between successive iterates still accepted as
/// converged.
const DIVERGENCE_THRESHOLD: f64 = 1e-4;

/// Differences between iterates below this level are solver noise.
pub const HOMOTOPY_NOISE_FLOOR: f64 = 1e-10;

/// Price matrices along a decreasing θ schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomotopyTrace {
    pub scales: Vec<f64>,
    pub iterates: Vec<PriceMatrix>,
    /// Max-entry difference between consecutive iterates.
    pub differences: Vec<f64>,
}

impl HomotopyTrace {
    pub fn limit(&self) -> &PriceMatrix {
        self.iterates.last().expect("trace is never empty")
    }

    /// Whether the last `k` differences are decreasing. Once two
    /// consecutive differences are both below [`HOMOTOPY_NOISE_FLOOR`] the
    /// iterates have settled to solver precision and the pair passes.
    pub fn tail_decreasing(&self, k: usize) -> bool {
        let d = &self.differences;
        let k = k.min(d.len());
        d[d.len() - k..]
            .windows(2)
            .all(|p| p[1] < p[0] || p[0].max(p[1]) <= HOMOTOPY_NOISE_FLOOR)
    }
}

/// Solves the barrier program at `θ·c` for each `c` in `schedule`. Solves
/// are independent and run concurrently under `mode`.
pub fn trace_homotopy(
    instance: &MarketInstance,
    schedule: &[f64],
    mode: Parallelism,
) -> Result<HomotopyTrace> {
    if schedule.is_empty() {
        return Err(Error::InvalidArgument("homotopy schedule is empty".into()));
    }
    if schedule.iter().any(|c| !(c.is_finite() && *c > 0.0))
        || schedule.windows(2).any(|p| p[1] >= p[0])
    {
        return Err(Error::InvalidArgument(
            "homotopy schedule must be positive and strictly decreasing".into(),
        ));
    }
    let solves = map_slice(schedule, mode, |&c| {
        instance
            .with_theta_scale(c)
            .and_then(|inst| clear_barrier(&inst))
            .map(|r| r.q)
    });
    let iterates = solves.into_iter().collect::<Result<Vec<_>>>()?;
    let differences: Vec<f64> = iterates
        .windows(2)
        .map(|p| (p[1].matrix() - p[0].matrix()).amax())
        .collect();
    if let Some(&last) = differences.last() {
        if !(last <= DIVERGENCE_THRESHOLD) {
            let k = iterates.len();
            return Err(Error::NonConvergence(format!(
                "homotopy did not settle: last two iterates {:?} and {:?} differ by {last:.3e}",
                iterates[k - 2].to_rows(),
                iterates[k - 1].to_rows()
            )));
        }
    }
    Ok(HomotopyTrace {
        scales: schedule.to_vec(),
        iterates,
        differences,
    })
}

/// The price matrix at the smallest θ scale of `schedule`.
pub fn limit_prices(instance: &MarketInstance, schedule: &[f64]) -> Result<PriceMatrix> {
    Ok(trace_homotopy(instance, schedule, Parallelism::default())?
        .limit()
        .clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clearing::{clear_lp, lp_dual_objective};
    use crate::BidOrder;

    #[test]
    fn empty_book_limit_is_uniform() {
        let inst = MarketInstance::new(3, vec![], None).unwrap();
        let q = limit_prices(&inst, &[1e-1, 1e-3, 1e-5]).unwrap();
        assert!((q.matrix() - PriceMatrix::uniform(3).matrix()).amax() < 1e-9);
    }

    #[test]
    fn limit_matches_lp_value() {
        let orders = vec![
            BidOrder::from_pairs("a", 3, &[(0, 0), (1, 1)], 0.9, 1.0).unwrap(),
            BidOrder::from_pairs("b", 3, &[(0, 1)], 0.5, 2.0).unwrap(),
            BidOrder::from_pairs("c", 3, &[(2, 2), (1, 0)], 0.8, 1.0).unwrap(),
        ];
        let inst = MarketInstance::new(3, orders, None).unwrap();
        let schedule = inst.tolerances.homotopy_schedule.clone();
        let trace = trace_homotopy(&inst, &schedule, Parallelism::Sequential).unwrap();
        assert!(trace.tail_decreasing(3), "{:?}", trace.differences);
        let lp = clear_lp(&inst).unwrap();
        let dual = lp_dual_objective(&inst, trace.limit());
        assert!((dual - lp.objective_primal).abs() < 1e-5);
    }

    #[test]
    fn bad_schedules_rejected() {
        let inst = MarketInstance::new(2, vec![], None).unwrap();
        assert!(limit_prices(&inst, &[]).is_err());
        assert!(limit_prices(&inst, &[1e-2, 1e-1]).is_err());
        assert!(limit_prices(&inst, &[1e-2, 0.0]).is_err());
    }
}
