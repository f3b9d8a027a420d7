mod common;

use common::*;
use permclear_core::clearing::{
    certify, clear_barrier, clear_lp, worst_case_payout, OrderBranch,
};
use permclear_core::market::{load_market, MarketFormat};
use permclear_core::reforacle::{oracle_clear_proportional, OracleBudget};
use permclear_core::{BidOrder, MarketInstance, Matrix};
use proptest::prelude::*;
use std::fs::File;

fn demo_book() -> MarketInstance {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/demo_book.json");
    load_market(File::open(path).unwrap(), MarketFormat::Json).unwrap()
}

#[test]
fn barrier_matches_an_independent_primal_solver() {
    let orders = vec![
        BidOrder::from_pairs("a", 3, &[(0, 0)], 0.55, 2.0).unwrap(),
        BidOrder::from_pairs("b", 3, &[(1, 0)], 0.35, 1.0).unwrap(),
        BidOrder::from_pairs("c", 3, &[(2, 2)], 0.6, 1.5).unwrap(),
    ];
    let inst = MarketInstance::new(3, orders, Some(Matrix::from_element(3, 3, 0.05))).unwrap();
    let ours = clear_barrier(&inst).unwrap();
    let theirs = primal_barrier_prices(&inst);
    let diff = (ours.q.matrix() - &theirs).amax();
    assert!(diff <= 1e-6, "max difference {diff:.3e}\n{}\n{theirs}", ours.q.matrix());
}

#[test]
fn random_books_match_the_primal_solver() {
    for seed in 0..5 {
        let inst = random_instance(seed);
        let ours = clear_barrier(&inst).unwrap();
        let diff = (ours.q.matrix() - primal_barrier_prices(&inst)).amax();
        assert!(diff <= 1e-6, "seed {seed}: {diff:.3e}");
    }
}

#[test]
fn demo_book_agrees_with_the_outcome_space_oracle() {
    let inst = demo_book();
    let oracle = oracle_clear_proportional(&inst, &OracleBudget::default()).unwrap();
    let lp = clear_lp(&inst).unwrap();
    assert!((lp.objective_primal - oracle.objective).abs() <= 1e-6);
    let barrier = clear_barrier(&inst).unwrap();
    assert!(certify(&inst, &barrier).unwrap().passed);
}

/// The demo book plus one cheap, tiny order that must be filled outright.
#[test]
fn all_three_branches_are_exercised() {
    let mut orders = demo_book().orders().to_vec();
    orders.push(BidOrder::from_pairs("d-top-two", 4, &[(3, 0), (3, 1)], 0.95, 0.01).unwrap());
    let inst = MarketInstance::new(4, orders, None).unwrap();
    let result = clear_barrier(&inst).unwrap();
    let report = certify(&inst, &result).unwrap();
    assert!(report.passed, "{report:#?}");
    assert!(report.consistency_violations.is_empty());
    let branch = |id: &str| report.orders.iter().find(|o| o.id == id).unwrap().branch;
    assert_eq!(branch("d-top-two"), OrderBranch::Filled);
    assert_eq!(branch("c-third"), OrderBranch::Rejected);
    assert_eq!(branch("a-wins"), OrderBranch::Interior);
}

/// Repricing every order at exactly `Q•A` leaves the prices unchanged and
/// every order resting at its price.
#[test]
fn orders_priced_exactly_at_q_keep_the_solution() {
    for seed in [3, 11, 42] {
        let inst = random_instance(seed);
        let first = clear_barrier(&inst).unwrap();
        let repriced: Vec<BidOrder> = inst
            .orders()
            .iter()
            .map(|o| o.with_limit_price(first.q.price_of(o)).unwrap())
            .collect();
        let inst2 = inst.with_orders(repriced).unwrap();
        let second = clear_barrier(&inst2).unwrap();
        let diff = (first.q.matrix() - second.q.matrix()).amax();
        assert!(diff <= 1e-6, "seed {seed}: prices moved by {diff:.3e}");
        let report = certify(&inst2, &second).unwrap();
        assert!(report.passed, "seed {seed}: {report:#?}");
        for (o, x) in inst2.orders().iter().zip(&second.x) {
            assert!((second.q.price_of(o) - o.limit_price()).abs() <= 1e-6);
            assert!(*x >= -1e-9 && *x <= o.limit_quantity() + 1e-9);
        }
    }
}

fn best_case_payout(order: &BidOrder) -> f64 {
    let n = order.n();
    let complement = order.bid_matrix().map(|a| 1.0 - a);
    n as f64 - worst_case_payout(&complement).unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn barrier_strong_duality(seed in any::<u64>()) {
        let inst = random_instance(seed);
        let r = clear_barrier(&inst).unwrap();
        let scale = 1.0 + r.objective_primal.abs();
        prop_assert!((r.objective_primal - r.objective_dual).abs() <= inst.tolerances.gap * scale * 10.0,
            "primal {} dual {}", r.objective_primal, r.objective_dual);
    }

    #[test]
    fn lp_payout_bound_is_attained(seed in any::<u64>()) {
        let inst = random_instance(seed);
        let r = clear_lp(&inst).unwrap();
        let bids = inst.weighted_bids(&r.x);
        let (worst, _) = worst_case_payout(&bids).unwrap();
        prop_assert!((worst - r.r).abs() <= 1e-7 * (1.0 + r.r), "{worst} vs {}", r.r);
    }

    #[test]
    fn orders_below_their_cheapest_outcome_are_rejected(seed in any::<u64>()) {
        let inst = random_instance(seed);
        // Drop every price far below the floor of one order.
        let k = (seed % inst.orders().len() as u64) as usize;
        let mut orders = inst.orders().to_vec();
        let floor = best_case_payout(&orders[k]);
        orders[k] = orders[k].with_limit_price((floor - 0.2).max(0.01)).unwrap();
        if orders[k].limit_price() >= floor {
            return Ok(());
        }
        let inst = inst.with_orders(orders).unwrap();
        let lp = clear_lp(&inst).unwrap();
        prop_assert!(lp.x[k].abs() <= 1e-9, "lp accepted {}", lp.x[k]);
        let barrier = clear_barrier(&inst).unwrap();
        prop_assert!(barrier.x[k] <= 1e-6 * inst.orders()[k].limit_quantity());
    }

    #[test]
    fn barrier_solves_are_deterministic(seed in any::<u64>()) {
        let inst = random_instance(seed);
        let a = serde_json::to_string(&clear_barrier(&inst).unwrap()).unwrap();
        let b = serde_json::to_string(&clear_barrier(&inst).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }
}
