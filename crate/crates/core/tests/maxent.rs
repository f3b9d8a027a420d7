mod common;

use common::*;
use permclear_core::combinatorics::{bvn_decompose, enumerate_permutations};
use permclear_core::maxent::{
    distribution, fit_ellipsoid, fit_exact, moment_gradient, moment_map, sample, MaxEntModel,
    NormalizationMode,
};
use permclear_core::reforacle::{oracle_maxent, oracle_relaxed_maxent, OracleBudget};
use permclear_core::{Matrix, PriceMatrix};
use proptest::prelude::*;
use rand::Rng;
use std::collections::HashMap;

/// Plain-mode parameters, kept clear of zero so finite differences stay valid.
fn random_y(seed: u64, n: usize, spread: f64) -> Matrix {
    let mut r = rng(seed);
    random_matrix(&mut r, n, -spread, -0.01)
}

fn cell(y: &Matrix, i: usize, j: usize) -> f64 {
    moment_map(y, NormalizationMode::Plain).unwrap()[(i, j)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gauge_shifts_leave_the_distribution_alone(seed in any::<u64>(), n in 2usize..=5) {
        let mut r = rng(seed);
        let y = random_matrix(&mut r, n, -1.5, 0.0);
        let rows: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let cols: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let shifted = Matrix::from_fn(n, n, |i, j| y[(i, j)] + rows[i] + cols[j]);
        let q = PriceMatrix::uniform(n);
        let a = MaxEntModel::from_parameters(y, NormalizationMode::ShiftedMinusOne, q.clone()).unwrap();
        let b = MaxEntModel::from_parameters(shifted, NormalizationMode::ShiftedMinusOne, q).unwrap();
        // Every weight picks up the same factor e^{Σr + Σc}.
        let factor: f64 = rows.iter().sum::<f64>() + cols.iter().sum::<f64>();
        for s in enumerate_permutations(n).unwrap() {
            prop_assert!((b.log_weight(&s) - a.log_weight(&s) - factor).abs() <= 1e-12);
        }
        let (da, db) = (distribution(&a).unwrap(), distribution(&b).unwrap());
        for ((sa, pa), (sb, pb)) in da.iter().zip(&db) {
            prop_assert_eq!(sa, sb);
            prop_assert!((pa - pb).abs() <= 1e-13);
        }
    }

    #[test]
    fn gradient_matches_central_differences(seed in any::<u64>(), n in 2usize..=5) {
        let y = random_y(seed, n, 2.0);
        let (i, j) = ((seed % n as u64) as usize, ((seed / 7) % n as u64) as usize);
        let grad = moment_gradient(&y, i, j).unwrap();
        let h = 1e-5;
        let g = cell(&y, i, j);
        for k in 0..n {
            for l in 0..n {
                let (mut up, mut down) = (y.clone(), y.clone());
                up[(k, l)] += h;
                down[(k, l)] -= h;
                let fd = (cell(&up, i, j) - cell(&down, i, j)) / (2.0 * h);
                prop_assert!((fd - grad[(k, l)]).abs() <= 1e-5 * g.max(1.0),
                    "cell ({k},{l}): fd {fd} vs {}", grad[(k, l)]);
            }
        }
    }

    #[test]
    fn gradient_norms_are_bounded_by_n_times_the_value(seed in any::<u64>(), n in 1usize..=6) {
        let y = random_y(seed, n, 2.0);
        let (i, j) = ((seed % n as u64) as usize, ((seed / 5) % n as u64) as usize);
        let grad = moment_gradient(&y, i, j).unwrap();
        let g = cell(&y, i, j);
        prop_assert!(relative(grad.abs().sum(), n as f64 * g) <= 1e-9);
        prop_assert!(grad.norm() <= n as f64 * g * (1.0 + 1e-12));
        prop_assert!(relative(g, plain_moment(&y, i, j)) <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn exact_fit_beats_any_decomposition(seed in any::<u64>(), n in 2usize..=5) {
        let q = random_target(n, seed, 1.5);
        let model = fit_exact(&q).unwrap();
        let bvn = bvn_decompose(q.matrix(), 1e-9).unwrap();
        prop_assert!(model.entropy().unwrap() >= bvn.entropy() - 1e-9);
    }

    #[test]
    fn relaxed_program_has_the_exact_optimum(seed in any::<u64>(), n in 2usize..=4) {
        let q = random_target(n, seed, 1.0);
        let budget = OracleBudget::default();
        let relaxed = oracle_relaxed_maxent(&q, &budget).unwrap();
        let equality = oracle_maxent(&q, &budget).unwrap();
        prop_assert!((relaxed.entropy() - equality.entropy()).abs() <= 1e-5);
        let exact = fit_exact(&q).unwrap().entropy().unwrap();
        prop_assert!((exact - equality.entropy()).abs() <= 1e-8);
    }
}

/// The ellipsoid's last accepted level is at least the exact dual value.
/// In plain mode the optimum is `Y* − 1/n`, where `Q•Y − 1 = −H* − 1`.
#[test]
fn ellipsoid_level_is_no_worse_than_the_optimum() {
    for (n, seed, eps) in [(3, 1, 0.1), (3, 2, 0.25), (4, 3, 0.25)] {
        let q = random_target(n, seed, 1.0);
        let h = fit_exact(&q).unwrap().entropy().unwrap();
        let model = fit_ellipsoid(&q, eps).unwrap();
        let t = model.fit.t.unwrap();
        assert!(t >= -h - 1.0 - 1e-5, "n={n} seed={seed}: t = {t}, H* = {h}");
    }
}

#[test]
fn sample_frequencies_track_the_distribution() {
    for (n, seed) in [(3, 5), (4, 6)] {
        let q = random_target(n, seed, 1.0);
        let model = fit_exact(&q).unwrap();
        let draws = 40_000;
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for s in sample(&model, draws, seed).unwrap() {
            *counts.entry(s.mapping().to_vec()).or_default() += 1;
        }
        for (s, p) in distribution(&model).unwrap() {
            let c = counts.get(s.mapping()).copied().unwrap_or(0) as f64;
            let mean = p * draws as f64;
            let sd = (draws as f64 * p * (1.0 - p)).sqrt();
            assert!((c - mean).abs() <= 3.0 * sd + 1.0, "{s:?}: {c} vs {mean:.1} ± {sd:.1}");
        }
    }
}
