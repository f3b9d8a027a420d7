use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use permclear_core::clearing::trace_homotopy;
use permclear_core::combinatorics::permanent_with;
use permclear_core::maxent::{moment_map_with, NormalizationMode};
use permclear_core::parallel::Parallelism;
use permclear_core::{BidOrder, MarketInstance, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

const MODES: [(&str, Parallelism); 2] = [
    ("sequential", Parallelism::Sequential),
    ("parallel", Parallelism::Parallel),
];

fn random_matrix(n: usize, lo: f64, hi: f64, seed: u64) -> Matrix {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(n, n, |_, _| r.random_range(lo..hi))
}

fn book(n: usize, m: usize, seed: u64) -> MarketInstance {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let orders = (0..m)
        .map(|k| {
            let pairs: Vec<(usize, usize)> = (0..r.random_range(1..=n))
                .map(|_| (r.random_range(0..n), r.random_range(0..n)))
                .collect();
            let price = r.random_range(0.3..1.5) * pairs.len() as f64 / n as f64;
            BidOrder::from_pairs(format!("o{k}"), n, &pairs, price, r.random_range(0.5..3.0)).unwrap()
        })
        .collect();
    MarketInstance::new(n, orders, None).unwrap()
}

fn permanent(c: &mut Criterion) {
    let mut g = c.benchmark_group("permanent");
    for n in [12, 16] {
        let b = random_matrix(n, 0.0, 1.0, n as u64);
        for (name, mode) in MODES {
            g.bench_with_input(BenchmarkId::new(name, n), &b, |bench, b| {
                bench.iter(|| permanent_with(black_box(b), mode).unwrap())
            });
        }
    }
    g.finish();
}

fn moments(c: &mut Criterion) {
    let mut g = c.benchmark_group("moment_map");
    for n in [6, 8] {
        let y = random_matrix(n, -2.0, 0.0, 100 + n as u64);
        for (name, mode) in MODES {
            g.bench_with_input(BenchmarkId::new(name, n), &y, |bench, y| {
                bench.iter(|| moment_map_with(black_box(y), NormalizationMode::Plain, mode).unwrap())
            });
        }
    }
    g.finish();
}

fn homotopy(c: &mut Criterion) {
    let mut g = c.benchmark_group("homotopy");
    g.sample_size(10);
    let inst = book(6, 30, 7);
    let schedule = inst.tolerances.homotopy_schedule.clone();
    for (name, mode) in MODES {
        g.bench_function(name, |bench| {
            bench.iter(|| trace_homotopy(black_box(&inst), &schedule, mode).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, permanent, moments, homotopy);
criterion_main!(benches);
