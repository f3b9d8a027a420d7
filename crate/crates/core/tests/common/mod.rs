//! Generators and independent reference implementations shared by the
//! integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use permclear_core::linalg::sinkhorn_scale;
use permclear_core::{BidOrder, MarketInstance, Matrix, PriceMatrix};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random book with `n ∈ {3,4,5}` and `1 ≤ m ≤ 15`. Each order bids on a
/// random set of cells and asks roughly its fair uniform price.
pub fn random_instance(seed: u64) -> MarketInstance {
    let mut r = rng(seed);
    let n = r.random_range(3..=5);
    let m = r.random_range(1..=15);
    random_book(&mut r, n, m)
}

pub fn random_book(r: &mut ChaCha8Rng, n: usize, m: usize) -> MarketInstance {
    let mut cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let orders = (0..m)
        .map(|k| {
            cells.shuffle(r);
            let cnt = r.random_range(1..=n);
            let price = r.random_range(0.3..1.5) * cnt as f64 / n as f64;
            let qty = r.random_range(0.5..3.0);
            BidOrder::from_pairs(format!("o{k}"), n, &cells[..cnt], price, qty).unwrap()
        })
        .collect();
    MarketInstance::new(n, orders, None).unwrap()
}

/// Book whose orders each bid on part of one row or one column. Each chosen
/// line is split into groups so that complementary orders can cross.
pub fn subset_book(seed: u64) -> MarketInstance {
    let mut r = rng(seed);
    let n = r.random_range(2..=4);
    let lines = r.random_range(1..=3);
    let mut orders = Vec::new();
    for _ in 0..lines {
        let line = r.random_range(0..n);
        let is_row = r.random_bool(0.5);
        let mut members: Vec<usize> = (0..n).collect();
        members.shuffle(&mut r);
        let mut rest = &members[..];
        while !rest.is_empty() {
            let cnt = r.random_range(1..=rest.len());
            let pairs: Vec<(usize, usize)> = rest[..cnt]
                .iter()
                .map(|&o| if is_row { (line, o) } else { (o, line) })
                .collect();
            rest = &rest[cnt..];
            let price = (r.random_range(0.7..1.5) * cnt as f64 / n as f64).min(0.99);
            let id = format!("s{}", orders.len());
            orders.push(BidOrder::from_pairs(id, n, &pairs, price, r.random_range(0.5..3.0)).unwrap());
        }
    }
    MarketInstance::new(n, orders, None).unwrap()
}

/// Sinkhorn scaling of a matrix with entries `e^{U(−spread, spread)}`.
pub fn random_target(n: usize, seed: u64, spread: f64) -> PriceMatrix {
    let mut r = rng(seed);
    let m = Matrix::from_fn(n, n, |_, _| r.random_range(-spread..spread).exp());
    PriceMatrix::new(sinkhorn_scale(&m, 10_000, 1e-15).0, 1e-9).unwrap()
}

pub fn random_matrix(r: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(n, n, |_, _| r.random_range(lo..hi))
}

/// Permanent straight from the definition, by expansion over the first
/// unused row.
pub fn permanent_by_definition(b: &Matrix) -> f64 {
    fn rec(b: &Matrix, row: usize, used: &mut [bool]) -> f64 {
        if row == b.nrows() {
            return 1.0;
        }
        let mut total = 0.0;
        for j in 0..b.ncols() {
            if !used[j] && b[(row, j)] != 0.0 {
                used[j] = true;
                total += b[(row, j)] * rec(b, row + 1, used);
                used[j] = false;
            }
        }
        total
    }
    rec(b, 0, &mut vec![false; b.ncols()])
}

/// `f_ij(Y) = Σ_{σ(i)=j} e^{Y•M_σ}` by direct summation.
pub fn plain_moment(y: &Matrix, i: usize, j: usize) -> f64 {
    let e = y.map(f64::exp);
    let mut minor = e.clone();
    for c in 0..y.ncols() {
        minor[(i, c)] = if c == j { 1.0 } else { 0.0 };
    }
    e[(i, j)] * permanent_by_definition(&minor)
}

pub fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Independent solve of the starting-order program by a plain primal
/// log-barrier on the quantity box and damped Newton in `(x, v, w)`, with
/// `w_{n−1}` pinned to zero. Returns the prices `θ_ij / s_ij`.
pub fn primal_barrier_prices(inst: &MarketInstance) -> Matrix {
    let n = inst.n();
    let orders = inst.orders();
    let m = orders.len();
    let theta = inst.theta();
    let pi: Vec<f64> = orders.iter().map(|o| o.limit_price()).collect();
    let cap: Vec<f64> = orders.iter().map(|o| o.limit_quantity()).collect();
    let dim = m + 2 * n - 1;

    let slack = |z: &DVector<f64>| {
        let x: Vec<f64> = z.iter().take(m).copied().collect();
        let bids = inst.weighted_bids(&x);
        Matrix::from_fn(n, n, |i, j| {
            let w = if j + 1 < n { z[m + n + j] } else { 0.0 };
            z[m + i] + w - bids[(i, j)]
        })
    };
    let value = |z: &DVector<f64>, mu: f64| -> Option<f64> {
        let s = slack(z);
        if s.iter().any(|&v| v <= 0.0) || (0..m).any(|k| z[k] <= 0.0 || z[k] >= cap[k]) {
            return None;
        }
        let mut f: f64 = (0..m).map(|k| pi[k] * z[k] + mu * (z[k].ln() + (cap[k] - z[k]).ln())).sum();
        f -= (0..2 * n - 1).map(|t| z[m + t]).sum::<f64>();
        f += theta.iter().zip(s.iter()).map(|(t, s)| t * s.ln()).sum::<f64>();
        Some(f)
    };
    // ∂s_ij/∂z as a dense row per cell.
    let ds = |i: usize, j: usize| {
        let mut g = DVector::zeros(dim);
        for (k, o) in orders.iter().enumerate() {
            g[k] = -o.bid_matrix()[(i, j)];
        }
        g[m + i] = 1.0;
        if j + 1 < n {
            g[m + n + j] = 1.0;
        }
        g
    };

    let mut z = DVector::zeros(dim);
    for k in 0..m {
        z[k] = 0.5 * cap[k];
    }
    let half: Vec<f64> = cap.iter().map(|c| 0.5 * c).collect();
    let bids = inst.weighted_bids(&half);
    for i in 0..n {
        z[m + i] = bids.row(i).max() + 1.0;
    }

    let mut mu = 1.0;
    while mu >= 1e-13 {
        for _ in 0..200 {
            let s = slack(&z);
            let mut g = DVector::zeros(dim);
            let mut h = DMatrix::zeros(dim, dim);
            for k in 0..m {
                g[k] = pi[k] + mu * (1.0 / z[k] - 1.0 / (cap[k] - z[k]));
                h[(k, k)] = -mu * (1.0 / z[k].powi(2) + 1.0 / (cap[k] - z[k]).powi(2));
            }
            for t in 0..2 * n - 1 {
                g[m + t] -= 1.0;
            }
            for i in 0..n {
                for j in 0..n {
                    let d = ds(i, j);
                    let t = theta[(i, j)];
                    g += &d * (t / s[(i, j)]);
                    h -= &d * d.transpose() * (t / s[(i, j)].powi(2));
                }
            }
            let neg = -h;
            let step = neg.clone().cholesky().map(|c| c.solve(&g)).unwrap_or_else(|| {
                neg.pseudo_inverse(1e-14).unwrap() * &g
            });
            let decrement = g.dot(&step);
            if decrement < 1e-24 {
                break;
            }
            let f0 = value(&z, mu).unwrap();
            let mut a = 1.0;
            loop {
                let cand = &z + &step * a;
                if let Some(f) = value(&cand, mu) {
                    if f >= f0 + 1e-4 * a * decrement {
                        z = cand;
                        break;
                    }
                }
                a *= 0.5;
                if a < 1e-16 {
                    break;
                }
            }
            if a < 1e-16 {
                break;
            }
        }
        mu *= 0.1;
    }
    let s = slack(&z);
    Matrix::from_fn(n, n, |i, j| theta[(i, j)] / s[(i, j)])
}
