use super::perfect_matching_on_support;
use crate::linalg::doubly_stochastic_residual;
use crate::market::PermutationOutcome;
use crate::{Error, Matrix, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BvnTerm {
    pub weight: f64,
    pub outcome: PermutationOutcome,
}

/// A doubly stochastic matrix written as a convex combination of
/// permutation matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BvnDecomposition {
    pub terms: Vec<BvnTerm>,
}

impl BvnDecomposition {
    pub fn weight_sum(&self) -> f64 {
        self.terms.iter().map(|t| t.weight).sum()
    }

    /// `Σ weight · M_σ`.
    pub fn reconstruct(&self, n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for t in &self.terms {
            for (i, &j) in t.outcome.mapping().iter().enumerate() {
                m[(i, j)] += t.weight;
            }
        }
        m
    }

    /// Shannon entropy of the term weights.
    pub fn entropy(&self) -> f64 {
        -self
            .terms
            .iter()
            .filter(|t| t.weight > 0.0)
            .map(|t| t.weight * t.weight.ln())
            .sum::<f64>()
    }
}

/// Greedy peeling: repeatedly take a perfect matching on the support of the
/// residual and subtract its smallest entry along the matching.
///
/// Entries at or below `tol / n²` count as zero. Fails when no perfect
/// matching remains while some residual entry still exceeds `tol`.
pub fn bvn_decompose(q: &Matrix, tol: f64) -> Result<BvnDecomposition> {
    if !q.is_square() {
        return Err(Error::DimensionMismatch {
            expected: q.nrows(),
            found: q.ncols(),
        });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let n = q.nrows();
    let residual = doubly_stochastic_residual(q);
    if residual > tol || q.iter().any(|v| !v.is_finite() || *v < -tol) {
        return Err(Error::NotDoublyStochastic(residual));
    }
    let zero = tol / (n * n).max(1) as f64;
    let mut r = q.map(|v| v.max(0.0));
    let mut terms = Vec::new();
    while let Some(sigma) = perfect_matching_on_support(n, |i, j| r[(i, j)] > zero) {
        let weight = sigma
            .mapping()
            .iter()
            .enumerate()
            .map(|(i, &j)| r[(i, j)])
            .fold(f64::INFINITY, f64::min);
        for (i, &j) in sigma.mapping().iter().enumerate() {
            if r[(i, j)] == weight {
                r[(i, j)] = 0.0;
            } else {
                r[(i, j)] -= weight;
            }
        }
        terms.push(BvnTerm { weight, outcome: sigma });
    }
    let left = r.max();
    if left > tol {
        return Err(Error::NoPerfectMatching(format!(
            "residual entry {left:.3e} left after {} terms",
            terms.len()
        )));
    }
    Ok(BvnDecomposition { terms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::enumerate_permutations;
    use rand::seq::IndexedRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    #[test]
    fn permutation_matrix_is_a_single_term() {
        let p = PermutationOutcome::new(vec![2, 0, 1, 3]).unwrap();
        let d = bvn_decompose(&p.matrix(), 1e-9).unwrap();
        assert_eq!(d.terms.len(), 1);
        assert_eq!(d.terms[0].weight, 1.0);
        assert_eq!(d.terms[0].outcome, p);
    }

    #[test]
    fn half_identity_half_shift() {
        let shift = PermutationOutcome::new(vec![1, 2, 0]).unwrap();
        let q = (Matrix::identity(3, 3) + shift.matrix()) * 0.5;
        let d = bvn_decompose(&q, 1e-12).unwrap();
        assert_eq!(d.terms.len(), 2);
        assert!(d.terms.iter().all(|t| t.weight == 0.5));
    }

    #[test]
    fn random_mixtures_reconstruct() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 5;
        let all: Vec<_> = enumerate_permutations(n).unwrap().collect();
        for _ in 0..50 {
            let k = rng.random_range(1..12);
            let mut q = Matrix::zeros(n, n);
            let mut total = 0.0;
            for _ in 0..k {
                let w: f64 = rng.random::<f64>() + 0.01;
                q += all.choose(&mut rng).unwrap().matrix() * w;
                total += w;
            }
            q /= total;
            let d = bvn_decompose(&q, 1e-9).unwrap();
            assert!((d.reconstruct(n) - &q).abs().max() <= 1e-9);
            assert!((d.weight_sum() - 1.0).abs() <= 1e-9);
            assert!(d.terms.len() <= n * n - 2 * n + 2);
            assert!(d.terms.iter().all(|t| t.weight > 0.0));
            let distinct: HashSet<_> = d.terms.iter().map(|t| t.outcome.clone()).collect();
            assert_eq!(distinct.len(), d.terms.len());
        }
    }

    #[test]
    fn rejects_non_doubly_stochastic() {
        let q = Matrix::from_row_slice(2, 2, &[0.6, 0.3, 0.4, 0.7]);
        assert!(matches!(
            bvn_decompose(&q, 1e-9),
            Err(Error::NotDoublyStochastic(_))
        ));
    }
}
