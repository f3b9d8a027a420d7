use crate::market::PermutationOutcome;
use crate::{Error, Matrix, Result};

fn check_square_finite(w: &Matrix) -> Result<()> {
    if !w.is_square() {
        return Err(Error::DimensionMismatch {
            expected: w.nrows(),
            found: w.ncols(),
        });
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("weights must be finite".into()));
    }
    Ok(())
}

/// Maximum-weight perfect matching of the complete bipartite graph with edge
/// weights `weights[(candidate, position)]`, by the O(n³) Hungarian method.
pub fn max_weight_matching(weights: &Matrix) -> Result<(f64, PermutationOutcome)> {
    check_square_finite(weights)?;
    let n = weights.nrows();
    let cost = Matrix::from_fn(n, n, |i, j| -weights[(i, j)]);
    let mapping = hungarian_min(&cost);
    let value = mapping
        .iter()
        .enumerate()
        .map(|(i, &j)| weights[(i, j)])
        .sum();
    Ok((value, PermutationOutcome::from_vec_unchecked(mapping)))
}

/// Maximum-weight matching whose mapping is lexicographically smallest among
/// all maximizers (ties within a relative `1e-12` of the weight scale).
pub fn lexicographic_max_matching(weights: &Matrix) -> Result<(f64, PermutationOutcome)> {
    check_square_finite(weights)?;
    let n = weights.nrows();
    let (best, _) = max_weight_matching(weights)?;
    let scale = weights.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale * n.max(1) as f64;

    let mut rows_left: Vec<usize> = (0..n).collect();
    let mut cols_left: Vec<usize> = (0..n).collect();
    let mut fixed = 0.0;
    let mut mapping = Vec::with_capacity(n);
    for i in 0..n {
        rows_left.retain(|&r| r != i);
        let mut chosen = None;
        for &j in &cols_left {
            let rest_cols: Vec<usize> = cols_left.iter().copied().filter(|&c| c != j).collect();
            let rest = sub_matching_value(weights, &rows_left, &rest_cols);
            if fixed + weights[(i, j)] + rest >= best - tol {
                chosen = Some(j);
                break;
            }
        }
        // the Hungarian optimum guarantees some column qualifies
        let j = chosen.unwrap_or(cols_left[0]);
        fixed += weights[(i, j)];
        mapping.push(j);
        cols_left.retain(|&c| c != j);
    }
    let value = mapping
        .iter()
        .enumerate()
        .map(|(i, &j)| weights[(i, j)])
        .sum();
    Ok((value, PermutationOutcome::from_vec_unchecked(mapping)))
}

fn sub_matching_value(weights: &Matrix, rows: &[usize], cols: &[usize]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let k = rows.len();
    let cost = Matrix::from_fn(k, k, |a, b| -weights[(rows[a], cols[b])]);
    hungarian_min(&cost)
        .iter()
        .enumerate()
        .map(|(a, &b)| weights[(rows[a], cols[b])])
        .sum()
}

/// Shortest-augmenting-path Hungarian algorithm with potentials; returns the
/// column assigned to each row.
fn hungarian_min(cost: &Matrix) -> Vec<usize> {
    let n = cost.nrows();
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; index 0 is the virtual root
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// A perfect matching using only cells where `support(i, j)` holds, found by
/// Kuhn's augmenting paths (rows and columns scanned in index order).
pub fn perfect_matching_on_support(
    n: usize,
    support: impl Fn(usize, usize) -> bool,
) -> Option<PermutationOutcome> {
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| support(i, j)).collect())
        .collect();
    let mut col_owner: Vec<Option<usize>> = vec![None; n];
    for row in 0..n {
        let mut visited = vec![false; n];
        if !augment(row, &adj, &mut visited, &mut col_owner) {
            return None;
        }
    }
    let mut mapping = vec![0; n];
    for (col, owner) in col_owner.iter().enumerate() {
        mapping[owner.expect("perfect matching covers every column")] = col;
    }
    Some(PermutationOutcome::from_vec_unchecked(mapping))
}

fn augment(
    row: usize,
    adj: &[Vec<usize>],
    visited: &mut [bool],
    col_owner: &mut [Option<usize>],
) -> bool {
    for &col in &adj[row] {
        if visited[col] {
            continue;
        }
        visited[col] = true;
        let free = match col_owner[col] {
            None => true,
            Some(other) => augment(other, adj, visited, col_owner),
        };
        if free {
            col_owner[col] = Some(row);
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::enumerate_permutations;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force_max(w: &Matrix) -> f64 {
        enumerate_permutations(w.nrows())
            .unwrap()
            .map(|s| s.score(w))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn diagonal_dominant_gives_identity() {
        let n = 5;
        let w = Matrix::from_fn(n, n, |i, j| if i == j { 10.0 } else { 1.0 });
        let (value, sigma) = max_weight_matching(&w).unwrap();
        assert_eq!(value, 10.0 * n as f64);
        assert_eq!(sigma, PermutationOutcome::identity(n));
    }

    #[test]
    fn permutation_weights_recover_permutation() {
        let p = PermutationOutcome::new(vec![3, 0, 4, 1, 2]).unwrap();
        let (value, sigma) = max_weight_matching(&p.matrix()).unwrap();
        assert_eq!(value, 5.0);
        assert_eq!(sigma, p);
    }

    #[test]
    fn random_integer_matrices_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let w = Matrix::from_fn(6, 6, |_, _| rng.random_range(0..20) as f64);
            let (value, sigma) = max_weight_matching(&w).unwrap();
            assert_eq!(value, brute_force_max(&w));
            assert_eq!(sigma.score(&w), value);
        }
    }

    #[test]
    fn lexicographic_tie_break() {
        // all-zero weights: every permutation ties, identity is smallest
        let (v, s) = lexicographic_max_matching(&Matrix::zeros(4, 4)).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(s, PermutationOutcome::identity(4));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let w = Matrix::from_fn(5, 5, |_, _| rng.random_range(0..3) as f64);
            let (value, sigma) = lexicographic_max_matching(&w).unwrap();
            let best = brute_force_max(&w);
            assert_eq!(value, best);
            let first = enumerate_permutations(5)
                .unwrap()
                .find(|s| s.score(&w) == best)
                .unwrap();
            assert_eq!(sigma, first);
        }
    }

    #[test]
    fn support_matching() {
        let m = perfect_matching_on_support(3, |i, j| (i + 1) % 3 == j).unwrap();
        assert_eq!(m.mapping(), &[1, 2, 0]);
        assert!(perfect_matching_on_support(3, |_, j| j == 0).is_none());
    }

    #[test]
    fn non_square_is_rejected() {
        assert!(max_weight_matching(&Matrix::zeros(2, 3)).is_err());
    }
}
