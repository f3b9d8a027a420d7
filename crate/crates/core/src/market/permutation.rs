use crate::{Error, Matrix, Result};
use serde::{Deserialize, Serialize};

/// A final ranking: `mapping[i]` is the position taken by candidate `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct PermutationOutcome {
    mapping: Vec<usize>,
}

impl PermutationOutcome {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let n = mapping.len();
        let mut seen = vec![false; n];
        for &p in &mapping {
            if p >= n {
                return Err(Error::IndexOutOfRange(format!("position {p} with n = {n}")));
            }
            if seen[p] {
                return Err(Error::InvalidArgument(format!(
                    "position {p} assigned twice; not a permutation"
                )));
            }
            seen[p] = true;
        }
        Ok(Self { mapping })
    }

    pub(crate) fn from_vec_unchecked(mapping: Vec<usize>) -> Self {
        Self { mapping }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            mapping: (0..n).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.mapping.len()
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    pub fn position_of(&self, candidate: usize) -> usize {
        self.mapping[candidate]
    }

    /// The permutation matrix `M_σ`.
    pub fn matrix(&self) -> Matrix {
        let n = self.n();
        let mut m = Matrix::zeros(n, n);
        for (i, &j) in self.mapping.iter().enumerate() {
            m[(i, j)] = 1.0;
        }
        m
    }

    /// Recovers the outcome from a 0/1 permutation matrix.
    pub fn from_matrix(m: &Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let n = m.nrows();
        let mut mapping = Vec::with_capacity(n);
        for i in 0..n {
            let ones: Vec<usize> = (0..n).filter(|&j| m[(i, j)] == 1.0).collect();
            let zeros = (0..n).filter(|&j| m[(i, j)] == 0.0).count();
            if ones.len() != 1 || zeros != n - 1 {
                return Err(Error::InvalidArgument(format!(
                    "row {i} is not a unit row of a permutation matrix"
                )));
            }
            mapping.push(ones[0]);
        }
        Self::new(mapping)
    }

    /// `Y • M_σ = Σ_i Y[i, σ(i)]`.
    pub fn score(&self, y: &Matrix) -> f64 {
        self.mapping
            .iter()
            .enumerate()
            .map(|(i, &j)| y[(i, j)])
            .sum()
    }

    /// 1-based ranking for human-readable reports.
    pub fn one_based(&self) -> Vec<usize> {
        self.mapping.iter().map(|p| p + 1).collect()
    }
}

impl TryFrom<Vec<usize>> for PermutationOutcome {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PermutationOutcome> for Vec<usize> {
    fn from(p: PermutationOutcome) -> Self {
        p.mapping
    }
}
