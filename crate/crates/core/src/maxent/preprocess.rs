use crate::combinatorics::perfect_matching_on_support;
use crate::linalg::sinkhorn_scale;
use crate::market::PriceMatrix;
use crate::{Error, Matrix, Result};

/// Default floor below which target entries are removed.
pub const DEFAULT_QMIN_FLOOR: f64 = 1e-6;

/// Target with small entries zeroed and their cells excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    /// Target with removed cells set to zero.
    pub q: Matrix,
    /// `mask[(i, j)]` is true for removed cells.
    pub mask: Vec<Vec<bool>>,
    pub removed: Vec<[usize; 2]>,
    /// Smallest remaining entry.
    pub q_min: f64,
    /// Largest removed entry: the additive marginal slack per cell.
    pub slack: f64,
}

impl Preprocessed {
    pub fn is_masked(&self, i: usize, j: usize) -> bool {
        self.mask[i][j]
    }

    /// The zeroed target rescaled to be doubly stochastic on its support.
    pub fn rebalanced(&self) -> Matrix {
        if self.removed.is_empty() {
            return self.q.clone();
        }
        sinkhorn_scale(&self.q, 10_000, 1e-15).0
    }

    /// `-inf` on removed cells, `value` elsewhere.
    pub fn masked_fill(&self, value: f64) -> Matrix {
        let n = self.q.nrows();
        Matrix::from_fn(n, n, |i, j| if self.mask[i][j] { f64::NEG_INFINITY } else { value })
    }
}

/// Zeroes entries below `floor` so the remaining minimum exceeds it.
pub fn preprocess_qmin(q: &PriceMatrix, floor: f64) -> Result<Preprocessed> {
    if !(floor >= 0.0 && floor < 1.0) {
        return Err(Error::InvalidArgument(format!("floor must be in [0, 1), got {floor}")));
    }
    let residual = q.residual();
    if residual > 1e-6 {
        return Err(Error::NotDoublyStochastic(residual));
    }
    let n = q.n();
    let m = q.matrix();
    let mask: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| m[(i, j)] < floor || m[(i, j)] <= 0.0).collect())
        .collect();
    if perfect_matching_on_support(n, |i, j| !mask[i][j]).is_none() {
        return Err(Error::NoPerfectMatching(format!(
            "removing entries below {floor:e} leaves no perfect matching"
        )));
    }
    let mut removed = Vec::new();
    let mut slack: f64 = 0.0;
    let mut q_min = f64::INFINITY;
    let out = Matrix::from_fn(n, n, |i, j| if mask[i][j] { 0.0 } else { m[(i, j)] });
    for i in 0..n {
        for j in 0..n {
            if mask[i][j] {
                removed.push([i, j]);
                slack = slack.max(m[(i, j)]);
            } else {
                q_min = q_min.min(m[(i, j)]);
            }
        }
    }
    Ok(Preprocessed {
        q: out,
        mask,
        removed,
        q_min,
        slack,
    })
}
