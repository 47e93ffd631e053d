use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fitting::numerical_rank;
use crate::run_model::{Curriculum, ExampleId};

/// Binary matrix with `Q[t, j] = 1` iff the batch at step `t` contains
/// example `j` (0-based here, 1-based ids in curricula).
#[derive(Debug, Clone, PartialEq)]
pub struct BatchingMatrix {
    pub n: usize,
    /// Batch size; every row sums to `k`.
    pub k: usize,
    pub q: DMatrix<f64>,
}

impl BatchingMatrix {
    /// Number of `(k+1)×(k+1)` blocks on the diagonal.
    pub fn blocks(&self) -> usize {
        self.n / (self.k + 1)
    }
}

/// Block-diagonal `Q` built from `(k+1)×(k+1)` blocks `U = 11ᵀ − I`.
///
/// `U` is invertible (eigenvalues `k` and `−1`), so `Q` has full rank `n`;
/// this is re-verified numerically.
pub fn build_batching_matrix(n: usize, k: usize) -> Result<BatchingMatrix> {
    if k == 0 {
        return Err(Error::Construction("batch size k must be at least 1".into()));
    }
    if n == 0 || !n.is_multiple_of(k + 1) {
        return Err(Error::Construction(format!("n = {n} is not a positive multiple of k + 1 = {}", k + 1)));
    }
    let block = k + 1;
    let q = DMatrix::from_fn(n, n, |i, j| if i / block == j / block && i != j { 1.0 } else { 0.0 });
    let (rank, _, _) = numerical_rank(&q);
    if rank != n {
        return Err(Error::Construction(format!("batching matrix has rank {rank} < {n}")));
    }
    Ok(BatchingMatrix { n, k, q })
}

/// Reads one batch per row of `Q` and repeats the whole pass `repeats` times.
pub fn curriculum_from_q(q: &BatchingMatrix, repeats: usize) -> Result<Curriculum> {
    if repeats == 0 {
        return Err(Error::Construction("repeats must be at least 1".into()));
    }
    let pass: Vec<Vec<ExampleId>> =
        (0..q.n).map(|t| (0..q.n).filter(|&j| q.q[(t, j)] == 1.0).map(|j| j as ExampleId + 1).collect()).collect();
    let steps = std::iter::repeat_n(pass, repeats).flatten().collect();
    Curriculum::new(q.n, steps)
}
