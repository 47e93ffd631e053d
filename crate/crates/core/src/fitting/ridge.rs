use nalgebra::{DMatrix, DVector};

use super::DesignProblem;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct RidgeSolution {
    pub weights: DVector<f64>,
    /// Numerical rank of `X`; computed on the `λ = 0` path only.
    pub rank: Option<usize>,
    pub rank_deficient: bool,
    /// Residual sum of squares `‖y − Xw‖²`.
    pub rss: f64,
}

/// `argmin_w ‖y − Xw‖² + λ‖w‖²` for a design problem.
pub fn solve_ridge(problem: &DesignProblem, lambda: f64) -> Result<RidgeSolution> {
    solve_ridge_system(&problem.x, &problem.y, lambda)
}

/// Ridge solve on a raw system.
///
/// `λ > 0` goes through a Cholesky factorization of `XᵀX + λI`. `λ = 0`
/// goes through an SVD of `X` (with a QR solve when `X` has full column
/// rank) and returns the minimum-norm least-squares
/// solution, treating singular values below `max(S, p)·ε·σ_max` as zero.
pub fn solve_ridge_system(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<RidgeSolution> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Numeric(format!("λ must be finite and nonnegative, got {lambda}")));
    }
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), found: y.len() });
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite entry in design".into()));
    }
    let p = x.ncols();
    if x.nrows() == 0 {
        // No observations: the penalized problem is minimized at zero.
        return Ok(RidgeSolution { weights: DVector::zeros(p), rank: Some(0), rank_deficient: p > 0, rss: 0.0 });
    }

    if lambda > 0.0 {
        let weights = NormalEquations::new(x, y).solve(lambda)?;
        let rss = (y - x * &weights).norm_squared();
        return Ok(RidgeSolution { weights, rank: None, rank_deficient: false, rss });
    }

    // Tall systems are first reduced to R w = Qᵀy; R has the same singular
    // values as X and (QR)⁺ = R⁺Qᵀ, so the minimum-norm solution is unchanged.
    let (core, rhs) = reduce(x, y);
    let svd = core.clone().svd(true, true);
    let tol = rank_tolerance(x.nrows(), p, &svd.singular_values);
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    // The SVD decides the rank, but its solves can lose several digits on
    // well-conditioned systems. Full-rank problems are solved through the
    // backward-stable QR factor instead; rank-deficient ones keep the SVD's
    // minimum-norm solution, polished by iterative refinement (corrections
    // stay in the row space, so the minimum-norm property is preserved).
    let weights = match (rank == p).then(|| triangular_solve(&core, &rhs)).flatten() {
        Some(w) => w,
        None => {
            let solve = |r: &DVector<f64>| svd.solve(r, tol).map_err(|e| Error::Numeric(e.to_string()));
            let mut w = solve(&rhs)?;
            for _ in 0..3 {
                w += solve(&(&rhs - &core * &w))?;
            }
            w
        }
    };
    let rss = (y - x * &weights).norm_squared();
    Ok(RidgeSolution { weights, rank: Some(rank), rank_deficient: rank < p, rss })
}

/// `(X, y)` itself when `X` is not tall, else `(R, (Qᵀy)[..p])` from a thin QR.
fn reduce(x: &DMatrix<f64>, y: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let p = x.ncols();
    if x.nrows() <= p {
        return (x.clone(), y.clone());
    }
    let qr = x.clone().qr();
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    (qr.r(), qty.rows(0, p).into_owned())
}

/// Solves a square full-rank system via QR; `core` is already upper
/// triangular when it came out of [`reduce`].
fn triangular_solve(core: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if !core.is_square() {
        return None;
    }
    if (0..core.nrows()).all(|i| (0..i).all(|j| core[(i, j)] == 0.0)) {
        return core.solve_upper_triangular(rhs);
    }
    core.clone().qr().solve(rhs)
}

/// `XᵀX` and `Xᵀy`, formed once and reused across penalties.
#[derive(Debug, Clone)]
pub(crate) struct NormalEquations {
    gram: DMatrix<f64>,
    xty: DVector<f64>,
}

impl NormalEquations {
    /// Accumulates row by row over each row's nonzeros; design rows only
    /// touch the examples in one batch, so this is far cheaper than a dense
    /// product.
    pub(crate) fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> Self {
        let p = x.ncols();
        let mut gram = DMatrix::zeros(p, p);
        let mut xty = DVector::zeros(p);
        let mut nz: Vec<(usize, f64)> = Vec::new();
        for s in 0..x.nrows() {
            nz.clear();
            nz.extend((0..p).map(|j| (j, x[(s, j)])).filter(|&(_, v)| v != 0.0));
            for &(i, a) in &nz {
                xty[i] += a * y[s];
                for &(j, b) in &nz {
                    gram[(i, j)] += a * b;
                }
            }
        }
        NormalEquations { gram, xty }
    }

    /// Cholesky solve of `(XᵀX + λI) w = Xᵀy`; requires `λ > 0`.
    pub(crate) fn solve(&self, lambda: f64) -> Result<DVector<f64>> {
        let mut gram = self.gram.clone();
        for i in 0..gram.nrows() {
            gram[(i, i)] += lambda;
        }
        let chol = gram.cholesky().ok_or_else(|| Error::Numeric("XᵀX + λI is not positive definite".into()))?;
        Ok(chol.solve(&self.xty))
    }
}

fn rank_tolerance(rows: usize, cols: usize, singular_values: &DVector<f64>) -> f64 {
    let sigma_max = singular_values.iter().copied().fold(0.0, f64::max);
    rows.max(cols) as f64 * f64::EPSILON * sigma_max
}

/// Numerical rank of `x` with its singular values (descending) and the
/// tolerance used.
pub fn numerical_rank(x: &DMatrix<f64>) -> (usize, Vec<f64>, f64) {
    if x.nrows() == 0 || x.ncols() == 0 {
        return (0, Vec::new(), 0.0);
    }
    let (core, _) = reduce(x, &DVector::zeros(x.nrows()));
    let sv = core.singular_values();
    let tol = rank_tolerance(x.nrows(), x.ncols(), &sv);
    let mut values: Vec<f64> = sv.iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    (values.iter().filter(|&&s| s > tol).count(), values, tol)
}
