use nalgebra::{DMatrix, DVector};

use super::hypothetical::dot;
use super::CheckpointTrace;
use crate::error::{Error, Result};
use crate::run_model::{ExampleId, TestId};

fn factor(hessian: &DMatrix<f64>, dim: usize) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if hessian.nrows() != dim || hessian.ncols() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: hessian.nrows() });
    }
    if hessian.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite Hessian entry".into()));
    }
    hessian.clone().cholesky().ok_or(Error::NotPositiveDefinite)
}

/// `∇L(z_i)ᵀ H⁻¹ ∇L(z)`, computed by solving `H u = ∇L(z)` through a
/// Cholesky factorization.
pub fn influence_function_score(train_grad: &[f64], test_grad: &[f64], hessian: &DMatrix<f64>) -> Result<f64> {
    if train_grad.len() != test_grad.len() {
        return Err(Error::DimensionMismatch { expected: train_grad.len(), found: test_grad.len() });
    }
    let chol = factor(hessian, test_grad.len())?;
    let u = chol.solve(&DVector::from_column_slice(test_grad));
    Ok(dot(train_grad, u.as_slice()))
}

/// Additive fit to second-order hypothetical losses at the final checkpoint:
/// a Newton step `θ − H⁻¹∇L(z_i)` predicts the drop `∇L(z_i)ᵀH⁻¹∇L(z)`, so
/// `B̂_i = −∇L(z_i)ᵀ H⁻¹ ∇L(z)`. Entries outside `train_ids` are 0.
pub fn second_order_additive_fit(
    trace: &CheckpointTrace,
    train_ids: &[ExampleId],
    test_id: TestId,
) -> Result<Vec<f64>> {
    let ckpt = trace
        .final_checkpoint()
        .ok_or_else(|| Error::validation(format!("trace {}", trace.run_id()), "no checkpoints"))?;
    let hessian = trace
        .source()
        .training_hessian(ckpt)
        .ok_or_else(|| Error::MissingGradient { step: ckpt.step, example: "training Hessian".into() })?;
    let g = trace.test_gradient(ckpt, test_id)?;
    let chol = factor(&hessian, g.len())?;
    let u = chol.solve(&DVector::from_column_slice(&g));
    let n = trace.n();
    let mut b = vec![0.0; n];
    for &i in train_ids {
        if i == 0 || i as usize > n {
            return Err(Error::IdOutOfRange { id: i.into(), n });
        }
        let g_i = trace.train_gradient(ckpt, i)?;
        if g_i.len() != g.len() {
            return Err(Error::DimensionMismatch { expected: g.len(), found: g_i.len() });
        }
        b[i as usize - 1] = -dot(&g_i, u.as_slice());
    }
    Ok(b)
}
