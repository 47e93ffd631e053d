use crate::error::{Error, Result};
use crate::run_model::{ExampleId, Run, TestId};

/// Pairs `(L_{t-1}, L_t)` at the steps where `train_id` was consumed alone.
fn bs1_pairs(runs: &[&Run], test_id: TestId, train_id: ExampleId) -> Result<Vec<(f64, f64)>> {
    let mut pairs = Vec::new();
    for run in runs {
        let Some(tr) = run.trajectory(test_id) else { continue };
        for occ in run.curriculum().occurrence_steps(train_id)? {
            let size = run.curriculum().batch(occ.step).len();
            if size != 1 {
                return Err(Error::UnsupportedBatchSize { step: occ.step, size });
            }
            if let (Some(prev), Some(next)) = (tr.loss_at(occ.step - 1), tr.loss_at(occ.step)) {
                pairs.push((prev, next));
            }
        }
    }
    Ok(pairs)
}

/// Batch-size-1 fit of one training example's `(A_i, B_i)`:
/// `min Σ_{t∈T_i} (L_t − A_i·L_{t-1} − B_i)² + λ(A_i² + B_i²)`.
pub fn fit_univariate_bs1(runs: &[&Run], test_id: TestId, train_id: ExampleId, lambda: f64) -> Result<(f64, f64)> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Numeric(format!("λ must be finite and nonnegative, got {lambda}")));
    }
    let pairs = bs1_pairs(runs, test_id, train_id)?;
    if pairs.is_empty() {
        return Err(Error::NoData { train_id });
    }
    let k = pairs.len() as f64;
    if lambda == 0.0 {
        if pairs.len() < 2 {
            return Err(Error::Underdetermined {
                train_id,
                reason: "observed once; two occurrences are needed to separate A from B".into(),
            });
        }
        let x_mean = pairs.iter().map(|p| p.0).sum::<f64>() / k;
        let y_mean = pairs.iter().map(|p| p.1).sum::<f64>() / k;
        let sxx: f64 = pairs.iter().map(|p| (p.0 - x_mean).powi(2)).sum();
        let sxy: f64 = pairs.iter().map(|p| (p.0 - x_mean) * (p.1 - y_mean)).sum();
        let scale: f64 = pairs.iter().map(|p| p.0 * p.0).sum();
        if sxx <= 1e-14 * scale {
            return Err(Error::Underdetermined {
                train_id,
                reason: "identical L_{t-1} at every occurrence; A and B are collinear".into(),
            });
        }
        let a = sxy / sxx;
        return Ok((a, y_mean - a * x_mean));
    }
    // Normal equations [[Σx² + λ, Σx], [Σx, k + λ]]·(A, B) = (Σxy, Σy).
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in &pairs {
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let (g11, g12, g22) = (sxx + lambda, sx, k + lambda);
    let det = g11 * g22 - g12 * g12;
    Ok(((g22 * sxy - g12 * sy) / det, (g11 * sy - g12 * sxy) / det))
}

/// Closed-form additive weights for batch-size-1 runs at `λ = 0`:
/// `B̂_i = −(1/|T_i|)·Σ_{t∈T_i} (L_{t-1} − L_t)`, pooled over all runs.
/// Examples with no usable occurrence are `None`.
pub fn closed_form_additive(runs: &[&Run], test_id: TestId) -> Result<Vec<Option<f64>>> {
    let n = runs.first().map_or(0, |r| r.curriculum().n());
    let mut drops = vec![0.0; n];
    let mut counts = vec![0usize; n];
    for run in runs {
        let Some(tr) = run.trajectory(test_id) else { continue };
        for (t, batch) in run.curriculum().steps().iter().enumerate() {
            let step = t + 1;
            if batch.len() != 1 {
                return Err(Error::UnsupportedBatchSize { step, size: batch.len() });
            }
            if let (Some(prev), Some(next)) = (tr.loss_at(step - 1), tr.loss_at(step)) {
                let i = batch[0] as usize - 1;
                drops[i] += prev - next;
                counts[i] += 1;
            }
        }
    }
    Ok(drops.into_iter().zip(counts).map(|(d, c)| (c > 0).then(|| -d / c as f64)).collect())
}
