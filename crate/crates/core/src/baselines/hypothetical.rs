use super::{CheckpointTrace, InfluenceMethod, InfluenceScores};
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::fitting::{fit_design, DesignProblem, SimulatorParams, SimulatorVariant, Transition};
use crate::run_model::{ExampleId, TestId};

/// First-order estimate of the loss drop on `z` from one SGD step on `z_i`:
/// `η·⟨∇L(z_i), ∇L(z)⟩`.
pub fn hypothetical_loss_reduction(train_grad: &[f64], test_grad: &[f64], eta: f64) -> Result<f64> {
    if train_grad.len() != test_grad.len() {
        return Err(Error::DimensionMismatch { expected: train_grad.len(), found: test_grad.len() });
    }
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(Error::Numeric(format!("learning rate must be finite and nonnegative, got {eta}")));
    }
    Ok(eta * dot(train_grad, test_grad))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn common_n(traces: &[CheckpointTrace]) -> Result<usize> {
    let n = traces.first().map_or(0, CheckpointTrace::n);
    if let Some(t) = traces.iter().find(|t| t.n() != n) {
        return Err(Error::DimensionMismatch { expected: n, found: t.n() });
    }
    Ok(n)
}

fn check_ids(train_ids: &[ExampleId], n: usize) -> Result<()> {
    match train_ids.iter().find(|&&id| id == 0 || id as usize > n) {
        Some(&id) => Err(Error::IdOutOfRange { id: id.into(), n }),
        None => Ok(()),
    }
}

/// TracIn-CP over one trace: `I(z_i, z) = Σ_{t∈CP} η_t·⟨∇L_t(z_i), ∇L_t(z)⟩`.
pub fn tracin_cp(trace: &CheckpointTrace, train_ids: &[ExampleId], test_id: TestId) -> Result<InfluenceScores> {
    let mut all = tracin_cp_multi(std::slice::from_ref(trace), train_ids, &[test_id], ExecMode::Sequential)?;
    Ok(all.remove(0))
}

/// TracIn-CP pooled over several traces for several test examples. Train
/// gradients are evaluated once per checkpoint and shared across test ids.
/// The normalizer of each requested example is the total checkpoint count.
pub fn tracin_cp_multi(
    traces: &[CheckpointTrace],
    train_ids: &[ExampleId],
    test_ids: &[TestId],
    mode: ExecMode,
) -> Result<Vec<InfluenceScores>> {
    let n = common_n(traces)?;
    check_ids(train_ids, n)?;
    let per_trace: Vec<Result<Vec<Vec<f64>>>> = mode.map(traces, |trace| {
        let mut sums = vec![vec![0.0; n]; test_ids.len()];
        for ckpt in trace.checkpoints() {
            let test_grads: Vec<Vec<f64>> =
                test_ids.iter().map(|&z| trace.test_gradient(ckpt, z)).collect::<Result<_>>()?;
            for &i in train_ids {
                let g_i = trace.train_gradient(ckpt, i)?;
                for (k, g) in test_grads.iter().enumerate() {
                    sums[k][i as usize - 1] += hypothetical_loss_reduction(&g_i, g, ckpt.learning_rate)?;
                }
            }
        }
        Ok(sums)
    });
    let mut totals = vec![vec![0.0; n]; test_ids.len()];
    for sums in per_trace {
        for (total, part) in totals.iter_mut().zip(sums?) {
            for (t, p) in total.iter_mut().zip(part) {
                *t += p;
            }
        }
    }
    let checkpoint_count: usize = traces.iter().map(|t| t.checkpoints().len()).sum();
    let mut normalizers = vec![0.0; n];
    for &i in train_ids {
        normalizers[i as usize - 1] = checkpoint_count as f64;
    }
    Ok(test_ids
        .iter()
        .zip(totals)
        .map(|(&z, scores)| InfluenceScores {
            test_example_id: z,
            method: InfluenceMethod::TracinCp,
            scores,
            normalizers: normalizers.clone(),
        })
        .collect())
}

/// Hypothetical transitions at every checkpoint: from the recorded loss
/// `L_t(z)` to `L̃_{t+1}(z) = L_t(z) − η_t·⟨∇L_t(z_i), ∇L_t(z)⟩`, as if a
/// step on `z_i` alone had been taken there.
pub fn hypothetical_transitions(
    traces: &[CheckpointTrace],
    train_ids: &[ExampleId],
    test_id: TestId,
) -> Result<Vec<Transition>> {
    let n = common_n(traces)?;
    check_ids(train_ids, n)?;
    let mut out = Vec::new();
    for trace in traces {
        for ckpt in trace.checkpoints() {
            let loss = trace.test_loss(ckpt, test_id)?;
            let g = trace.test_gradient(ckpt, test_id)?;
            for &i in train_ids {
                let g_i = trace.train_gradient(ckpt, i)?;
                out.push(Transition {
                    run_id: trace.run_id().to_string(),
                    step: ckpt.step,
                    prev_loss: loss,
                    next_loss: loss - hypothetical_loss_reduction(&g_i, &g, ckpt.learning_rate)?,
                    batch: vec![(i, 1)],
                });
            }
        }
    }
    Ok(out)
}

/// Additive fit to hypothetical losses: `B̂_i = −(1/|CP|)·Σ_{t∈CP} (L_t(z) − L̃_{t+1}(z))`.
/// Entries for examples not in `train_ids` are 0.
pub fn hypothetical_additive_fit(
    trace: &CheckpointTrace,
    train_ids: &[ExampleId],
    test_id: TestId,
) -> Result<Vec<f64>> {
    hypothetical_additive_fit_multi(std::slice::from_ref(trace), train_ids, test_id)
}

pub fn hypothetical_additive_fit_multi(
    traces: &[CheckpointTrace],
    train_ids: &[ExampleId],
    test_id: TestId,
) -> Result<Vec<f64>> {
    let n = common_n(traces)?;
    let mut drops = vec![0.0; n];
    let mut counts = vec![0usize; n];
    for tr in hypothetical_transitions(traces, train_ids, test_id)? {
        let i = tr.batch[0].0 as usize - 1;
        drops[i] += tr.prev_loss - tr.next_loss;
        counts[i] += 1;
    }
    Ok(drops.into_iter().zip(counts).map(|(d, c)| if c > 0 { -d / c as f64 } else { 0.0 }).collect())
}

/// Linear simulator fit to hypothetical transitions (one row per checkpoint
/// and hypothetical training example).
pub fn hypothetical_linear_fit(
    trace: &CheckpointTrace,
    train_ids: &[ExampleId],
    test_id: TestId,
    lambda: f64,
) -> Result<SimulatorParams> {
    hypothetical_linear_fit_multi(std::slice::from_ref(trace), train_ids, test_id, lambda)
}

pub fn hypothetical_linear_fit_multi(
    traces: &[CheckpointTrace],
    train_ids: &[ExampleId],
    test_id: TestId,
    lambda: f64,
) -> Result<SimulatorParams> {
    let n = common_n(traces)?;
    let transitions = hypothetical_transitions(traces, train_ids, test_id)?;
    let problem = DesignProblem::from_transitions(n, test_id, SimulatorVariant::Linear, transitions)?;
    fit_design(&problem, lambda)
}
