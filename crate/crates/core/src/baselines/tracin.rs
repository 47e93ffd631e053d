use super::{InfluenceMethod, InfluenceScores};
use crate::error::{Error, Result};
use crate::run_model::{Run, TestId};

/// TracIn-Ideal on one batch-size-1 run: `I(z_i, z) = Σ_{t∈T_i} (L_{t-1} − L_t)`.
/// The normalizer is `|T_i|`.
pub fn tracin_ideal(run: &Run, test_id: TestId) -> Result<InfluenceScores> {
    let n = run.curriculum().n();
    let tr =
        run.trajectory(test_id).ok_or_else(|| Error::MissingLoss { run_id: run.run_id().into(), test_id, step: 0 })?;
    let mut scores = vec![0.0; n];
    let mut counts = vec![0.0; n];
    for (t, batch) in run.curriculum().steps().iter().enumerate() {
        let step = t + 1;
        if batch.len() != 1 {
            return Err(Error::UnsupportedBatchSize { step, size: batch.len() });
        }
        let missing = |s| Error::MissingLoss { run_id: run.run_id().into(), test_id, step: s };
        let prev = tr.loss_at(step - 1).ok_or_else(|| missing(step - 1))?;
        let next = tr.loss_at(step).ok_or_else(|| missing(step))?;
        let i = batch[0] as usize - 1;
        scores[i] += prev - next;
        counts[i] += 1.0;
    }
    Ok(InfluenceScores { test_example_id: test_id, method: InfluenceMethod::TracinIdeal, scores, normalizers: counts })
}

/// TracIn-Ideal averaged over runs. Each example's score is the mean of its
/// per-run scores over the runs that consumed it; its normalizer is its
/// mean occurrence count over those runs, so `−score/normalizer` is the
/// pooled per-occurrence mean drop.
pub fn expected_tracin_ideal(runs: &[&Run], test_id: TestId) -> Result<InfluenceScores> {
    let n = runs.first().map_or(0, |r| r.curriculum().n());
    let mut score_sum = vec![0.0; n];
    let mut occurrence_sum = vec![0.0; n];
    let mut runs_with = vec![0usize; n];
    for run in runs.iter().filter(|r| r.trajectory(test_id).is_some()) {
        let single = tracin_ideal(run, test_id)?;
        if single.n() != n {
            return Err(Error::DimensionMismatch { expected: n, found: single.n() });
        }
        for i in 0..n {
            if single.normalizers[i] > 0.0 {
                score_sum[i] += single.scores[i];
                occurrence_sum[i] += single.normalizers[i];
                runs_with[i] += 1;
            }
        }
    }
    let (scores, normalizers) = (0..n)
        .map(|i| match runs_with[i] {
            0 => (0.0, 0.0),
            r => (score_sum[i] / r as f64, occurrence_sum[i] / r as f64),
        })
        .unzip();
    Ok(InfluenceScores { test_example_id: test_id, method: InfluenceMethod::ExpectedTracinIdeal, scores, normalizers })
}
