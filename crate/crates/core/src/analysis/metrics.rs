use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::run_model::{LossTrajectory, TestId};
use crate::simulate::SimulatedTrajectory;

/// Sum of squared errors of `predicted` (`L̂_1..L̂_T`) against the recorded
/// steps of `actual`, with the number of compared steps. Step 0 is excluded.
pub fn trajectory_squared_error(predicted: &[f64], actual: &LossTrajectory) -> Result<(f64, usize)> {
    let mut sum = 0.0;
    let mut count = 0;
    for (&t, &l) in &actual.losses {
        let p = *predicted.get(t - 1).ok_or(Error::DimensionMismatch { expected: t, found: predicted.len() })?;
        sum += (l - p) * (l - p);
        count += 1;
    }
    Ok((sum, count))
}

/// All-steps MSE: per test example, the mean squared error over its compared
/// steps; then the mean over test examples. Sparse actuals are compared only
/// where recorded.
pub fn all_steps_mse(predicted: &[SimulatedTrajectory], actual: &[LossTrajectory]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::validation(
            "all_steps_mse",
            format!("{} predicted vs {} actual trajectories", predicted.len(), actual.len()),
        ));
    }
    let by_id: BTreeMap<TestId, &LossTrajectory> = actual.iter().map(|a| (a.test_example_id, a)).collect();
    let mut total = 0.0;
    let mut examples = 0usize;
    for p in predicted {
        let a = by_id.get(&p.test_example_id).ok_or_else(|| {
            Error::validation("all_steps_mse", format!("no actual trajectory for test example {}", p.test_example_id))
        })?;
        let (sse, count) = trajectory_squared_error(&p.losses, a)?;
        if count > 0 {
            total += sse / count as f64;
            examples += 1;
        }
    }
    if examples == 0 {
        return Err(Error::EmptyComparison);
    }
    Ok(total / examples as f64)
}

/// Average (fractional) ranks, 1-based. Tied values share the mean of the
/// positions they occupy.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero rank variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's ρ between predicted and actual final losses over the test ids
/// present in both maps (Pearson correlation of fractional ranks).
pub fn final_step_spearman(predicted: &BTreeMap<TestId, f64>, actual: &BTreeMap<TestId, f64>) -> Result<f64> {
    let (p, a): (Vec<f64>, Vec<f64>) = predicted.iter().filter_map(|(id, &p)| actual.get(id).map(|&a| (p, a))).unzip();
    if p.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!("{} common test examples, need at least 2", p.len())));
    }
    if p.iter().chain(&a).any(|v| !v.is_finite()) {
        return Err(Error::UndefinedCorrelation("non-finite final loss".into()));
    }
    pearson(&fractional_ranks(&p), &fractional_ranks(&a))
}
