use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::metrics::{all_steps_mse, final_step_spearman};
use crate::baselines::optimal_rescale;
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::fitting::SimulatorParams;
use crate::run_model::{Run, TestId};
use crate::simulate::{simulate, SimulatedTrajectory};

/// Something that predicts `L̂_1..L̂_T` for a test example on a run.
///
/// Predictors receive the whole run so that methods allowed to peek at the
/// ground truth (the optimal σ rescaling, the oracle) can do so.
pub trait TrajectoryPredictor: Send + Sync {
    fn predict(&self, run: &Run, test_id: TestId) -> Result<Vec<f64>>;
}

impl<F> TrajectoryPredictor for F
where
    F: Fn(&Run, TestId) -> Result<Vec<f64>> + Send + Sync,
{
    fn predict(&self, run: &Run, test_id: TestId) -> Result<Vec<f64>> {
        self(run, test_id)
    }
}

/// Fitted simulators keyed by test id, rolled out from the run's `L_0`.
pub struct SimulatorPredictor {
    params: BTreeMap<TestId, SimulatorParams>,
}

impl SimulatorPredictor {
    pub fn new(params: impl IntoIterator<Item = SimulatorParams>) -> Self {
        SimulatorPredictor { params: params.into_iter().map(|p| (p.test_example_id, p)).collect() }
    }
}

impl TrajectoryPredictor for SimulatorPredictor {
    fn predict(&self, run: &Run, test_id: TestId) -> Result<Vec<f64>> {
        let params = self
            .params
            .get(&test_id)
            .ok_or_else(|| Error::validation("predictor", format!("no simulator for test example {test_id}")))?;
        let l0 = run
            .trajectory(test_id)
            .ok_or_else(|| Error::MissingLoss { run_id: run.run_id().into(), test_id, step: 0 })?
            .initial_loss;
        Ok(simulate(params, run.curriculum(), l0)?.losses)
    }
}

/// Wraps a predictor and rescales each trajectory by the σ minimizing its
/// squared error against the recorded losses.
pub struct RescaledPredictor<P>(pub P);

impl<P: TrajectoryPredictor> TrajectoryPredictor for RescaledPredictor<P> {
    fn predict(&self, run: &Run, test_id: TestId) -> Result<Vec<f64>> {
        let predicted = self.0.predict(run, test_id)?;
        let actual = run.trajectory(test_id).ok_or_else(|| Error::MissingLoss {
            run_id: run.run_id().into(),
            test_id,
            step: 0,
        })?;
        let (p, a): (Vec<f64>, Vec<f64>) =
            actual.losses.iter().filter_map(|(&t, &l)| predicted.get(t - 1).map(|&p| (p, l))).unzip();
        let (sigma, _) = optimal_rescale(&p, &a)?;
        Ok(predicted.iter().map(|v| sigma * v).collect())
    }
}

pub struct Method {
    pub name: String,
    pub predictor: Box<dyn TrajectoryPredictor>,
}

impl Method {
    pub fn new(name: impl Into<String>, predictor: impl TrajectoryPredictor + 'static) -> Self {
        Method { name: name.into(), predictor: Box::new(predictor) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub run_id: String,
    pub mse: Option<f64>,
    /// `None` when ρ is undefined (constant finals) or the cell failed.
    pub spearman: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub name: String,
    pub mse_mean: Option<f64>,
    pub mse_std: Option<f64>,
    pub spearman_mean: Option<f64>,
    pub spearman_std: Option<f64>,
    pub spearman_undefined: usize,
    pub failed_runs: usize,
    pub runs: Vec<RunMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub run_count: usize,
    pub test_example_count: usize,
    pub methods: Vec<MethodSummary>,
}

impl EvalReport {
    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.name == name)
    }

    /// Aligned plain-text table: method, all-steps MSE, final-step ρ (mean ± std over runs).
    pub fn to_table(&self) -> String {
        let fmt = |mean: Option<f64>, std: Option<f64>| match (mean, std) {
            (Some(m), Some(s)) => format!("{m:.4} ± {s:.4}"),
            _ => "n/a".to_string(),
        };
        let width = self.methods.iter().map(|m| m.name.len()).max().unwrap_or(6).max(6);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>20}  {:>20}", "method", "all-steps MSE", "final-step Spearman");
        for m in &self.methods {
            let _ = writeln!(
                out,
                "{:<width$}  {:>20}  {:>20}",
                m.name,
                fmt(m.mse_mean, m.mse_std),
                fmt(m.spearman_mean, m.spearman_std)
            );
        }
        let _ = writeln!(out, "({} runs, {} test examples)", self.run_count, self.test_example_count);
        out
    }
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

fn evaluate_cell(method: &Method, run: &Run) -> RunMetrics {
    let result = (|| -> Result<(f64, Option<f64>)> {
        let mut predicted = Vec::new();
        for tr in run.trajectories() {
            let losses = method.predictor.predict(run, tr.test_example_id)?;
            if losses.len() != run.len() {
                return Err(Error::DimensionMismatch { expected: run.len(), found: losses.len() });
            }
            if let Some(t) = losses.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite prediction at step {}", t + 1)));
            }
            predicted.push(SimulatedTrajectory {
                test_example_id: tr.test_example_id,
                initial_loss: tr.initial_loss,
                losses,
                first_non_finite: None,
            });
        }
        let mse = all_steps_mse(&predicted, run.trajectories())?;
        let t_final = run.len();
        let predicted_finals: BTreeMap<TestId, f64> =
            predicted.iter().map(|p| (p.test_example_id, p.final_loss())).collect();
        let actual_finals: BTreeMap<TestId, f64> =
            run.trajectories().iter().filter_map(|tr| tr.loss_at(t_final).map(|l| (tr.test_example_id, l))).collect();
        Ok((mse, final_step_spearman(&predicted_finals, &actual_finals).ok()))
    })();
    match result {
        Ok((mse, spearman)) => RunMetrics { run_id: run.run_id().into(), mse: Some(mse), spearman, error: None },
        Err(e) => RunMetrics { run_id: run.run_id().into(), mse: None, spearman: None, error: Some(e.to_string()) },
    }
}

/// Simulates every method on every run from the recorded `L_0` and reports
/// per-run all-steps MSE and final-step Spearman ρ, aggregated as mean ± std
/// (population) over runs. A failing (method, run) cell is recorded, not fatal.
pub fn compare_methods(methods: &[Method], future_runs: &[&Run], mode: ExecMode) -> Result<EvalReport> {
    if future_runs.is_empty() {
        return Err(Error::EmptyComparison);
    }
    let cells: Vec<(usize, usize)> =
        (0..methods.len()).flat_map(|m| (0..future_runs.len()).map(move |r| (m, r))).collect();
    let metrics = mode.map(&cells, |&(m, r)| evaluate_cell(&methods[m], future_runs[r]));
    let mut metrics = metrics.into_iter();
    let summaries = methods
        .iter()
        .map(|method| {
            let runs: Vec<RunMetrics> = metrics.by_ref().take(future_runs.len()).collect();
            let mses: Vec<f64> = runs.iter().filter_map(|r| r.mse).collect();
            let rhos: Vec<f64> = runs.iter().filter_map(|r| r.spearman).collect();
            let failed_runs = runs.iter().filter(|r| r.error.is_some()).count();
            let (mse_mean, mse_std) = mean_std(&mses);
            let (spearman_mean, spearman_std) = mean_std(&rhos);
            MethodSummary {
                name: method.name.clone(),
                mse_mean,
                mse_std,
                spearman_mean,
                spearman_std,
                spearman_undefined: runs.len() - failed_runs - rhos.len(),
                failed_runs,
                runs,
            }
        })
        .collect();
    let test_example_count = future_runs.iter().map(|r| r.trajectories().len()).max().unwrap_or(0);
    Ok(EvalReport { run_count: future_runs.len(), test_example_count, methods: summaries })
}
