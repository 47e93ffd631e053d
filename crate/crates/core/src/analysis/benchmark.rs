//! The desk-scale comparison protocol: fit simulators on the past runs of a
//! toy collection (λ chosen on its validation runs), derive TracIn-CP scores
//! from the same runs' checkpoints, and evaluate everything on the future
//! runs.

use std::collections::BTreeMap;

use serde::Serialize;

use super::compare::{compare_methods, EvalReport, Method, RescaledPredictor, SimulatorPredictor, TrajectoryPredictor};
use crate::baselines::{simulate_from_scores, tracin_cp_multi, CheckpointTrace, InfluenceScores};
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::fitting::{default_lambda_grid, fit_all, select_lambda, SimulatorVariant};
use crate::run_model::{ExampleId, Run, TestId};
use crate::toy_lab::RunCollection;

/// Rolls influence scores out as additive simulators (`B̂ = −s/k`).
pub struct InfluencePredictor {
    scores: BTreeMap<TestId, InfluenceScores>,
}

impl InfluencePredictor {
    pub fn new(scores: impl IntoIterator<Item = InfluenceScores>) -> Self {
        InfluencePredictor { scores: scores.into_iter().map(|s| (s.test_example_id, s)).collect() }
    }
}

impl TrajectoryPredictor for InfluencePredictor {
    fn predict(&self, run: &Run, test_id: TestId) -> Result<Vec<f64>> {
        let scores = self
            .scores
            .get(&test_id)
            .ok_or_else(|| Error::validation("predictor", format!("no scores for test example {test_id}")))?;
        let l0 = run
            .trajectory(test_id)
            .ok_or_else(|| Error::MissingLoss { run_id: run.run_id().into(), test_id, step: 0 })?
            .initial_loss;
        Ok(simulate_from_scores(scores, run.curriculum(), l0)?.losses)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOptions {
    pub variants: Vec<SimulatorVariant>,
    pub lambda_grid: Vec<f64>,
    /// Checkpoints kept per fit run for the subsampled TracIn-CP baseline.
    pub tracin_checkpoints: usize,
    /// Also evaluate TracIn-CP over every saved checkpoint.
    pub tracin_all: bool,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        BenchmarkOptions {
            variants: SimulatorVariant::ALL.to_vec(),
            lambda_grid: default_lambda_grid(),
            tracin_checkpoints: 10,
            tracin_all: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkOutcome {
    /// Selected λ per simulator variant.
    pub lambdas: Vec<(SimulatorVariant, f64)>,
    pub report: EvalReport,
}

/// Name under which a TracIn-CP baseline with `k` checkpoints per run (or
/// all of them) is reported.
pub fn tracin_method_name(checkpoints: Option<usize>) -> String {
    match checkpoints {
        Some(k) => format!("tracin-cp-{k}"),
        None => "tracin-cp-all".to_string(),
    }
}

/// Runs the protocol on `collection`. Simulators are reported under their
/// variant names; TracIn-CP baselines are σ-rescaled per trajectory against
/// the actual losses, which can only help them.
pub fn run_benchmark(
    collection: &RunCollection,
    options: &BenchmarkOptions,
    mode: ExecMode,
) -> Result<BenchmarkOutcome> {
    let fit_runs = collection.fit_runs();
    let validation_runs = collection.validation_runs();
    let test_runs = collection.test_runs();
    let test_ids = collection.run_set.test_ids();
    let mut methods = Vec::new();
    let mut lambdas = Vec::new();
    for &variant in &options.variants {
        let lambda = select_lambda(&fit_runs, &validation_runs, &test_ids, variant, &options.lambda_grid, mode)?.lambda;
        let params = fit_all(&fit_runs, &test_ids, variant, lambda, mode)?;
        lambdas.push((variant, lambda));
        methods.push(Method::new(variant.as_str(), SimulatorPredictor::new(params)));
    }

    methods.extend(tracin_methods(&collection.fit_traces(), collection.run_set.n(), &test_ids, options, mode)?);
    let report = compare_methods(&methods, &test_runs, mode)?;
    Ok(BenchmarkOutcome { lambdas, report })
}

/// The TracIn-CP baselines of `options` over `traces` (scores summed across
/// traces for every training example `1..=n`), σ-rescaled.
pub fn tracin_methods(
    traces: &[CheckpointTrace],
    n: usize,
    test_ids: &[TestId],
    options: &BenchmarkOptions,
    mode: ExecMode,
) -> Result<Vec<Method>> {
    let train_ids: Vec<ExampleId> = (1..=n as ExampleId).collect();
    let mut methods = Vec::new();
    let mut push = |name: String, traces: &[CheckpointTrace]| -> Result<()> {
        let scores = tracin_cp_multi(traces, &train_ids, test_ids, mode)?;
        methods.push(Method::new(name, RescaledPredictor(InfluencePredictor::new(scores))));
        Ok(())
    };
    if options.tracin_checkpoints > 0 {
        let sub: Vec<CheckpointTrace> = traces.iter().map(|t| t.subsample(options.tracin_checkpoints)).collect();
        push(tracin_method_name(Some(options.tracin_checkpoints)), &sub)?;
    }
    if options.tracin_all {
        push(tracin_method_name(None), traces)?;
    }
    Ok(methods)
}
