use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::dataset::{DatasetConfig, ToyDataset};
use super::model::ToyModel;
use super::rng::stream_rng;
use super::trainer::{shuffled_epoch_curriculum, train_toy, EtaSchedule, ToyProblem};
use crate::baselines::CheckpointTrace;
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::run_model::{ExampleId, Run, RunRole, RunSet};

/// Flat key-value description of a toy run collection. Every key is
/// optional in the TOML form; missing keys take the desk defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectionConfig {
    /// Size of the training-example pool (`n`).
    pub pool: usize,
    /// Examples sampled (without replacement) from the pool for each run.
    pub per_run: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub runs: usize,
    pub fit_runs: usize,
    pub validation_runs: usize,
    pub test_runs: usize,
    /// Tracked test examples (`m`).
    pub test_examples: usize,
    pub dim: usize,
    pub classes: usize,
    pub separation: f64,
    pub eta: f64,
    /// When set, η decays linearly from `eta` to `eta_end` over each run.
    pub eta_end: Option<f64>,
    pub checkpoint_every: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for CollectionConfig {
    fn default() -> Self {
        CollectionConfig {
            pool: 100,
            per_run: 64,
            epochs: 4,
            batch_size: 4,
            runs: 32,
            fit_runs: 20,
            validation_runs: 2,
            test_runs: 10,
            test_examples: 20,
            dim: 8,
            classes: 3,
            separation: 1.0,
            eta: 0.1,
            eta_end: None,
            checkpoint_every: 1,
            l2: 0.0,
            seed: 0,
        }
    }
}

impl CollectionConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            train: self.pool,
            test: self.test_examples,
            dim: self.dim,
            classes: self.classes,
            separation: self.separation,
            seed: self.seed,
        }
    }

    pub fn model(&self) -> ToyModel {
        ToyModel { dim: self.dim, classes: self.classes, l2: self.l2 }
    }

    pub fn schedule(&self) -> EtaSchedule {
        match self.eta_end {
            Some(end) => EtaSchedule::LinearDecay { start: self.eta, end },
            None => EtaSchedule::Constant { eta: self.eta },
        }
    }

    fn validate(&self) -> Result<()> {
        if self.fit_runs + self.validation_runs + self.test_runs != self.runs {
            return Err(Error::Config(format!(
                "split {}/{}/{} does not sum to runs = {}",
                self.fit_runs, self.validation_runs, self.test_runs, self.runs
            )));
        }
        if self.per_run == 0 || self.per_run > self.pool {
            return Err(Error::Config(format!("per_run = {} must be in [1, pool = {}]", self.per_run, self.pool)));
        }
        if self.test_examples == 0 {
            return Err(Error::Config("need at least one test example".into()));
        }
        Ok(())
    }
}

/// Run ids of each split, in run order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSplit {
    pub fit: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

/// A trained collection: the runs (fit and validation runs tagged past, test
/// runs future), their checkpoint traces in the same order, and the split.
#[derive(Debug, Clone)]
pub struct RunCollection {
    pub config: CollectionConfig,
    pub problem: ToyProblem,
    pub run_set: RunSet,
    pub traces: Vec<CheckpointTrace>,
    pub split: RunSplit,
}

impl RunCollection {
    fn runs_named(&self, ids: &[String]) -> Vec<&Run> {
        ids.iter().filter_map(|id| self.run_set.run(id)).collect()
    }

    pub fn fit_runs(&self) -> Vec<&Run> {
        self.runs_named(&self.split.fit)
    }

    pub fn validation_runs(&self) -> Vec<&Run> {
        self.runs_named(&self.split.validation)
    }

    pub fn test_runs(&self) -> Vec<&Run> {
        self.runs_named(&self.split.test)
    }

    /// Traces of the fit runs.
    pub fn fit_traces(&self) -> Vec<CheckpointTrace> {
        self.traces.iter().filter(|t| self.split.fit.iter().any(|id| id == t.run_id())).cloned().collect()
    }
}

/// Trains `config.runs` toy runs. Run `r` samples `per_run` pool examples and
/// shuffles them per epoch using its own random stream; training itself is
/// deterministic, so runs are generated in parallel without affecting output.
pub fn make_run_collection(config: &CollectionConfig, mode: ExecMode) -> Result<RunCollection> {
    config.validate()?;
    let problem = ToyProblem::new(config.model(), ToyDataset::generate(&config.dataset_config())?)?;
    let schedule = config.schedule();
    let trained = mode.map_range(config.runs, |r| {
        let mut rng = stream_rng(config.seed, 1_000 + r as u64);
        let mut members: Vec<ExampleId> =
            sample(&mut rng, config.pool, config.per_run).into_iter().map(|i| i as ExampleId + 1).collect();
        members.sort_unstable();
        let curriculum = shuffled_epoch_curriculum(&mut rng, config.pool, &members, config.epochs, config.batch_size)?;
        train_toy(&problem, &format!("run-{r:03}"), &curriculum, &schedule, config.checkpoint_every)
    });
    let mut runs = Vec::with_capacity(config.runs);
    let mut traces = Vec::with_capacity(config.runs);
    for (r, result) in trained.into_iter().enumerate() {
        let (run, trace) = result?;
        let role = if r < config.fit_runs + config.validation_runs { RunRole::Past } else { RunRole::Future };
        runs.push(run.with_role(role));
        traces.push(trace);
    }
    let ids: Vec<String> = runs.iter().map(|r| r.run_id().to_string()).collect();
    let (fit, rest) = ids.split_at(config.fit_runs);
    let (validation, test) = rest.split_at(config.validation_runs);
    let split = RunSplit { fit: fit.to_vec(), validation: validation.to_vec(), test: test.to_vec() };
    let run_set = RunSet::with_default_names(config.pool, config.test_examples, runs)?;
    Ok(RunCollection { config: config.clone(), problem, run_set, traces, split })
}
