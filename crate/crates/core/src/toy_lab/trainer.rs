use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{DatasetConfig, Example, ToyDataset};
use super::model::ToyModel;
use crate::baselines::{Checkpoint, CheckpointTrace, GradientSource};
use crate::docfmt;
use crate::error::{Error, Result};
use crate::run_model::{Curriculum, ExampleId, LossTrajectory, Run, RunRole, TestId};

/// Model plus data; training example id `i` is `dataset.train[i - 1]`, test
/// id `j` is `dataset.test[j - 1]`.
#[derive(Debug, Clone)]
pub struct ToyProblem {
    pub model: ToyModel,
    pub dataset: Arc<ToyDataset>,
}

impl ToyProblem {
    pub fn new(model: ToyModel, dataset: ToyDataset) -> Result<Self> {
        if model.dim != dataset.config.dim || model.classes != dataset.config.classes {
            return Err(Error::Config("model shape does not match the dataset".into()));
        }
        Ok(ToyProblem { model, dataset: Arc::new(dataset) })
    }

    pub fn train_example(&self, id: ExampleId) -> Option<&Example> {
        (id as usize).checked_sub(1).and_then(|i| self.dataset.train.get(i))
    }

    pub fn test_example(&self, id: TestId) -> Option<&Example> {
        (id as usize).checked_sub(1).and_then(|i| self.dataset.test.get(i))
    }

    pub fn test_ids(&self) -> Vec<TestId> {
        (1..=self.dataset.test.len() as TestId).collect()
    }
}

impl GradientSource for ToyProblem {
    fn train_gradient(&self, checkpoint: &Checkpoint, id: ExampleId) -> Option<Vec<f64>> {
        Some(self.model.gradient(&checkpoint.params, self.train_example(id)?))
    }

    fn test_gradient(&self, checkpoint: &Checkpoint, id: TestId) -> Option<Vec<f64>> {
        Some(self.model.gradient(&checkpoint.params, self.test_example(id)?))
    }

    fn test_loss(&self, checkpoint: &Checkpoint, id: TestId) -> Option<f64> {
        Some(self.model.loss(&checkpoint.params, self.test_example(id)?))
    }

    /// Hessian of the mean loss over the whole training pool.
    fn training_hessian(&self, checkpoint: &Checkpoint) -> Option<DMatrix<f64>> {
        let refs: Vec<&Example> = self.dataset.train.iter().collect();
        (!refs.is_empty()).then(|| self.model.mean_hessian(&checkpoint.params, &refs))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EtaSchedule {
    Constant {
        eta: f64,
    },
    /// Linear interpolation from `start` at step 1 to `end` at step `T`.
    LinearDecay {
        start: f64,
        end: f64,
    },
}

impl EtaSchedule {
    /// Learning rate of step `t` (1-based) out of `total`.
    pub fn at(&self, t: usize, total: usize) -> f64 {
        match *self {
            EtaSchedule::Constant { eta } => eta,
            EtaSchedule::LinearDecay { start, end } => {
                if total <= 1 {
                    start
                } else {
                    start + (end - start) * (t.saturating_sub(1)) as f64 / (total - 1) as f64
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        match *self {
            EtaSchedule::Constant { eta } if ok(eta) => Ok(()),
            EtaSchedule::LinearDecay { start, end } if ok(start) && ok(end) => Ok(()),
            _ => Err(Error::Config(format!("learning rates must be positive: {self:?}"))),
        }
    }
}

/// Trains from `θ_0 = 0` with vanilla SGD over `curriculum`, recording the
/// loss of every test example before training and after each step.
///
/// Checkpoints hold `θ_t` for `t ∈ {0, k, 2k, …} ∪ {T}` (`k = checkpoint_every`;
/// `k = 0` keeps only the final state), each with the learning rate of the
/// update taken from it (the last rate for `θ_T`).
pub fn train_toy(
    problem: &ToyProblem,
    run_id: &str,
    curriculum: &Curriculum,
    schedule: &EtaSchedule,
    checkpoint_every: usize,
) -> Result<(Run, CheckpointTrace)> {
    schedule.validate()?;
    let model = &problem.model;
    let pool = problem.dataset.train.len();
    if let Some(&bad) = curriculum.steps().iter().flatten().find(|&&id| id as usize > pool) {
        return Err(Error::IdOutOfRange { id: bad.into(), n: pool });
    }
    let tests = &problem.dataset.test;
    let total = curriculum.len();
    let mut theta = model.zeros();
    let mut losses: Vec<Vec<f64>> = vec![Vec::with_capacity(total); tests.len()];
    let initial: Vec<f64> = tests.iter().map(|z| model.loss(&theta, z)).collect();
    let mut checkpoints = Vec::new();
    let keep = |t: usize| t == total || (checkpoint_every > 0 && t.is_multiple_of(checkpoint_every));
    if keep(0) {
        checkpoints.push(Checkpoint { step: 0, learning_rate: schedule.at(1, total), params: theta.clone() });
    }
    for t in 1..=total {
        let batch: Vec<&Example> =
            curriculum.batch(t).iter().map(|&id| &problem.dataset.train[id as usize - 1]).collect();
        theta = model.sgd_step(&theta, &batch, schedule.at(t, total));
        for (k, z) in tests.iter().enumerate() {
            let l = model.loss(&theta, z);
            if !l.is_finite() {
                return Err(Error::Diverged { step: t, last_good: t - 1 });
            }
            losses[k].push(l);
        }
        if keep(t) {
            let next_rate = schedule.at((t + 1).min(total), total);
            checkpoints.push(Checkpoint { step: t, learning_rate: next_rate, params: theta.clone() });
        }
    }
    let trajectories =
        losses.iter().enumerate().map(|(k, ls)| LossTrajectory::dense(k as TestId + 1, initial[k], ls)).collect();
    let run = Run::new(run_id, RunRole::Past, curriculum.clone(), trajectories)?;
    let source: Arc<dyn GradientSource> = Arc::new(problem.clone());
    let trace = CheckpointTrace::new(run_id, curriculum.n(), checkpoints, source)?;
    Ok((run, trace))
}

/// `epochs` passes over `members`, each independently shuffled and cut into
/// batches of `batch_size` (the last batch of an epoch may be smaller).
pub fn shuffled_epoch_curriculum<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    members: &[ExampleId],
    epochs: usize,
    batch_size: usize,
) -> Result<Curriculum> {
    if batch_size == 0 || epochs == 0 || members.is_empty() {
        return Err(Error::Config("need at least one epoch, one member and batch size ≥ 1".into()));
    }
    let mut steps = Vec::new();
    for _ in 0..epochs {
        let mut order = members.to_vec();
        order.shuffle(rng);
        steps.extend(order.chunks(batch_size).map(<[ExampleId]>::to_vec));
    }
    Curriculum::new(n, steps)
}

#[derive(Serialize, Deserialize)]
struct TraceDoc {
    run_id: String,
    n: usize,
    checkpoints: Vec<Checkpoint>,
}

/// Checkpoint sidecar: the flattened parameters of every checkpoint of every
/// run, plus the model and dataset config needed to rebuild gradients.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TracesDocument {
    format: String,
    version: u32,
    pub model: ToyModel,
    pub dataset: DatasetConfig,
    traces: Vec<TraceDoc>,
}

pub const TRACES_FORMAT: &str = "trajsim-checkpoints";

impl TracesDocument {
    pub fn new(problem: &ToyProblem, traces: &[CheckpointTrace]) -> Self {
        TracesDocument {
            format: TRACES_FORMAT.into(),
            version: 1,
            model: problem.model,
            dataset: problem.dataset.config.clone(),
            traces: traces
                .iter()
                .map(|t| TraceDoc { run_id: t.run_id().into(), n: t.n(), checkpoints: t.checkpoints().to_vec() })
                .collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = docfmt::to_bytes(self);
        out.push(b'\n');
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let doc: TracesDocument =
            serde_json::from_slice(bytes).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })?;
        if doc.format != TRACES_FORMAT || doc.version != 1 {
            return Err(Error::Parse {
                line: 1,
                message: format!("unsupported format {} v{}", doc.format, doc.version),
            });
        }
        Ok(doc)
    }

    /// Regenerates the dataset and rebinds every trace to it.
    pub fn into_traces(self) -> Result<(ToyProblem, Vec<CheckpointTrace>)> {
        let problem = ToyProblem::new(self.model, ToyDataset::generate(&self.dataset)?)?;
        let source: Arc<dyn GradientSource> = Arc::new(problem.clone());
        let traces = self
            .traces
            .into_iter()
            .map(|t| CheckpointTrace::new(t.run_id, t.n, t.checkpoints, source.clone()))
            .collect::<Result<_>>()?;
        Ok((problem, traces))
    }
}
