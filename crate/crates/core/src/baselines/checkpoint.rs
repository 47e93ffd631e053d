use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::run_model::{ExampleId, TestId};

/// Saved model state: parameters `θ_t` after `step` updates, and the
/// learning rate of the update taken from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub step: usize,
    pub learning_rate: f64,
    pub params: Vec<f64>,
}

/// Per-example loss, gradient and Hessian access at a checkpoint.
pub trait GradientSource: Send + Sync {
    fn train_gradient(&self, checkpoint: &Checkpoint, id: ExampleId) -> Option<Vec<f64>>;
    fn test_gradient(&self, checkpoint: &Checkpoint, id: TestId) -> Option<Vec<f64>>;
    fn test_loss(&self, checkpoint: &Checkpoint, id: TestId) -> Option<f64>;
    /// Hessian of the training objective at the checkpoint, if available.
    fn training_hessian(&self, _checkpoint: &Checkpoint) -> Option<DMatrix<f64>> {
        None
    }
}

/// Checkpoints of one training run plus the means to evaluate gradients at
/// them.
#[derive(Clone)]
pub struct CheckpointTrace {
    run_id: String,
    n: usize,
    checkpoints: Vec<Checkpoint>,
    source: Arc<dyn GradientSource>,
}

impl fmt::Debug for CheckpointTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CheckpointTrace")
            .field("run_id", &self.run_id)
            .field("n", &self.n)
            .field("checkpoints", &self.checkpoints.len())
            .finish()
    }
}

impl CheckpointTrace {
    pub fn new(
        run_id: impl Into<String>,
        n: usize,
        checkpoints: Vec<Checkpoint>,
        source: Arc<dyn GradientSource>,
    ) -> Result<Self> {
        let run_id = run_id.into();
        for pair in checkpoints.windows(2) {
            if pair[1].step <= pair[0].step {
                return Err(Error::validation(format!("trace {run_id}"), "checkpoint steps must strictly increase"));
            }
            if pair[1].params.len() != pair[0].params.len() {
                return Err(Error::DimensionMismatch { expected: pair[0].params.len(), found: pair[1].params.len() });
            }
        }
        if let Some(c) = checkpoints.iter().find(|c| !(c.learning_rate.is_finite() && c.learning_rate >= 0.0)) {
            return Err(Error::validation(format!("trace {run_id}: step {}", c.step), "invalid learning rate"));
        }
        Ok(CheckpointTrace { run_id, n, checkpoints, source })
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn checkpoints(&self) -> &[Checkpoint] {
        &self.checkpoints
    }

    pub fn source(&self) -> &dyn GradientSource {
        self.source.as_ref()
    }

    pub fn final_checkpoint(&self) -> Option<&Checkpoint> {
        self.checkpoints.last()
    }

    /// `k` checkpoints evenly spaced over the trace (first and last
    /// included). Returns the whole trace when `k` ≥ its length.
    pub fn subsample(&self, k: usize) -> CheckpointTrace {
        let len = self.checkpoints.len();
        let checkpoints = if k >= len {
            self.checkpoints.clone()
        } else if k == 1 {
            vec![self.checkpoints[len - 1].clone()]
        } else {
            (0..k)
                .map(|i| ((i * (len - 1)) as f64 / (k - 1) as f64).round() as usize)
                .map(|idx| self.checkpoints[idx].clone())
                .collect()
        };
        CheckpointTrace { checkpoints, ..self.clone() }
    }

    pub(crate) fn train_gradient(&self, checkpoint: &Checkpoint, id: ExampleId) -> Result<Vec<f64>> {
        self.source
            .train_gradient(checkpoint, id)
            .ok_or_else(|| Error::MissingGradient { step: checkpoint.step, example: format!("training example {id}") })
    }

    pub(crate) fn test_gradient(&self, checkpoint: &Checkpoint, id: TestId) -> Result<Vec<f64>> {
        self.source
            .test_gradient(checkpoint, id)
            .ok_or_else(|| Error::MissingGradient { step: checkpoint.step, example: format!("test example {id}") })
    }

    pub(crate) fn test_loss(&self, checkpoint: &Checkpoint, id: TestId) -> Result<f64> {
        self.source.test_loss(checkpoint, id).ok_or_else(|| Error::MissingGradient {
            step: checkpoint.step,
            example: format!("loss of test example {id}"),
        })
    }
}

/// Gradients, losses and Hessians given explicitly per checkpoint step.
#[derive(Debug, Clone, Default)]
pub struct TabulatedGradients {
    pub train: BTreeMap<(usize, ExampleId), Vec<f64>>,
    pub test: BTreeMap<(usize, TestId), Vec<f64>>,
    pub test_losses: BTreeMap<(usize, TestId), f64>,
    pub hessians: BTreeMap<usize, DMatrix<f64>>,
}

impl GradientSource for TabulatedGradients {
    fn train_gradient(&self, checkpoint: &Checkpoint, id: ExampleId) -> Option<Vec<f64>> {
        self.train.get(&(checkpoint.step, id)).cloned()
    }

    fn test_gradient(&self, checkpoint: &Checkpoint, id: TestId) -> Option<Vec<f64>> {
        self.test.get(&(checkpoint.step, id)).cloned()
    }

    fn test_loss(&self, checkpoint: &Checkpoint, id: TestId) -> Option<f64> {
        self.test_losses.get(&(checkpoint.step, id)).copied()
    }

    fn training_hessian(&self, checkpoint: &Checkpoint) -> Option<DMatrix<f64>> {
        self.hessians.get(&checkpoint.step).cloned()
    }
}
