//! Learned training-run simulators.
//!
//! Given logs of past training runs (the batches consumed at each step and
//! the per-step losses of tracked test examples), this crate fits a linear
//! Markov model `L_t = α(c_t)·L_{t-1} + β(c_t)` per test example, rolls it
//! out over counterfactual curricula, and compares it against gradient-based
//! training-data-attribution baselines recast as additive simulators.
//!
//! Module map:
//!
//! * [`run_model`]: curricula, runs, run collections and the run-log format.
//! * [`fitting`]: design-matrix construction, ridge solves, λ selection and
//!   identifiability diagnostics.
//! * [`simulate`]: trajectory rollout and curriculum edits.
//! * [`baselines`]: TracIn-Ideal, TracIn-CP, influence functions and their
//!   additive-simulator forms.
//! * [`toy_lab`]: deterministic ground-truth producers (softmax-regression
//!   trainer, synthetic linear-Markov runs, batching-matrix curricula).
//! * [`analysis`]: trajectory metrics, method comparison and the cost model.

pub mod analysis;
pub mod baselines;
pub mod docfmt;
pub mod error;
pub mod exec;
pub mod fitting;
pub mod run_model;
pub mod simulate;
pub mod toy_lab;

pub use error::{Error, Result};
pub use exec::ExecMode;
pub use fitting::{SimulatorParams, SimulatorVariant};
pub use run_model::{Curriculum, ExampleId, LossTrajectory, Run, RunRole, RunSet, TestId};
pub use simulate::{simulate, CurriculumEdit, SimulatedTrajectory};
