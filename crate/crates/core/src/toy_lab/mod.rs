//! Ground-truth producers for tests, benchmarks and the CLI `generate`
//! command.
//!
//! * [`ToyModel`]/[`ToyDataset`]: multinomial softmax regression on
//!   Gaussian-mixture features, trained with vanilla SGD by [`train_toy`].
//!   Convex, with analytic gradients and Hessians.
//! * [`generate_synthetic_runs`]: runs whose losses follow a known linear
//!   Markov model exactly (plus optional Gaussian noise).
//! * [`build_batching_matrix`]/[`curriculum_from_q`]: the block-diagonal
//!   batching curriculum that makes the linear fit identifiable in `2n` steps.

mod batching;
mod collection;
mod dataset;
mod model;
mod rng;
mod synthetic;
mod trainer;

pub use batching::{build_batching_matrix, curriculum_from_q, BatchingMatrix};
pub use collection::{make_run_collection, CollectionConfig, RunCollection, RunSplit};
pub use dataset::{DatasetConfig, Example, ToyDataset};
pub use model::ToyModel;
pub use rng::stream_rng;
pub use synthetic::{generate_synthetic_runs, CurriculumSource, L0Sampler};
pub use trainer::{shuffled_epoch_curriculum, train_toy, EtaSchedule, ToyProblem, TracesDocument};
