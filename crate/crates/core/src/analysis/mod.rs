//! Trajectory metrics, head-to-head method comparison, the desk-scale
//! benchmark protocol, and the checkpoint/loss cost model.

pub mod benchmark;
mod compare;
mod cost;
mod metrics;

pub use compare::{
    compare_methods, EvalReport, Method, MethodSummary, RescaledPredictor, RunMetrics, SimulatorPredictor,
    TrajectoryPredictor,
};
pub use cost::{cost_model, CostReport};
pub use metrics::{all_steps_mse, final_step_spearman, fractional_ranks, trajectory_squared_error};
