//! Trajectory rollout: `L̂_t = α(c_t)·L̂_{t-1} + β(c_t)` from a known `L_0`.

mod edits;

pub use edits::{apply_edits, CurriculumEdit};

use serde::{Deserialize, Serialize};

use crate::docfmt;
use crate::error::{Error, Result};
use crate::fitting::SimulatorParams;
use crate::run_model::{Curriculum, Run, TestId};

/// Predicted losses `L̂_1..L̂_T` for one test example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedTrajectory {
    pub test_example_id: TestId,
    #[serde(rename = "L0")]
    pub initial_loss: f64,
    pub losses: Vec<f64>,
    /// First step (1-based) whose prediction overflowed to a non-finite value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_non_finite: Option<usize>,
}

impl SimulatedTrajectory {
    pub fn final_loss(&self) -> f64 {
        self.losses.last().copied().unwrap_or(self.initial_loss)
    }

    pub fn is_finite(&self) -> bool {
        self.first_non_finite.is_none()
    }
}

/// Rolls `params` forward over `curriculum` from `l0`. Predictions are not
/// clamped; a blow-up is recorded in `first_non_finite` instead of failing.
pub fn simulate(params: &SimulatorParams, curriculum: &Curriculum, l0: f64) -> Result<SimulatedTrajectory> {
    if !l0.is_finite() {
        return Err(Error::Numeric(format!("initial loss must be finite, got {l0}")));
    }
    let n = params.n();
    if let Some(&bad) = curriculum.steps().iter().flatten().find(|&&id| id as usize > n) {
        return Err(Error::IdOutOfRange { id: bad.into(), n });
    }
    let mut losses = Vec::with_capacity(curriculum.len());
    let mut first_non_finite = None;
    let mut loss = l0;
    for (t, batch) in curriculum.steps().iter().enumerate() {
        loss = params.alpha(batch) * loss + params.beta(batch);
        if first_non_finite.is_none() && !loss.is_finite() {
            first_non_finite = Some(t + 1);
        }
        losses.push(loss);
    }
    Ok(SimulatedTrajectory { test_example_id: params.test_example_id, initial_loss: l0, losses, first_non_finite })
}

/// Simulates every parameter set against `run`'s curriculum from the run's
/// recorded `L_0` for that test example. Output order matches `params_set`.
pub fn simulate_batch(params_set: &[SimulatorParams], run: &Run) -> Vec<Result<SimulatedTrajectory>> {
    params_set
        .iter()
        .map(|p| {
            let tr = run.trajectory(p.test_example_id).ok_or_else(|| Error::MissingLoss {
                run_id: run.run_id().to_string(),
                test_id: p.test_example_id,
                step: 0,
            })?;
            simulate(p, run.curriculum(), tr.initial_loss)
        })
        .collect()
}

/// Applies `edits` left to right to `base_run`'s curriculum and simulates
/// the result from the run's recorded `L_0`.
pub fn what_if(params: &SimulatorParams, base_run: &Run, edits: &[CurriculumEdit]) -> Result<SimulatedTrajectory> {
    let curriculum = apply_edits(base_run.curriculum(), edits)?;
    let tr = base_run.trajectory(params.test_example_id).ok_or_else(|| Error::MissingLoss {
        run_id: base_run.run_id().to_string(),
        test_id: params.test_example_id,
        step: 0,
    })?;
    simulate(params, &curriculum, tr.initial_loss)
}

pub const TRAJECTORIES_FORMAT: &str = "trajsim-trajectories";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoriesDocument {
    pub format: String,
    pub version: u32,
    pub trajectories: Vec<SimulatedTrajectory>,
}

impl TrajectoriesDocument {
    pub fn new(trajectories: Vec<SimulatedTrajectory>) -> Self {
        TrajectoriesDocument { format: TRAJECTORIES_FORMAT.into(), version: 1, trajectories }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = docfmt::to_bytes(self);
        out.push(b'\n');
        out
    }
}
