//! Prior training-data-attribution methods, both as influence scores and as
//! additive simulators.
//!
//! * TracIn-Ideal sums the *actual* loss drops at the steps where an example
//!   was consumed; its per-occurrence mean is the closed-form additive fit.
//! * TracIn-CP sums *hypothetical* drops `η·⟨∇L(z_i), ∇L(z)⟩` over saved
//!   checkpoints; normalized by the checkpoint count it is the additive fit
//!   to hypothetical losses.
//! * Influence functions use one second-order hypothetical step at the final
//!   checkpoint, `∇L(z_i)ᵀ H⁻¹ ∇L(z)`.

mod checkpoint;
mod hypothetical;
mod influence;
mod rescale;
mod tracin;

pub use checkpoint::{Checkpoint, CheckpointTrace, GradientSource, TabulatedGradients};
pub use hypothetical::{
    hypothetical_additive_fit, hypothetical_additive_fit_multi, hypothetical_linear_fit, hypothetical_linear_fit_multi,
    hypothetical_loss_reduction, hypothetical_transitions, tracin_cp, tracin_cp_multi,
};
pub use influence::{influence_function_score, second_order_additive_fit};
pub use rescale::optimal_rescale;
pub use tracin::{expected_tracin_ideal, tracin_ideal};

use serde::{Deserialize, Serialize};

use crate::docfmt;
use crate::error::{Error, Result};
use crate::fitting::SimulatorParams;
use crate::run_model::{Curriculum, TestId};
use crate::simulate::{simulate, SimulatedTrajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfluenceMethod {
    TracinIdeal,
    ExpectedTracinIdeal,
    TracinCp,
    InfluenceFn,
}

/// Influence `I(z_i, z)` of every training example on one test example.
///
/// `normalizers[i]` is the per-occurrence divisor that turns the score into
/// an additive weight, `B_i = −scores[i] / normalizers[i]`: the occurrence
/// count for TracIn-Ideal, the checkpoint count for TracIn-CP, 1 for
/// influence functions. A zero normalizer marks an absent entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceScores {
    pub test_example_id: TestId,
    pub method: InfluenceMethod,
    pub scores: Vec<f64>,
    pub normalizers: Vec<f64>,
}

impl InfluenceScores {
    pub fn n(&self) -> usize {
        self.scores.len()
    }

    /// `B_i = −I(z_i, z) / normalizer_i`; absent entries map to 0.
    pub fn additive_weights(&self) -> Vec<f64> {
        self.scores.iter().zip(&self.normalizers).map(|(&s, &k)| if k > 0.0 { -s / k } else { 0.0 }).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        #[derive(Serialize)]
        struct Doc<'a> {
            format: &'static str,
            version: u32,
            n: usize,
            #[serde(flatten)]
            scores: &'a InfluenceScores,
        }
        let mut out = docfmt::to_bytes(&Doc { format: "trajsim-influence", version: 1, n: self.n(), scores: self });
        out.push(b'\n');
        out
    }
}

/// Rolls a score vector out as a purely additive simulator (`α ≡ 1`).
pub fn simulate_from_scores(scores: &InfluenceScores, curriculum: &Curriculum, l0: f64) -> Result<SimulatedTrajectory> {
    if scores.scores.iter().chain(&scores.normalizers).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("influence scores must be finite".into()));
    }
    let params = SimulatorParams::additive_only(scores.test_example_id, scores.additive_weights())?;
    simulate(&params, curriculum, l0)
}
