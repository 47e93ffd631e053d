use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::batching::{build_batching_matrix, curriculum_from_q};
use super::rng::stream_rng;
use super::trainer::shuffled_epoch_curriculum;
use crate::error::{Error, Result};
use crate::fitting::SimulatorParams;
use crate::run_model::{Curriculum, ExampleId, LossTrajectory, Run, RunRole, RunSet, TestId};

/// How each synthetic run draws its curriculum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurriculumSource {
    /// The block-diagonal batching curriculum repeated `repeats` times. With
    /// `relabel`, each run applies its own random permutation of example ids,
    /// which keeps the block structure but varies who is batched with whom.
    QMatrix { k: usize, repeats: usize, relabel: bool },
    /// `epochs` independent shuffles of all `n` examples in batches of
    /// `batch_size`.
    ShuffledEpochs { epochs: usize, batch_size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum L0Sampler {
    Fixed { value: f64 },
    Uniform { low: f64, high: f64 },
}

/// Runs whose losses follow `L_t = α(c_t)·L_{t−1} + β(c_t) + ε_t` with
/// `ε_t ~ N(0, noise_sigma²)` fed back into the next step. With
/// `noise_sigma = 0` every trajectory is an exact rollout of its simulator.
///
/// Test example ids are taken from `true_params`, which must share `n`. Run
/// `r` draws from its own random stream, so runs are independent of
/// `run_count`. All runs are tagged past.
pub fn generate_synthetic_runs(
    true_params: &[SimulatorParams],
    run_count: usize,
    source: &CurriculumSource,
    l0: &L0Sampler,
    noise_sigma: f64,
    seed: u64,
) -> Result<RunSet> {
    let first = true_params.first().ok_or_else(|| Error::Config("no simulator parameters given".into()))?;
    let n = first.n();
    if true_params.iter().any(|p| p.n() != n) {
        return Err(Error::Config("simulator parameters disagree on n".into()));
    }
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(Error::Config(format!("noise_sigma must be finite and nonnegative, got {noise_sigma}")));
    }
    let l0_dist = match *l0 {
        L0Sampler::Fixed { value } if value.is_finite() => None,
        L0Sampler::Uniform { low, high } if low.is_finite() && high.is_finite() && low < high => {
            Some(Uniform::new(low, high).map_err(|e| Error::Config(e.to_string()))?)
        }
        _ => return Err(Error::Config(format!("invalid L0 sampler {l0:?}"))),
    };
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let base_q = match source {
        CurriculumSource::QMatrix { k, repeats, .. } => {
            Some(curriculum_from_q(&build_batching_matrix(n, *k)?, *repeats)?)
        }
        CurriculumSource::ShuffledEpochs { .. } => None,
    };
    let m = true_params.iter().map(|p| p.test_example_id as usize).max().unwrap_or(0);

    let mut runs = Vec::with_capacity(run_count);
    for r in 0..run_count {
        let mut rng = stream_rng(seed, r as u64 + 1);
        let curriculum = match (source, &base_q) {
            (CurriculumSource::QMatrix { relabel: true, .. }, Some(base)) => {
                let mut perm: Vec<ExampleId> = (1..=n as ExampleId).collect();
                perm.shuffle(&mut rng);
                let steps = base.steps().iter().map(|b| b.iter().map(|&i| perm[i as usize - 1]).collect()).collect();
                Curriculum::new(n, steps)?
            }
            (_, Some(base)) => base.clone(),
            (CurriculumSource::ShuffledEpochs { epochs, batch_size }, None) => {
                let members: Vec<ExampleId> = (1..=n as ExampleId).collect();
                shuffled_epoch_curriculum(&mut rng, n, &members, *epochs, *batch_size)?
            }
            (CurriculumSource::QMatrix { .. }, None) => unreachable!("Q curriculum is built up front"),
        };
        let trajectories = true_params
            .iter()
            .map(|p| {
                let start = match l0_dist {
                    Some(d) => d.sample(&mut rng),
                    None => match *l0 {
                        L0Sampler::Fixed { value } => value,
                        L0Sampler::Uniform { .. } => unreachable!(),
                    },
                };
                let mut loss = start;
                let losses: Vec<f64> = curriculum
                    .steps()
                    .iter()
                    .map(|batch| {
                        loss = p.alpha(batch) * loss + p.beta(batch);
                        if noise_sigma > 0.0 {
                            loss += noise.sample(&mut rng);
                        }
                        loss
                    })
                    .collect();
                LossTrajectory::dense(p.test_example_id as TestId, start, &losses)
            })
            .collect();
        runs.push(Run::new(format!("syn-{r:03}"), RunRole::Past, curriculum, trajectories)?);
    }
    RunSet::with_default_names(n, m, runs)
}
