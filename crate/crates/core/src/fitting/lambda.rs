use std::collections::BTreeSet;

use serde::Serialize;

use super::ridge::{solve_ridge, NormalEquations, RidgeSolution};
use super::{build_design, SimulatorParams, SimulatorVariant};
use crate::analysis::all_steps_mse;
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::run_model::{Run, TestId};
use crate::simulate::simulate;

/// `{0} ∪ {10^e : e = −6..=1}`.
pub fn default_lambda_grid() -> Vec<f64> {
    std::iter::once(0.0).chain((-6..=1).map(|e| 10f64.powi(e))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaScore {
    pub lambda: f64,
    /// Mean validation all-steps MSE; `None` when the fit or rollout failed.
    pub mean_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaSelection {
    pub lambda: f64,
    pub scores: Vec<LambdaScore>,
}

/// Grid search for the ridge penalty.
///
/// For each λ, fits every test id on `fit_runs`, simulates each validation
/// run from its recorded `L_0`, and scores the mean over validation runs of
/// the all-steps MSE. The lowest score wins; exact ties go to the larger λ.
pub fn select_lambda(
    fit_runs: &[&Run],
    validation_runs: &[&Run],
    test_ids: &[TestId],
    variant: SimulatorVariant,
    grid: &[f64],
    mode: ExecMode,
) -> Result<LambdaSelection> {
    if grid.is_empty() {
        return Err(Error::Config("λ grid is empty".into()));
    }
    if validation_runs.is_empty() {
        return Err(Error::Config("no validation runs".into()));
    }
    let fit_ids: BTreeSet<&str> = fit_runs.iter().map(|r| r.run_id()).collect();
    if let Some(r) = validation_runs.iter().find(|r| fit_ids.contains(r.run_id())) {
        return Err(Error::validation(format!("run {}", r.run_id()), "appears in both fit and validation runs"));
    }

    // One design (and its normal equations) per test id, reused across the grid.
    let designs: Vec<Option<_>> = mode.map(test_ids, |&id| {
        build_design(fit_runs, id, variant).ok().map(|d| {
            let normal = NormalEquations::new(&d.x, &d.y);
            (d, normal)
        })
    });

    let score = |lambda: f64| -> Option<f64> {
        let mut params = Vec::with_capacity(designs.len());
        for entry in &designs {
            let (design, normal) = entry.as_ref()?;
            let solution = if lambda > 0.0 {
                let weights = normal.solve(lambda).ok()?;
                RidgeSolution { weights, rank: None, rank_deficient: false, rss: f64::NAN }
            } else {
                solve_ridge(design, 0.0).ok()?
            };
            // Diagnostics are not needed for scoring.
            let mut p = SimulatorParams::from_weights(design, lambda, &solution, 0);
            p.diagnostics = None;
            params.push(p);
        }
        let mut total = 0.0;
        for run in validation_runs {
            let mut predicted = Vec::new();
            let mut actual = Vec::new();
            for p in &params {
                let Some(tr) = run.trajectory(p.test_example_id) else { continue };
                let sim = simulate(p, run.curriculum(), tr.initial_loss).ok()?;
                if !sim.is_finite() {
                    return None;
                }
                predicted.push(sim);
                actual.push(tr.clone());
            }
            total += all_steps_mse(&predicted, &actual).ok()?;
        }
        let mean = total / validation_runs.len() as f64;
        mean.is_finite().then_some(mean)
    };

    let scores: Vec<LambdaScore> = mode.map(grid, |&lambda| LambdaScore { lambda, mean_mse: score(lambda) });
    let best = scores.iter().filter_map(|s| s.mean_mse.map(|m| (s.lambda, m))).fold(
        None,
        |best: Option<(f64, f64)>, (lambda, mse)| match best {
            Some((bl, bm)) if mse > bm || (mse == bm && lambda <= bl) => Some((bl, bm)),
            _ => Some((lambda, mse)),
        },
    );
    let (lambda, _) = best.ok_or(Error::NoUsableLambda)?;
    Ok(LambdaSelection { lambda, scores })
}
