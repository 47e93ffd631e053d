//! Fitting per-test-example simulators from past runs.
//!
//! Each tracked test example gets its own regression problem. Rows are the
//! steps where the loss was recorded both before and after the update, and
//! columns are the per-example multiplicative (`A`) and additive (`B`)
//! weights. The problem is solved in closed form by ridge regression.

mod design;
mod identifiability;
mod lambda;
mod params;
mod ridge;
mod univariate;

pub use design::{build_design, DesignProblem, DesignRow, Transition};
pub use identifiability::{check_identifiability, IdentifiabilityReport};
pub use lambda::{default_lambda_grid, select_lambda, LambdaScore, LambdaSelection};
pub use params::{FitDiagnostics, ParamsDocument, SimulatorParams, SimulatorVariant};
pub use ridge::{numerical_rank, solve_ridge, solve_ridge_system, RidgeSolution};
pub use univariate::{closed_form_additive, fit_univariate_bs1};

use crate::error::Result;
use crate::exec::ExecMode;
use crate::run_model::{Run, TestId};

/// Builds the design for `test_example_id`, solves it at `lambda`, and
/// unpacks the weights into `(A, B)`.
pub fn fit_simulator(
    runs: &[&Run],
    test_example_id: TestId,
    variant: SimulatorVariant,
    lambda: f64,
) -> Result<SimulatorParams> {
    let problem = build_design(runs, test_example_id, variant)?;
    fit_design(&problem, lambda)
}

/// Solves an already-built design. The numerical rank of `X` is always
/// recorded, whatever `lambda` is.
pub fn fit_design(problem: &DesignProblem, lambda: f64) -> Result<SimulatorParams> {
    let solution = solve_ridge(problem, lambda)?;
    let rank = match solution.rank {
        Some(rank) => rank,
        None => numerical_rank(&problem.x).0,
    };
    Ok(SimulatorParams::from_weights(problem, lambda, &solution, rank))
}

/// Fits one simulator per test id. Work is spread according to `mode`;
/// the output order matches `test_ids`.
pub fn fit_all(
    runs: &[&Run],
    test_ids: &[TestId],
    variant: SimulatorVariant,
    lambda: f64,
    mode: ExecMode,
) -> Result<Vec<SimulatorParams>> {
    mode.map(test_ids, |&id| fit_simulator(runs, id, variant, lambda)).into_iter().collect()
}

#[cfg(test)]
mod tests;
