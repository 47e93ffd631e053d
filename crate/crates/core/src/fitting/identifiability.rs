use serde::Serialize;

use super::{numerical_rank, DesignProblem, SimulatorVariant};
use crate::run_model::ExampleId;

/// Rank diagnostics for the `λ = 0` problem.
///
/// The three flagged conditions each rule out a unique solution:
/// 1. fewer rows than columns;
/// 2. an example observed on fewer than two steps (one step for the
///    single-block ablations), which makes its `Xα` column a multiple of its
///    `Xβ` column or leaves it empty;
/// 3. an example whose `L_{t-1}` is the same at every occurrence, which
///    again makes `Xα(i)` parallel to `Xβ(i)` (linear variant only).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentifiabilityReport {
    pub variant: SimulatorVariant,
    pub n: usize,
    pub rows: usize,
    pub columns: usize,
    pub rank: usize,
    pub tolerance: f64,
    pub singular_values: Vec<f64>,
    pub too_few_rows: bool,
    pub under_observed: Vec<ExampleId>,
    pub collinear: Vec<ExampleId>,
    pub full_rank: bool,
}

impl IdentifiabilityReport {
    pub fn all_conditions_pass(&self) -> bool {
        !self.too_few_rows && self.under_observed.is_empty() && self.collinear.is_empty()
    }
}

pub fn check_identifiability(problem: &DesignProblem) -> IdentifiabilityReport {
    let n = problem.n;
    let (rank, singular_values, tolerance) = numerical_rank(&problem.x);
    let rows = problem.rows_len();
    let columns = problem.columns();

    let mut prev_losses: Vec<Vec<f64>> = vec![Vec::new(); n];
    for row in &problem.rows {
        for &(id, _) in &row.batch {
            prev_losses[id as usize - 1].push(row.prev_loss);
        }
    }
    let needed = match problem.variant {
        SimulatorVariant::Linear => 2,
        _ => 1,
    };
    let under_observed = (1..=n as ExampleId).filter(|&id| prev_losses[id as usize - 1].len() < needed).collect();
    let collinear = if problem.variant == SimulatorVariant::Linear {
        (1..=n as ExampleId)
            .filter(|&id| {
                let ls = &prev_losses[id as usize - 1];
                ls.len() >= 2 && ls.iter().all(|&l| (l - ls[0]).abs() <= 1e-12 * ls[0].abs().max(1.0))
            })
            .collect()
    } else {
        Vec::new()
    };
    IdentifiabilityReport {
        variant: problem.variant,
        n,
        rows,
        columns,
        rank,
        tolerance,
        singular_values,
        too_few_rows: rows < columns,
        under_observed,
        collinear,
        full_rank: rank == columns,
    }
}
