use nalgebra::{DMatrix, DVector};

use super::SimulatorVariant;
use crate::error::{Error, Result};
use crate::run_model::{batch_counts, ExampleId, Run, TestId};

/// One observed (or hypothetical) loss transition: the loss went from
/// `prev_loss` to `next_loss` while the batch `batch` was consumed.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub run_id: String,
    pub step: usize,
    pub prev_loss: f64,
    pub next_loss: f64,
    /// `(id, multiplicity)` pairs.
    pub batch: Vec<(ExampleId, usize)>,
}

/// Where a design row came from.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignRow {
    pub run_id: String,
    pub step: usize,
    pub prev_loss: f64,
    pub batch: Vec<(ExampleId, usize)>,
}

/// Dense regression system `(X, y)` for one test example.
///
/// For [`SimulatorVariant::Linear`], `X = [Xα Xβ]` with
/// `Xα[s, i] = mult·L_{t-1}` and `Xβ[s, i] = mult` for every example `i` in
/// the batch of row `s`, and `y[s] = L_t`. The additive ablation keeps only
/// `Xβ` and regresses the delta `L_t − L_{t-1}`; the multiplicative ablation
/// keeps only `Xα`.
#[derive(Debug, Clone)]
pub struct DesignProblem {
    pub test_example_id: TestId,
    pub variant: SimulatorVariant,
    pub n: usize,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub rows: Vec<DesignRow>,
}

impl DesignProblem {
    pub fn from_transitions(
        n: usize,
        test_example_id: TestId,
        variant: SimulatorVariant,
        transitions: Vec<Transition>,
    ) -> Result<Self> {
        if transitions.is_empty() {
            return Err(Error::EmptyProblem { test_id: test_example_id });
        }
        let p = variant.columns(n);
        let s = transitions.len();
        let mut x = DMatrix::zeros(s, p);
        let mut y = DVector::zeros(s);
        let mut rows = Vec::with_capacity(s);
        for (r, tr) in transitions.into_iter().enumerate() {
            for &(id, mult) in &tr.batch {
                if id == 0 || id as usize > n {
                    return Err(Error::IdOutOfRange { id: id.into(), n });
                }
                let i = id as usize - 1;
                let m = mult as f64;
                match variant {
                    SimulatorVariant::Linear => {
                        x[(r, i)] += m * tr.prev_loss;
                        x[(r, n + i)] += m;
                    }
                    SimulatorVariant::Additive => x[(r, i)] += m,
                    SimulatorVariant::Multiplicative => x[(r, i)] += m * tr.prev_loss,
                }
            }
            y[r] = match variant {
                SimulatorVariant::Additive => tr.next_loss - tr.prev_loss,
                _ => tr.next_loss,
            };
            rows.push(DesignRow { run_id: tr.run_id, step: tr.step, prev_loss: tr.prev_loss, batch: tr.batch });
        }
        Ok(DesignProblem { test_example_id, variant, n, x, y, rows })
    }

    /// Number of rows `S`.
    pub fn rows_len(&self) -> usize {
        self.x.nrows()
    }

    /// Number of columns `p`.
    pub fn columns(&self) -> usize {
        self.x.ncols()
    }
}

/// Usable transitions of `test_example_id` in `runs`: steps where both
/// `L_{t-1}` and `L_t` were recorded.
pub(crate) fn observed_transitions(runs: &[&Run], test_example_id: TestId) -> Vec<Transition> {
    let mut out = Vec::new();
    for run in runs {
        let Some(tr) = run.trajectory(test_example_id) else { continue };
        for t in 1..=run.len() {
            if let (Some(prev), Some(next)) = (tr.loss_at(t - 1), tr.loss_at(t)) {
                out.push(Transition {
                    run_id: run.run_id().to_string(),
                    step: t,
                    prev_loss: prev,
                    next_loss: next,
                    batch: batch_counts(run.curriculum().batch(t)),
                });
            }
        }
    }
    out
}

/// Assembles the regression problem for one test example over `runs`.
pub fn build_design(runs: &[&Run], test_example_id: TestId, variant: SimulatorVariant) -> Result<DesignProblem> {
    let n = runs.first().map(|r| r.curriculum().n()).ok_or(Error::EmptyProblem { test_id: test_example_id })?;
    if let Some(bad) = runs.iter().find(|r| r.curriculum().n() != n) {
        return Err(Error::validation(
            format!("run {}", bad.run_id()),
            format!("n = {} differs from n = {n}", bad.curriculum().n()),
        ));
    }
    DesignProblem::from_transitions(n, test_example_id, variant, observed_transitions(runs, test_example_id))
}
