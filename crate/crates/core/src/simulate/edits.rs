use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::run_model::{Curriculum, ExampleId};

/// Counterfactual edits to a curriculum. Step indices are 1-based and refer
/// to the curriculum as it stands when the edit is applied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurriculumEdit {
    /// Drops every copy of `id`. Steps left with an empty batch are removed.
    RemoveExample { id: ExampleId },
    /// Drops steps `start..=end`.
    RemoveSteps { start: usize, end: usize },
    /// Replaces each copy of `id` with `count` copies in the same batch.
    DuplicateExample { id: ExampleId, count: usize },
    /// New step `j` is old step `permutation[j - 1]`.
    Reorder { permutation: Vec<usize> },
    /// Swaps in a new batch at `step`.
    ReplaceBatch { step: usize, batch: Vec<ExampleId> },
}

impl fmt::Display for CurriculumEdit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurriculumEdit::RemoveExample { id } => write!(f, "remove_example({id})"),
            CurriculumEdit::RemoveSteps { start, end } => write!(f, "remove_steps({start}..={end})"),
            CurriculumEdit::DuplicateExample { id, count } => write!(f, "duplicate_example({id}, {count})"),
            CurriculumEdit::Reorder { permutation } => write!(f, "reorder(len {})", permutation.len()),
            CurriculumEdit::ReplaceBatch { step, .. } => write!(f, "replace_batch({step})"),
        }
    }
}

impl CurriculumEdit {
    fn apply(&self, steps: Vec<Vec<ExampleId>>, n: usize) -> std::result::Result<Vec<Vec<ExampleId>>, String> {
        let t_max = steps.len();
        let check_id = |id: ExampleId| {
            if id == 0 || id as usize > n {
                Err(format!("unknown example id {id} (valid: 1..={n})"))
            } else {
                Ok(())
            }
        };
        let out: Vec<Vec<ExampleId>> = match self {
            CurriculumEdit::RemoveExample { id } => {
                check_id(*id)?;
                steps
                    .into_iter()
                    .map(|b| b.into_iter().filter(|x| x != id).collect::<Vec<_>>())
                    .filter(|b| !b.is_empty())
                    .collect()
            }
            CurriculumEdit::RemoveSteps { start, end } => {
                if *start == 0 || start > end || *end > t_max {
                    return Err(format!("step range {start}..={end} not within 1..={t_max}"));
                }
                steps.into_iter().enumerate().filter(|(i, _)| !(start - 1..*end).contains(i)).map(|(_, b)| b).collect()
            }
            CurriculumEdit::DuplicateExample { id, count } => {
                check_id(*id)?;
                if *count == 0 {
                    return Err("count must be at least 1".into());
                }
                steps
                    .into_iter()
                    .map(|b| {
                        b.into_iter().flat_map(|x| std::iter::repeat_n(x, if x == *id { *count } else { 1 })).collect()
                    })
                    .collect()
            }
            CurriculumEdit::Reorder { permutation } => {
                if permutation.len() != t_max {
                    return Err(format!("permutation has length {}, curriculum has {t_max} steps", permutation.len()));
                }
                let mut seen = vec![false; t_max];
                for &p in permutation {
                    if p == 0 || p > t_max || std::mem::replace(&mut seen[p - 1], true) {
                        return Err(format!("not a permutation of 1..={t_max}"));
                    }
                }
                permutation.iter().map(|&p| steps[p - 1].clone()).collect()
            }
            CurriculumEdit::ReplaceBatch { step, batch } => {
                if *step == 0 || *step > t_max {
                    return Err(format!("step {step} not within 1..={t_max}"));
                }
                if batch.is_empty() {
                    return Err("replacement batch is empty".into());
                }
                for &id in batch {
                    check_id(id)?;
                }
                let mut steps = steps;
                steps[step - 1] = batch.clone();
                steps
            }
        };
        if out.is_empty() {
            return Err("edit would leave an empty curriculum".into());
        }
        Ok(out)
    }
}

/// Applies `edits` left to right. Pure: `base` is not modified.
pub fn apply_edits(base: &Curriculum, edits: &[CurriculumEdit]) -> Result<Curriculum> {
    let n = base.n();
    let mut steps = base.steps().to_vec();
    for (index, edit) in edits.iter().enumerate() {
        steps = edit.apply(steps, n).map_err(|message| Error::Edit { index, edit: edit.to_string(), message })?;
    }
    Curriculum::new(n, steps)
}
