//! Curricula, runs and run collections, plus the line-delimited run-log format.
//!
//! Ids are 1-based. Training example ids index the `A`/`B` vectors of a
//! simulator (`id - 1`), test example ids index the test-name table.
//!
//! Run-log layout, one JSON document per line:
//!
//! ```text
//! {"format":"trajsim-run-log","version":1,"n":3,"examples":["x1","x2","x3"],"test_examples":["z1"]}
//! {"run_id":"r0","role":"past","steps":[[1],[2]],"trajectories":{"1":{"L0":1.0e0,"losses":{"1":8.0e-1,"2":7.0e-1}}}}
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::docfmt;
use crate::error::{Error, Result};

/// 1-based training example id.
pub type ExampleId = u32;
/// 1-based test example id.
pub type TestId = u32;

pub const RUN_LOG_FORMAT: &str = "trajsim-run-log";
pub const RUN_LOG_VERSION: u32 = 1;

/// Ordered batches of training example ids. Batches are non-empty multisets:
/// an id repeated within a batch counts once per copy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Curriculum {
    n: usize,
    steps: Vec<Vec<ExampleId>>,
}

/// One step at which an example was consumed, with its multiplicity there.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Occurrence {
    pub step: usize,
    pub multiplicity: usize,
}

impl Curriculum {
    pub fn new(n: usize, steps: Vec<Vec<ExampleId>>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::validation("steps", "curriculum length must be at least 1"));
        }
        for (t, batch) in steps.iter().enumerate() {
            if batch.is_empty() {
                return Err(Error::validation(format!("steps[{t}]"), "empty batch"));
            }
            for &id in batch {
                if id == 0 || id as usize > n {
                    return Err(Error::validation(
                        format!("steps[{t}]"),
                        format!("id out of range: {id} not in [1, {n}]"),
                    ));
                }
            }
        }
        Ok(Curriculum { n, steps })
    }

    /// Number of distinct training examples the ids range over.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of steps `T`.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[Vec<ExampleId>] {
        &self.steps
    }

    /// Batch consumed at step `t` (1-based).
    pub fn batch(&self, t: usize) -> &[ExampleId] {
        &self.steps[t - 1]
    }

    pub fn max_batch_size(&self) -> usize {
        self.steps.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Steps (1-based) where `id` is consumed, with multiplicity.
    pub fn occurrence_steps(&self, id: ExampleId) -> Result<Vec<Occurrence>> {
        if id == 0 || id as usize > self.n {
            return Err(Error::IdOutOfRange { id: id.into(), n: self.n });
        }
        Ok(self
            .steps
            .iter()
            .enumerate()
            .filter_map(|(i, batch)| {
                let multiplicity = batch.iter().filter(|&&b| b == id).count();
                (multiplicity > 0).then_some(Occurrence { step: i + 1, multiplicity })
            })
            .collect())
    }

    /// `self` followed by `other`. Both must range over the same `n`.
    pub fn concat(&self, other: &Curriculum) -> Result<Curriculum> {
        if self.n != other.n {
            return Err(Error::validation("concat", format!("n mismatch: {} vs {}", self.n, other.n)));
        }
        let mut steps = self.steps.clone();
        steps.extend(other.steps.iter().cloned());
        Ok(Curriculum { n: self.n, steps })
    }

    /// Same steps, reinterpreted over a larger id universe.
    pub fn with_n(&self, n: usize) -> Result<Curriculum> {
        Curriculum::new(n, self.steps.clone())
    }
}

/// Collapses a batch into `(id, multiplicity)` pairs sorted by id.
pub fn batch_counts(batch: &[ExampleId]) -> Vec<(ExampleId, usize)> {
    let mut counts: BTreeMap<ExampleId, usize> = BTreeMap::new();
    for &id in batch {
        *counts.entry(id).or_default() += 1;
    }
    counts.into_iter().collect()
}

/// Recorded losses of one test example over one run. `losses` is sparse by
/// step index; `initial_loss` (`L_0`) is always present.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTrajectory {
    pub test_example_id: TestId,
    pub initial_loss: f64,
    pub losses: BTreeMap<usize, f64>,
}

impl LossTrajectory {
    /// Trajectory with losses recorded at every step `1..=dense.len()`.
    pub fn dense(test_example_id: TestId, initial_loss: f64, dense: &[f64]) -> Self {
        LossTrajectory {
            test_example_id,
            initial_loss,
            losses: dense.iter().enumerate().map(|(i, &l)| (i + 1, l)).collect(),
        }
    }

    /// Loss at step `t`; step 0 is `L_0`.
    pub fn loss_at(&self, t: usize) -> Option<f64> {
        if t == 0 {
            Some(self.initial_loss)
        } else {
            self.losses.get(&t).copied()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunRole {
    Past,
    Future,
}

impl fmt::Display for RunRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunRole::Past => "past",
            RunRole::Future => "future",
        })
    }
}

/// A curriculum plus the loss trajectories recorded while training on it.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    run_id: String,
    role: RunRole,
    curriculum: Curriculum,
    trajectories: Vec<LossTrajectory>,
}

impl Run {
    /// Validates and builds a run. Trajectories are stored sorted by test id.
    pub fn new(
        run_id: impl Into<String>,
        role: RunRole,
        curriculum: Curriculum,
        mut trajectories: Vec<LossTrajectory>,
    ) -> Result<Self> {
        let run_id = run_id.into();
        let ctx = |field: String| format!("run {run_id}: {field}");
        trajectories.sort_by_key(|tr| tr.test_example_id);
        let t_max = curriculum.len();
        for pair in trajectories.windows(2) {
            if pair[0].test_example_id == pair[1].test_example_id {
                return Err(Error::validation(
                    ctx(format!("trajectories[{}]", pair[0].test_example_id)),
                    "duplicate test example id",
                ));
            }
        }
        for tr in &trajectories {
            let field = format!("trajectories[{}]", tr.test_example_id);
            if !tr.initial_loss.is_finite() {
                return Err(Error::validation(ctx(format!("{field}.L0")), "L0 must be finite"));
            }
            for (&t, &l) in &tr.losses {
                if t == 0 || t > t_max {
                    return Err(Error::validation(
                        ctx(format!("{field}.losses[{t}]")),
                        format!("step index out of range [1, {t_max}]"),
                    ));
                }
                if !l.is_finite() {
                    return Err(Error::validation(ctx(format!("{field}.losses[{t}]")), "loss must be finite"));
                }
            }
        }
        Ok(Run { run_id, role, curriculum, trajectories })
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn role(&self) -> RunRole {
        self.role
    }

    pub fn with_role(mut self, role: RunRole) -> Self {
        self.role = role;
        self
    }

    pub fn curriculum(&self) -> &Curriculum {
        &self.curriculum
    }

    /// Number of steps `T`.
    pub fn len(&self) -> usize {
        self.curriculum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curriculum.is_empty()
    }

    pub fn trajectories(&self) -> &[LossTrajectory] {
        &self.trajectories
    }

    pub fn trajectory(&self, test_id: TestId) -> Option<&LossTrajectory> {
        self.trajectories.binary_search_by_key(&test_id, |tr| tr.test_example_id).ok().map(|i| &self.trajectories[i])
    }

    pub fn test_ids(&self) -> impl Iterator<Item = TestId> + '_ {
        self.trajectories.iter().map(|tr| tr.test_example_id)
    }
}

/// Steps of `run` where `example_id` was consumed.
pub fn occurrence_steps(run: &Run, example_id: ExampleId) -> Result<Vec<Occurrence>> {
    run.curriculum.occurrence_steps(example_id)
}

/// A collection of runs over a shared universe of `n` training examples and
/// `m` test examples.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSet {
    n: usize,
    example_names: Vec<String>,
    test_example_names: Vec<String>,
    runs: Vec<Run>,
}

impl RunSet {
    pub fn new(n: usize, example_names: Vec<String>, test_example_names: Vec<String>, runs: Vec<Run>) -> Result<Self> {
        if example_names.len() != n {
            return Err(Error::validation("header.examples", format!("{} names for n = {n}", example_names.len())));
        }
        let m = test_example_names.len();
        let mut seen = BTreeSet::new();
        for run in &runs {
            if !seen.insert(run.run_id.as_str()) {
                return Err(Error::validation(format!("run {}", run.run_id), "duplicate run_id"));
            }
            if run.curriculum.n != n {
                return Err(Error::validation(
                    format!("run {}: steps", run.run_id),
                    format!("curriculum ranges over n = {} but the set has n = {n}", run.curriculum.n),
                ));
            }
            for id in run.test_ids() {
                if id == 0 || id as usize > m {
                    return Err(Error::validation(
                        format!("run {}: trajectories[{id}]", run.run_id),
                        format!("test id out of range [1, {m}]"),
                    ));
                }
            }
        }
        Ok(RunSet { n, example_names, test_example_names, runs })
    }

    /// Builds a set with generated names `x1..xn` and `z1..zm`.
    pub fn with_default_names(n: usize, m: usize, runs: Vec<Run>) -> Result<Self> {
        RunSet::new(n, (1..=n).map(|i| format!("x{i}")).collect(), (1..=m).map(|i| format!("z{i}")).collect(), runs)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of tracked test examples.
    pub fn m(&self) -> usize {
        self.test_example_names.len()
    }

    pub fn example_names(&self) -> &[String] {
        &self.example_names
    }

    pub fn test_example_names(&self) -> &[String] {
        &self.test_example_names
    }

    pub fn runs(&self) -> &[Run] {
        &self.runs
    }

    pub fn into_runs(self) -> Vec<Run> {
        self.runs
    }

    pub fn run(&self, run_id: &str) -> Option<&Run> {
        self.runs.iter().find(|r| r.run_id == run_id)
    }

    pub fn past_runs(&self) -> Vec<&Run> {
        self.runs.iter().filter(|r| r.role == RunRole::Past).collect()
    }

    pub fn future_runs(&self) -> Vec<&Run> {
        self.runs.iter().filter(|r| r.role == RunRole::Future).collect()
    }

    pub fn test_ids(&self) -> Vec<TestId> {
        (1..=self.m() as TestId).collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderDoc {
    format: String,
    version: u32,
    n: usize,
    examples: Vec<String>,
    test_examples: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunDoc {
    run_id: String,
    role: RunRole,
    steps: Vec<Vec<u64>>,
    #[serde(with = "docfmt::pair_list")]
    trajectories: Vec<(u64, TrajectoryDoc)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryDoc {
    #[serde(rename = "L0", default)]
    l0: Option<f64>,
    #[serde(with = "docfmt::pair_list")]
    losses: Vec<(u64, f64)>,
}

/// Parses a run-log document. Blank lines are ignored.
pub fn parse_run_log(document: &[u8]) -> Result<RunSet> {
    let text =
        std::str::from_utf8(document).map_err(|e| Error::Parse { line: 1, message: format!("invalid UTF-8: {e}") })?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (header_idx, header_line) =
        lines.next().ok_or(Error::Parse { line: 1, message: "missing header line".into() })?;
    let header: HeaderDoc =
        serde_json::from_str(header_line).map_err(|e| Error::Parse { line: header_idx + 1, message: e.to_string() })?;
    if header.format != RUN_LOG_FORMAT || header.version != RUN_LOG_VERSION {
        return Err(Error::Parse {
            line: header_idx + 1,
            message: format!("unsupported format {} v{}", header.format, header.version),
        });
    }
    let n = header.n;
    let mut runs = Vec::new();
    for (idx, line) in lines {
        let doc: RunDoc =
            serde_json::from_str(line).map_err(|e| Error::Parse { line: idx + 1, message: e.to_string() })?;
        runs.push(run_from_doc(doc, n)?);
    }
    RunSet::new(n, header.examples, header.test_examples, runs)
}

fn run_from_doc(doc: RunDoc, n: usize) -> Result<Run> {
    let run_id = doc.run_id;
    let ctx = |field: String| format!("run {run_id}: {field}");
    let mut steps = Vec::with_capacity(doc.steps.len());
    for (t, batch) in doc.steps.into_iter().enumerate() {
        let mut ids = Vec::with_capacity(batch.len());
        for id in batch {
            if id == 0 || id > n as u64 {
                return Err(Error::validation(
                    ctx(format!("steps[{t}]")),
                    format!("id out of range: {id} not in [1, {n}]"),
                ));
            }
            ids.push(id as ExampleId);
        }
        steps.push(ids);
    }
    let curriculum = Curriculum::new(n, steps).map_err(|e| match e {
        Error::Validation { context, message } => Error::validation(ctx(context), message),
        other => other,
    })?;
    let mut trajectories = Vec::with_capacity(doc.trajectories.len());
    for (test_id, tr) in doc.trajectories {
        let field = format!("trajectories[{test_id}]");
        if test_id == 0 || test_id > u64::from(u32::MAX) {
            return Err(Error::validation(ctx(field), "test id out of range"));
        }
        let l0 = tr.l0.ok_or_else(|| Error::validation(ctx(format!("{field}.L0")), "missing L0"))?;
        let mut losses = BTreeMap::new();
        for (t, l) in tr.losses {
            if losses.insert(t as usize, l).is_some() {
                return Err(Error::validation(ctx(format!("{field}.losses[{t}]")), "duplicate step index"));
            }
        }
        trajectories.push(LossTrajectory { test_example_id: test_id as TestId, initial_loss: l0, losses });
    }
    Run::new(run_id.clone(), doc.role, curriculum, trajectories)
}

/// Canonical run-log bytes: header line, then one line per run, each
/// newline-terminated.
pub fn serialize_run_set(rs: &RunSet) -> Vec<u8> {
    let mut out = docfmt::to_bytes(&HeaderDoc {
        format: RUN_LOG_FORMAT.to_string(),
        version: RUN_LOG_VERSION,
        n: rs.n,
        examples: rs.example_names.clone(),
        test_examples: rs.test_example_names.clone(),
    });
    out.push(b'\n');
    for run in &rs.runs {
        out.extend(serialize_run(run));
    }
    out
}

/// One run in its run-log line form, newline-terminated.
pub fn serialize_run(run: &Run) -> Vec<u8> {
    let doc = RunDoc {
        run_id: run.run_id.clone(),
        role: run.role,
        steps: run.curriculum.steps.iter().map(|b| b.iter().map(|&i| u64::from(i)).collect()).collect(),
        trajectories: run
            .trajectories
            .iter()
            .map(|tr| {
                (
                    u64::from(tr.test_example_id),
                    TrajectoryDoc {
                        l0: Some(tr.initial_loss),
                        losses: tr.losses.iter().map(|(&t, &l)| (t as u64, l)).collect(),
                    },
                )
            })
            .collect(),
    };
    let mut out = docfmt::to_bytes(&doc);
    out.push(b'\n');
    out
}
