//! Request and response documents shared by the CLI and the HTTP service,
//! and the operations behind them. Both front ends call exactly these
//! functions, so identical logical requests produce identical bytes.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use trajsim::fitting::{default_lambda_grid, fit_all, select_lambda, ParamsDocument};
use trajsim::simulate::{apply_edits, TrajectoriesDocument};
use trajsim::{
    simulate, Curriculum, CurriculumEdit, ExampleId, ExecMode, Run, RunSet, SimulatedTrajectory, SimulatorVariant,
    TestId,
};

pub const WHATIF_FORMAT: &str = "trajsim-whatif";

/// Failure classes shared by both front ends: the service maps them to
/// status codes, the CLI to exit codes.
#[derive(Debug)]
pub enum ApiError {
    /// The request could not be decoded.
    BadRequest(String),
    /// A params ref, run id or job id that does not exist.
    NotFound(String),
    /// A well-formed request that fails validation.
    Invalid(String),
    Internal(anyhow::Error),
}

impl fmt::Display for ApiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ApiError::BadRequest(m) => write!(f, "malformed request: {m}"),
            ApiError::NotFound(m) => write!(f, "not found: {m}"),
            ApiError::Invalid(m) => write!(f, "invalid request: {m}"),
            ApiError::Internal(e) => write!(f, "internal error: {e:#}"),
        }
    }
}

impl std::error::Error for ApiError {}

impl From<trajsim::Error> for ApiError {
    fn from(e: trajsim::Error) -> Self {
        match e {
            trajsim::Error::Parse { .. } => ApiError::BadRequest(e.to_string()),
            e if e.is_data_error() => ApiError::Invalid(e.to_string()),
            e => ApiError::Internal(e.into()),
        }
    }
}

pub type ApiResult<T> = Result<T, ApiError>;

/// Starting losses: one value for every test example, or one per id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
#[serde(try_from = "serde_json::Value")]
pub enum InitialLoss {
    All(f64),
    PerTest(BTreeMap<TestId, f64>),
}

impl TryFrom<serde_json::Value> for InitialLoss {
    type Error = String;

    // Decoded by hand: untagged enums cannot read integer map keys from
    // JSON's string keys.
    fn try_from(v: serde_json::Value) -> Result<Self, Self::Error> {
        match v {
            serde_json::Value::Number(n) => n.as_f64().map(InitialLoss::All).ok_or_else(|| "L0 out of range".into()),
            serde_json::Value::Object(map) => map
                .into_iter()
                .map(|(k, v)| {
                    let id: TestId = k.parse().map_err(|_| format!("L0 key {k:?} is not a test example id"))?;
                    let loss = v.as_f64().ok_or_else(|| format!("L0 for test example {id} is not a number"))?;
                    Ok((id, loss))
                })
                .collect::<Result<_, String>>()
                .map(InitialLoss::PerTest),
            other => Err(format!("L0 must be a number or an object of per-test numbers, got {other}")),
        }
    }
}

impl InitialLoss {
    fn for_test(&self, id: TestId) -> ApiResult<f64> {
        match self {
            InitialLoss::All(v) => Ok(*v),
            InitialLoss::PerTest(map) => {
                map.get(&id).copied().ok_or_else(|| ApiError::Invalid(format!("no L0 given for test example {id}")))
            }
        }
    }
}

/// A curriculum on the wire: the batches of example ids, step by step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurriculumDocument {
    pub steps: Vec<Vec<ExampleId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateRequest {
    /// Params ref in the store.
    pub params: String,
    pub curriculum: CurriculumDocument,
    #[serde(rename = "L0")]
    pub l0: InitialLoss,
    /// Defaults to every simulator in the params document.
    #[serde(default)]
    pub test_ids: Option<Vec<TestId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfRequest {
    pub params: String,
    pub run_id: String,
    #[serde(default)]
    pub edits: Vec<CurriculumEdit>,
    /// Defaults to every simulator whose test example the run tracks.
    #[serde(default)]
    pub test_ids: Option<Vec<TestId>>,
}

/// Base and edited trajectories of one what-if query, in matching order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfDocument {
    pub format: String,
    pub version: u32,
    pub run_id: String,
    pub edits: Vec<CurriculumEdit>,
    pub base: Vec<SimulatedTrajectory>,
    pub edited: Vec<SimulatedTrajectory>,
}

impl WhatIfDocument {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = trajsim::docfmt::to_bytes(self);
        out.push(b'\n');
        out
    }
}

/// λ for a fit: a fixed value, or `"auto"` to select it on validation runs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "serde_json::Value", into = "serde_json::Value")]
pub enum LambdaChoice {
    #[default]
    Auto,
    Fixed(f64),
}

impl std::str::FromStr for LambdaChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(LambdaChoice::Auto);
        }
        let v: f64 = s.parse().map_err(|_| format!("expected \"auto\" or a number, got {s:?}"))?;
        if v.is_finite() && v >= 0.0 {
            Ok(LambdaChoice::Fixed(v))
        } else {
            Err(format!("λ must be finite and nonnegative, got {v}"))
        }
    }
}

impl TryFrom<serde_json::Value> for LambdaChoice {
    type Error = String;

    fn try_from(v: serde_json::Value) -> Result<Self, Self::Error> {
        match v {
            serde_json::Value::String(s) => s.parse(),
            serde_json::Value::Number(n) => n.as_f64().ok_or("λ out of range")?.to_string().parse(),
            other => Err(format!("expected \"auto\" or a number, got {other}")),
        }
    }
}

impl From<LambdaChoice> for serde_json::Value {
    fn from(c: LambdaChoice) -> Self {
        match c {
            LambdaChoice::Auto => "auto".into(),
            LambdaChoice::Fixed(v) => v.into(),
        }
    }
}

fn default_validation_runs() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitRequest {
    /// Defaults to every tracked test example.
    #[serde(default)]
    pub test_ids: Option<Vec<TestId>>,
    #[serde(default = "default_variant")]
    pub variant: SimulatorVariant,
    #[serde(default)]
    pub lambda: LambdaChoice,
    /// With `"auto"`, the last this-many past runs are held out for λ
    /// selection and the rest are fitted.
    #[serde(default = "default_validation_runs")]
    pub validation_runs: usize,
}

fn default_variant() -> SimulatorVariant {
    SimulatorVariant::Linear
}

impl Default for FitRequest {
    fn default() -> Self {
        FitRequest {
            test_ids: None,
            variant: SimulatorVariant::Linear,
            lambda: LambdaChoice::Auto,
            validation_runs: default_validation_runs(),
        }
    }
}

fn select_ids(available: &[TestId], requested: Option<&[TestId]>, what: &str) -> ApiResult<Vec<TestId>> {
    match requested {
        None => Ok(available.to_vec()),
        Some(ids) => {
            if let Some(bad) = ids.iter().find(|id| !available.contains(id)) {
                return Err(ApiError::Invalid(format!("test example {bad} is not in {what}")));
            }
            Ok(ids.to_vec())
        }
    }
}

/// Rolls each selected simulator out over the request's curriculum.
pub fn simulate_request(params: &ParamsDocument, req: &SimulateRequest) -> ApiResult<TrajectoriesDocument> {
    let curriculum = Curriculum::new(params.n, req.curriculum.steps.clone())?;
    let available: Vec<TestId> = params.simulators.iter().map(|p| p.test_example_id).collect();
    let ids = select_ids(&available, req.test_ids.as_deref(), "the params document")?;
    let trajectories = ids
        .iter()
        .map(|&id| {
            let p = params.get(id).expect("selected ids exist");
            Ok(simulate(p, &curriculum, req.l0.for_test(id)?)?)
        })
        .collect::<ApiResult<Vec<_>>>()?;
    Ok(TrajectoriesDocument::new(trajectories))
}

/// Simulates a run's own curriculum and its edited version from the run's
/// recorded `L_0`.
pub fn whatif_request(params: &ParamsDocument, run: &Run, req: &WhatIfRequest) -> ApiResult<WhatIfDocument> {
    if params.n != run.curriculum().n() {
        return Err(ApiError::Invalid(format!(
            "params cover {} training examples but run {} has {}",
            params.n,
            run.run_id(),
            run.curriculum().n()
        )));
    }
    let edited_curriculum = apply_edits(run.curriculum(), &req.edits)?;
    let available: Vec<TestId> =
        params.simulators.iter().map(|p| p.test_example_id).filter(|&id| run.trajectory(id).is_some()).collect();
    let ids = select_ids(&available, req.test_ids.as_deref(), "both the params document and the run")?;
    let mut base = Vec::with_capacity(ids.len());
    let mut edited = Vec::with_capacity(ids.len());
    for id in ids {
        let p = params.get(id).expect("selected ids exist");
        let l0 = run.trajectory(id).expect("selected ids are tracked").initial_loss;
        base.push(simulate(p, run.curriculum(), l0)?);
        edited.push(simulate(p, &edited_curriculum, l0)?);
    }
    Ok(WhatIfDocument {
        format: WHATIF_FORMAT.into(),
        version: 1,
        run_id: run.run_id().into(),
        edits: req.edits.clone(),
        base,
        edited,
    })
}

/// Fits one simulator per requested test example on the past runs.
pub fn fit_request(runs: &RunSet, req: &FitRequest, mode: ExecMode) -> ApiResult<ParamsDocument> {
    let past = runs.past_runs();
    let ids = select_ids(&runs.test_ids(), req.test_ids.as_deref(), "the run log")?;
    if ids.is_empty() {
        return Err(ApiError::Invalid("no test examples to fit".into()));
    }
    let (fit, lambda) = match req.lambda {
        LambdaChoice::Fixed(lambda) => (past.as_slice(), lambda),
        LambdaChoice::Auto => {
            if req.validation_runs == 0 || req.validation_runs >= past.len() {
                return Err(ApiError::Invalid(format!(
                    "λ selection needs 1 ≤ validation runs < past runs ({}), got {}",
                    past.len(),
                    req.validation_runs
                )));
            }
            let (fit, validation) = past.split_at(past.len() - req.validation_runs);
            let selection = select_lambda(fit, validation, &ids, req.variant, &default_lambda_grid(), mode)?;
            (fit, selection.lambda)
        }
    };
    if fit.is_empty() {
        return Err(ApiError::Invalid("the run log has no past runs to fit".into()));
    }
    Ok(ParamsDocument::new(fit_all(fit, &ids, req.variant, lambda, mode)?)?)
}
