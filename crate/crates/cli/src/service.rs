//! HTTP front end over a [`Store`].
//!
//! Every handler reads an immutable snapshot (the run set never changes,
//! params refs are append-only), so identical requests get identical
//! responses. `/fit` runs on the blocking pool and is tracked as a job.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::Serialize;
use trajsim::run_model::serialize_run;
use trajsim::{ExecMode, RunRole, TestId};

use crate::api::{fit_request, simulate_request, whatif_request, ApiError, FitRequest, SimulateRequest, WhatIfRequest};
use crate::store::Store;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobStatus {
    pub job_id: String,
    pub state: JobState,
    #[serde(rename = "params", skip_serializing_if = "Option::is_none")]
    pub params_ref: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub struct AppState {
    store: Arc<Store>,
    mode: ExecMode,
    jobs: Mutex<BTreeMap<String, JobStatus>>,
    next_job: AtomicU64,
}

impl AppState {
    pub fn new(store: Store, mode: ExecMode) -> Arc<Self> {
        Arc::new(AppState {
            store: Arc::new(store),
            mode,
            jobs: Mutex::new(BTreeMap::new()),
            next_job: AtomicU64::new(1),
        })
    }

    pub fn store(&self) -> &Store {
        &self.store
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, message) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::Invalid(m) => (StatusCode::UNPROCESSABLE_ENTITY, m),
            ApiError::Internal(e) => {
                tracing::error!(error = ?e, "request failed");
                (StatusCode::INTERNAL_SERVER_ERROR, "internal error".to_string())
            }
        };
        (status, json_bytes(&serde_json::json!({ "error": message }))).into_response()
    }
}

fn json_bytes<T: Serialize + ?Sized>(value: &T) -> Response {
    let mut body = trajsim::docfmt::to_bytes(value);
    body.push(b'\n');
    document(body)
}

fn document(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

fn decode<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(e.to_string()))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/runs", get(list_runs))
        .route("/runs/{id}", get(get_run))
        .route("/params", get(list_params))
        .route("/params/{reference}", get(get_params))
        .route("/simulate", post(post_simulate))
        .route("/whatif", post(post_whatif))
        .route("/fit", post(post_fit))
        .route("/jobs/{id}", get(get_job))
        .with_state(state)
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    json_bytes(&serde_json::json!({
        "status": "ok",
        "runs": state.store.runs().runs().len(),
        "params": state.store.list_params().len(),
    }))
}

#[derive(Serialize)]
struct RunSummary<'a> {
    run_id: &'a str,
    role: RunRole,
    steps: usize,
    test_ids: Vec<TestId>,
}

async fn list_runs(State(state): State<Arc<AppState>>) -> Response {
    let mut runs: Vec<RunSummary> = state
        .store
        .runs()
        .runs()
        .iter()
        .map(|r| RunSummary { run_id: r.run_id(), role: r.role(), steps: r.len(), test_ids: r.test_ids().collect() })
        .collect();
    runs.sort_by(|a, b| a.run_id.cmp(b.run_id));
    json_bytes(&serde_json::json!({ "n": state.store.runs().n(), "runs": runs }))
}

async fn get_run(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let run = state.store.runs().run(&id).ok_or_else(|| ApiError::NotFound(format!("run {id}")))?;
    Ok(document(serialize_run(run)))
}

async fn list_params(State(state): State<Arc<AppState>>) -> Response {
    json_bytes(&serde_json::json!({ "params": state.store.list_params() }))
}

async fn get_params(State(state): State<Arc<AppState>>, Path(reference): Path<String>) -> Result<Response, ApiError> {
    let stored = state.store.params(&reference).ok_or_else(|| ApiError::NotFound(format!("params {reference}")))?;
    Ok(document(stored.bytes.clone()))
}

async fn post_simulate(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: SimulateRequest = decode(&body)?;
    let stored = state.store.params(&req.params).ok_or_else(|| ApiError::NotFound(format!("params {}", req.params)))?;
    Ok(document(simulate_request(&stored.document, &req)?.to_bytes()))
}

async fn post_whatif(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: WhatIfRequest = decode(&body)?;
    let stored = state.store.params(&req.params).ok_or_else(|| ApiError::NotFound(format!("params {}", req.params)))?;
    let run = state.store.runs().run(&req.run_id).ok_or_else(|| ApiError::NotFound(format!("run {}", req.run_id)))?;
    Ok(document(whatif_request(&stored.document, run, &req)?.to_bytes()))
}

async fn post_fit(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: FitRequest = decode(&body)?;
    let known = state.store.runs().test_ids();
    if let Some(bad) = req.test_ids.iter().flatten().find(|id| !known.contains(id)) {
        return Err(ApiError::Invalid(format!("test example {bad} is not in the run log")));
    }
    let job_id = format!("job-{:04}", state.next_job.fetch_add(1, Ordering::SeqCst));
    let running = JobStatus { job_id: job_id.clone(), state: JobState::Running, params_ref: None, error: None };
    state.jobs.lock().expect("jobs lock").insert(job_id.clone(), running.clone());
    tracing::info!(%job_id, variant = %req.variant.as_str(), "fit job started");

    let worker = state.clone();
    let id = job_id.clone();
    tokio::task::spawn_blocking(move || {
        let outcome = fit_request(worker.store.runs(), &req, worker.mode)
            .and_then(|doc| worker.store.append_params(doc).map_err(ApiError::Internal));
        let status = match outcome {
            Ok(reference) => {
                tracing::info!(job_id = %id, %reference, "fit job succeeded");
                JobStatus { job_id: id.clone(), state: JobState::Succeeded, params_ref: Some(reference), error: None }
            }
            Err(e) => {
                tracing::warn!(job_id = %id, error = %e, "fit job failed");
                let message = match e {
                    ApiError::Internal(_) => "internal error".to_string(),
                    other => other.to_string(),
                };
                JobStatus { job_id: id.clone(), state: JobState::Failed, params_ref: None, error: Some(message) }
            }
        };
        worker.jobs.lock().expect("jobs lock").insert(id, status);
    });
    Ok((StatusCode::ACCEPTED, json_bytes(&running)).into_response())
}

async fn get_job(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let job = state.jobs.lock().expect("jobs lock").get(&id).cloned();
    job.map(|j| json_bytes(&j)).ok_or_else(|| ApiError::NotFound(format!("job {id}")))
}

/// Serves `state` on `addr` until Ctrl-C.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, store = %state.store.root().display(), "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
