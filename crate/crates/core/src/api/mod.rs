//! Local HTTP control interface over a workspace.
//!
//! Reads come straight from the session files. Every mutation goes through
//! one worker thread that opens the pipeline (taking the workspace lock)
//! per command, so API commands, and terminal commands in other processes,
//! never write concurrently.
//!
//! | Method | Path | Result |
//! |---|---|---|
//! | GET | `/api/session` | session record |
//! | GET | `/api/artifacts` | artifact registry |
//! | GET | `/api/artifacts/{id}` | `{artifact, content, editable}` |
//! | PUT | `/api/artifacts/{id}` | replace a pending structure/test file (body: raw text) |
//! | POST | `/api/artifacts/{id}/approve` | `{artifact, modified}` |
//! | POST | `/api/step` | `202 {command_id}`; outcome arrives as a `step_completed` event |
//! | POST | `/api/resume` | `202 {command_id}`; leaves an aborted state |
//! | GET | `/api/events?cursor=&timeout_ms=` | `{events, next_cursor}` (long-poll) |
//! | GET | `/api/transcript?from=` | transcript records with `seq >= from` |
//! | GET | `/api/metrics` | metrics report |
//!
//! Every response carries `X-Onx-Revision`, the session revision after the
//! request. Errors are `{"error": message}` with 404 (unknown artifact),
//! 409 (contract violation, not pending, session done), 422
//! (configuration or schema error) or 423 (workspace locked).

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::{Duration, Instant};

use axum::extract::{Path as UrlPath, Query, Request, State};
use axum::http::{HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::oneshot;
use tracing::{error, info};

use crate::llm::read_transcript;
use crate::pipeline::{Artifact, Phase, Pipeline, PipelineError, PipelineOptions};
use crate::spec::TargetProfile;
use crate::store::{
    compute_metrics, read_events, read_session, EventKind, StoreError, EVENTS_FILE,
    TRANSCRIPT_FILE,
};

pub const REVISION_HEADER: &str = "x-onx-revision";
const MAX_POLL: Duration = Duration::from_secs(30);
const POLL_INTERVAL: Duration = Duration::from_millis(50);

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let status = match &e {
            PipelineError::UnknownArtifact(_) => StatusCode::NOT_FOUND,
            PipelineError::NotPending(_) | PipelineError::Contract(_) => StatusCode::CONFLICT,
            PipelineError::Store(StoreError::ImmutabilityBreach { .. }) => StatusCode::CONFLICT,
            PipelineError::Lock(_) => StatusCode::LOCKED,
            PipelineError::Config(_) | PipelineError::Schema(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match e {
            StoreError::NoSession(_) => StatusCode::NOT_FOUND,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type Reply<T> = oneshot::Sender<Result<T, ApiError>>;

enum Job {
    Replace {
        id: String,
        content: String,
        reply: Reply<()>,
    },
    Approve {
        id: String,
        reply: Reply<bool>,
    },
    Step {
        command_id: u64,
        resume: bool,
        ack: Reply<()>,
    },
}

struct AppState {
    root: PathBuf,
    jobs: mpsc::Sender<Job>,
    next_command: AtomicU64,
}

type Shared = Arc<AppState>;

fn run_worker(root: PathBuf, options: PipelineOptions, jobs: mpsc::Receiver<Job>) {
    for job in jobs {
        let opened = Pipeline::open(&root, options.clone()).map_err(ApiError::from);
        match job {
            Job::Replace { id, content, reply } => {
                let result = opened.and_then(|mut p| {
                    p.replace_artifact(&id, &content).map_err(ApiError::from)
                });
                let _ = reply.send(result);
            }
            Job::Approve { id, reply } => {
                let result = opened.and_then(|mut p| p.approve(&id).map_err(ApiError::from));
                let _ = reply.send(result);
            }
            Job::Step {
                command_id,
                resume,
                ack,
            } => {
                let mut pipeline = match opened {
                    Ok(p) => p,
                    Err(e) => {
                        let _ = ack.send(Err(e));
                        continue;
                    }
                };
                if *pipeline.phase() == Phase::Done {
                    let _ = ack.send(Err(ApiError::new(
                        StatusCode::CONFLICT,
                        "session is done; there is nothing to step",
                    )));
                    continue;
                }
                if resume && !pipeline.phase().is_aborted() {
                    let _ = ack.send(Err(ApiError::new(
                        StatusCode::CONFLICT,
                        "session is not aborted",
                    )));
                    continue;
                }
                let _ = ack.send(Ok(()));
                let outcome = if resume {
                    pipeline
                        .resume()
                        .map(|phase| json!({ "outcome": "resumed", "phase": phase }))
                } else {
                    pipeline
                        .advance()
                        .map(|o| serde_json::to_value(o).expect("outcome serializes"))
                };
                let outcome = outcome.unwrap_or_else(|e| {
                    error!(command_id, error = %e, "command failed");
                    json!({ "outcome": "error", "message": e.to_string() })
                });
                if let Err(e) = pipeline.event(EventKind::StepCompleted {
                    command_id,
                    outcome,
                }) {
                    error!(command_id, error = %e, "cannot record command result");
                }
            }
        }
    }
}

/// Builds the router and starts its command worker thread.
pub fn router(root: &Path, options: PipelineOptions) -> Router {
    let (tx, rx) = mpsc::channel();
    let worker_root = root.to_path_buf();
    thread::Builder::new()
        .name("onx-commands".into())
        .spawn(move || run_worker(worker_root, options, rx))
        .expect("spawn command worker");
    let state = Arc::new(AppState {
        root: root.to_path_buf(),
        jobs: tx,
        next_command: AtomicU64::new(1),
    });
    Router::new()
        .route("/api/session", get(get_session))
        .route("/api/artifacts", get(list_artifacts))
        .route("/api/artifacts/:id", get(get_artifact).put(put_artifact))
        .route("/api/artifacts/:id/approve", post(approve_artifact))
        .route("/api/step", post(step))
        .route("/api/resume", post(resume))
        .route("/api/events", get(events))
        .route("/api/transcript", get(transcript))
        .route("/api/metrics", get(metrics))
        .layer(middleware::from_fn_with_state(state.clone(), revision_header))
        .with_state(state)
}

async fn revision_header(State(state): State<Shared>, request: Request, next: Next) -> Response {
    let mut response = next.run(request).await;
    let revision = read_session(&state.root).map(|s| s.revision).unwrap_or(0);
    response.headers_mut().insert(
        REVISION_HEADER,
        HeaderValue::from_str(&revision.to_string()).expect("digits"),
    );
    response
}

async fn submit<T>(state: &Shared, make: impl FnOnce(Reply<T>) -> Job) -> Result<T, ApiError> {
    let (tx, rx) = oneshot::channel();
    state
        .jobs
        .send(make(tx))
        .map_err(|_| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "command worker stopped"))?;
    rx.await
        .map_err(|_| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "command worker stopped"))?
}

async fn get_session(State(state): State<Shared>) -> Result<Json<Value>, ApiError> {
    let session = read_session(&state.root)?;
    Ok(Json(serde_json::to_value(session).expect("session serializes")))
}

async fn list_artifacts(State(state): State<Shared>) -> Result<Json<Vec<Artifact>>, ApiError> {
    Ok(Json(read_session(&state.root)?.artifacts))
}

#[derive(Serialize)]
struct ArtifactView {
    artifact: Artifact,
    content: Option<String>,
    editable: bool,
}

async fn get_artifact(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<ArtifactView>, ApiError> {
    let session = read_session(&state.root)?;
    let artifact = session
        .artifact(&id)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown artifact `{id}`")))?;
    let content = std::fs::read_to_string(state.root.join(&artifact.path)).ok();
    let editable = artifact.kind.is_reviewable() && artifact.review_status.is_pending();
    Ok(Json(ArtifactView {
        artifact,
        content,
        editable,
    }))
}

async fn put_artifact(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    body: String,
) -> Result<Json<Value>, ApiError> {
    let artifact = id.clone();
    submit(&state, |reply| Job::Replace {
        id,
        content: body,
        reply,
    })
    .await?;
    Ok(Json(json!({ "artifact": artifact })))
}

async fn approve_artifact(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<Value>, ApiError> {
    let artifact = id.clone();
    let modified = submit(&state, |reply| Job::Approve { id, reply }).await?;
    Ok(Json(json!({ "artifact": artifact, "modified": modified })))
}

async fn enqueue_step(state: Shared, resume: bool) -> Result<Response, ApiError> {
    let command_id = state.next_command.fetch_add(1, Ordering::SeqCst);
    submit(&state, |ack| Job::Step {
        command_id,
        resume,
        ack,
    })
    .await?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "command_id": command_id }))).into_response())
}

async fn step(State(state): State<Shared>) -> Result<Response, ApiError> {
    enqueue_step(state, false).await
}

async fn resume(State(state): State<Shared>) -> Result<Response, ApiError> {
    enqueue_step(state, true).await
}

#[derive(Deserialize)]
struct EventsQuery {
    #[serde(default)]
    cursor: u64,
    #[serde(default)]
    timeout_ms: u64,
}

async fn events(
    State(state): State<Shared>,
    Query(q): Query<EventsQuery>,
) -> Result<Json<Value>, ApiError> {
    let path = state.root.join(EVENTS_FILE);
    let deadline = Instant::now() + Duration::from_millis(q.timeout_ms).min(MAX_POLL);
    loop {
        let events = read_events(&path, q.cursor)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        if !events.is_empty() || Instant::now() >= deadline {
            let next = events.last().map(|e| e.cursor + 1).unwrap_or(q.cursor);
            return Ok(Json(json!({ "events": events, "next_cursor": next })));
        }
        tokio::time::sleep(POLL_INTERVAL).await;
    }
}

#[derive(Deserialize)]
struct TranscriptQuery {
    #[serde(default)]
    from: u64,
}

async fn transcript(
    State(state): State<Shared>,
    Query(q): Query<TranscriptQuery>,
) -> Result<Json<Value>, ApiError> {
    let records = read_transcript(&state.root.join(TRANSCRIPT_FILE), q.from)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(Json(serde_json::to_value(records).expect("records serialize")))
}

async fn metrics(State(state): State<Shared>) -> Result<Json<Value>, ApiError> {
    let session = read_session(&state.root)?;
    let profile = TargetProfile::resolve(&session.profile_id, &state.root)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let report = compute_metrics(&session, &state.root, &profile.line_comment_prefix);
    Ok(Json(serde_json::to_value(report).expect("metrics serialize")))
}

/// Serves until the process exits.
pub async fn serve(root: &Path, options: PipelineOptions, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    info!(addr = %listener.local_addr()?, "control API listening");
    axum::serve(listener, router(root, options)).await
}

/// A server running on its own thread and runtime; stops on drop.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Starts a server in the background (port 0 picks a free port).
pub fn spawn_server(
    root: &Path,
    options: PipelineOptions,
    addr: SocketAddr,
) -> std::io::Result<ServerHandle> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let listener = runtime.block_on(tokio::net::TcpListener::bind(addr))?;
    let addr = listener.local_addr()?;
    let app = router(root, options);
    let (tx, rx) = oneshot::channel::<()>();
    let thread = thread::Builder::new()
        .name("onx-api".into())
        .spawn(move || {
            runtime.block_on(async move {
                let _ = axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        })?;
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
