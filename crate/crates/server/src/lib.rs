//! HTTP annotation service: a person answers the slice-membership queries
//! of an interactive discovery run.
//!
//! Sessions persist as JSON-lines event logs under the state directory and
//! are rebuilt by replaying those logs when the service starts.

mod session;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use activeslice_core::corpus::{Dataset, SliceVector};
use activeslice_core::discovery::{DiscoveryConfig, RunResult};
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

pub use session::{Event, Session, Status};

const INDEX_HTML: &str = include_str!("../static/index.html");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message}")]
pub struct ApiError {
    pub status: u16,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl std::fmt::Display) -> Self {
        ApiError {
            status: status.as_u16(),
            message: message.to_string(),
        }
    }

    pub fn bad_request(m: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::BAD_REQUEST, m)
    }

    pub fn not_found(m: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::NOT_FOUND, m)
    }

    pub fn conflict(m: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::CONFLICT, m)
    }

    pub fn internal(m: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, m)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

/// Shared service state: one train/test pair, the default run
/// configuration and the live sessions.
pub struct AppState {
    train: Dataset,
    test: Dataset,
    default_config: Option<DiscoveryConfig>,
    state_dir: PathBuf,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

impl AppState {
    /// Opens the state directory (creating it if needed) and replays every
    /// session log found there.
    pub fn open(
        train: Dataset,
        test: Dataset,
        default_config: Option<DiscoveryConfig>,
        state_dir: impl Into<PathBuf>,
    ) -> Result<Arc<AppState>, ApiError> {
        let state_dir = state_dir.into();
        std::fs::create_dir_all(&state_dir).map_err(ApiError::internal)?;
        let mut logs: Vec<PathBuf> = std::fs::read_dir(&state_dir)
            .map_err(ApiError::internal)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        logs.sort();
        let mut sessions = HashMap::new();
        for path in logs {
            let s = Session::replay(&train, &test, &path)?;
            sessions.insert(s.id.clone(), Arc::new(Mutex::new(s)));
        }
        Ok(Arc::new(AppState {
            train,
            test,
            default_config,
            state_dir,
            sessions: RwLock::new(sessions),
        }))
    }

    pub fn state_dir(&self) -> &Path {
        &self.state_dir
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().unwrap().keys().cloned().collect();
        ids.sort();
        ids
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session {id:?}")))
    }

    pub fn create_session(&self, config: Option<DiscoveryConfig>) -> Result<Progress, ApiError> {
        let config = config
            .or_else(|| self.default_config.clone())
            .ok_or_else(|| ApiError::bad_request("no configuration given and no default configured"))?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let at = now_ms();
        let session = Session::create(&self.train, &self.test, id.clone(), config.clone(), at, &self.state_dir)
            .map_err(ApiError::bad_request)?;
        session
            .append(&Event::Created {
                session: id.clone(),
                config,
                at_ms: at,
            })
            .map_err(ApiError::internal)?;
        let progress = Progress::of(&session);
        self.sessions
            .write()
            .unwrap()
            .insert(id, Arc::new(Mutex::new(session)));
        Ok(progress)
    }

    pub fn next(&self, id: &str) -> Result<NextResponse, ApiError> {
        let handle = self.session(id)?;
        let s = handle.lock().unwrap();
        let item = s.next_position().map(|position| {
            let row = s.pending_rows()[position];
            let rec = &self.train.records[row];
            QueryItem {
                id: rec.id.clone(),
                position,
                batch_size: s.answers.len(),
                text: rec.text.clone(),
                provenance: self.train.provenance.clone(),
            }
        });
        Ok(NextResponse {
            progress: Progress::of(&s),
            slice_names: self.train.slice_names.clone(),
            item,
        })
    }

    /// Records one answer. Rejected submissions change nothing, in memory or
    /// on disk.
    pub fn submit(&self, session_id: &str, sub: &LabelSubmission) -> Result<LabelResponse, ApiError> {
        let handle = self.session(session_id)?;
        let mut s = handle.lock().unwrap();
        let at = now_ms();
        let (next, outcome) =
            s.submit(&self.train, &self.test, &sub.id, &sub.answers, sub.note.as_deref(), at)?;
        s.append(&Event::Label {
            id: sub.id.clone(),
            answers: sub.answers.clone(),
            note: sub.note.clone(),
            at_ms: at,
        })
        .map_err(ApiError::internal)?;
        *s = next;
        Ok(LabelResponse {
            progress: Progress::of(&s),
            accepted: true,
            batch_complete: outcome.batch_complete,
            remaining_in_batch: s.answers.iter().filter(|a| a.is_none()).count(),
        })
    }

    pub fn metrics(&self, id: &str) -> Result<MetricsResponse, ApiError> {
        let handle = self.session(id)?;
        let s = handle.lock().unwrap();
        Ok(MetricsResponse {
            progress: Progress::of(&s),
            created_ms: s.created_ms,
            updated_ms: s.updated_ms,
            result: s.run.snapshot(),
        })
    }
}

/// Fields present in every session response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub session_id: String,
    pub status: Status,
    pub round: usize,
    pub budget_remaining: usize,
    pub labels_used: usize,
}

impl Progress {
    fn of(s: &Session) -> Progress {
        let st = s.run.state();
        Progress {
            session_id: s.id.clone(),
            status: s.status(),
            round: st.round,
            budget_remaining: st.budget_remaining,
            labels_used: st.labels_used(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CreateRequest {
    #[serde(default)]
    pub config: Option<DiscoveryConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryItem {
    pub id: String,
    /// Position within the pending batch.
    pub position: usize,
    pub batch_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextResponse {
    #[serde(flatten)]
    pub progress: Progress,
    pub slice_names: Vec<String>,
    pub item: Option<QueryItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSubmission {
    pub id: String,
    pub answers: SliceVector,
    #[serde(default)]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelResponse {
    #[serde(flatten)]
    pub progress: Progress,
    pub accepted: bool,
    pub batch_complete: bool,
    pub remaining_in_batch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsResponse {
    #[serde(flatten)]
    pub progress: Progress,
    pub created_ms: u64,
    pub updated_ms: u64,
    pub result: RunResult,
}

fn parse_body<T: for<'de> Deserialize<'de> + Default>(body: &Bytes, allow_empty: bool) -> Result<T, ApiError> {
    if allow_empty && body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

impl Default for LabelSubmission {
    fn default() -> Self {
        LabelSubmission {
            id: String::new(),
            answers: Vec::new(),
            note: None,
        }
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(ApiError::internal)?
}

async fn create(State(app): State<Arc<AppState>>, body: Bytes) -> Result<Json<Progress>, ApiError> {
    let req: CreateRequest = parse_body(&body, true)?;
    blocking(move || app.create_session(req.config)).await.map(Json)
}

async fn next(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<NextResponse>, ApiError> {
    app.next(&id).map(Json)
}

async fn labels(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<LabelResponse>, ApiError> {
    let sub: LabelSubmission = parse_body(&body, false)?;
    blocking(move || app.submit(&id, &sub)).await.map(Json)
}

async fn metrics(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<MetricsResponse>, ApiError> {
    app.metrics(&id).map(Json)
}

async fn healthz() -> impl IntoResponse {
    (
        [(header::CACHE_CONTROL, "no-store")],
        Json(serde_json::json!({ "status": "ok" })),
    )
}

async fn index() -> Html<&'static str> {
    Html(INDEX_HTML)
}

/// The API routes plus the browser client under `/`: files from
/// `static_dir` when given, otherwise the built-in page.
pub fn router(app: Arc<AppState>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}/next", get(next))
        .route("/sessions/{id}/labels", post(labels))
        .route("/sessions/{id}/metrics", get(metrics))
        .route("/healthz", get(healthz))
        .with_state(app);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(index)),
    }
}

/// Serves until `shutdown` resolves. Session state is already on disk after
/// every accepted request, so stopping loses nothing.
pub async fn serve(
    listener: tokio::net::TcpListener,
    router: Router,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router)
        .with_graceful_shutdown(shutdown)
        .await
}
