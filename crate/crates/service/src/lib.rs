//! HTTP/JSON front end over live sessions.
//!
//! Every session lives in memory behind its own lock and on disk as
//! `<id>.json` (the canonical session file) plus `<id>.meta.json`. A mutation
//! is written to disk before the response goes out.

use std::collections::{BTreeMap, HashMap};
use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hasod_core::api::{ApiSessionSummary, CreateSessionRequest, ErrorBody, SurfacePoint};
use hasod_core::session::{
    create_session, to_canonical_json, write_atomic, Response as RunResponse, SessionState,
};
use hasod_core::Error;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::{Mutex, RwLock};
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

pub const DEFAULT_PORT: u16 = 8080;
pub const UI_DIR_ENV: &str = "HASOD_UI_DIR";

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: error.to_string(),
                message: message.into(),
            },
        }
    }

    fn unknown_session(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "UnknownSession", format!("no session {id:?}"))
    }
}

/// HTTP status for an engine error.
pub fn status_for(e: &Error) -> StatusCode {
    match e {
        Error::UnknownRowId(_) => StatusCode::NOT_FOUND,
        Error::DuplicateResponse(_) => StatusCode::UNPROCESSABLE_ENTITY,
        Error::WrongPhase(_) | Error::SessionComplete | Error::NotComplete | Error::NotAvailable(_) => {
            StatusCode::CONFLICT
        }
        Error::NonFinite
        | Error::Shape(_)
        | Error::KTooSmall(_)
        | Error::KTooLarge(_)
        | Error::InvalidConfig(_)
        | Error::InvalidDesign(_)
        | Error::NonFiniteResponse(_)
        | Error::Parse(_)
        | Error::Schema(_) => StatusCode::BAD_REQUEST,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self {
            status: status_for(&e),
            body: ErrorBody::from(&e),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        match r {
            JsonRejection::MissingJsonContentType(_) => {
                Self::new(StatusCode::UNSUPPORTED_MEDIA_TYPE, "Parse", r.body_text())
            }
            _ => Self::new(StatusCode::BAD_REQUEST, "Parse", r.body_text()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

/// JSON body whose rejections use the service's error shape.
#[derive(FromRequest)]
#[from_request(via(Json), rejection(ApiError))]
struct JsonBody<T>(T);

/// Canonical JSON (sorted keys, round-trip floats), the same bytes a
/// session file uses.
fn canonical<T: Serialize>(status: StatusCode, value: &T) -> Result<Response, ApiError> {
    let bytes = to_canonical_json(value)?;
    Ok((status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Meta {
    id: String,
    created_at: String,
}

struct Entry {
    meta: Meta,
    state: SessionState,
}

impl Entry {
    fn summary(&self) -> ApiSessionSummary {
        ApiSessionSummary {
            id: self.meta.id.clone(),
            phase: self.state.phase,
            k: self.state.k(),
            pending_run_count: self.state.pending_count(),
            created_at: self.meta.created_at.clone(),
        }
    }
}

/// Sessions known to the service, keyed by id.
pub struct Store {
    dir: PathBuf,
    sessions: RwLock<BTreeMap<String, Arc<Mutex<Entry>>>>,
}

impl Store {
    /// Opens (creating if needed) a sessions directory and loads every
    /// session registered in it.
    pub fn open(dir: impl Into<PathBuf>) -> hasod_core::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let mut sessions = BTreeMap::new();
        for item in std::fs::read_dir(&dir)? {
            let path = item?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            if !name.ends_with(".meta.json") {
                continue;
            }
            let meta: Meta = serde_json::from_slice(&std::fs::read(&path)?)?;
            let state = SessionState::load(&session_path(&dir, &meta.id))?;
            sessions.insert(meta.id.clone(), Arc::new(Mutex::new(Entry { meta, state })));
        }
        Ok(Self {
            dir,
            sessions: RwLock::new(sessions),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    async fn entry(&self, id: &str) -> Result<Arc<Mutex<Entry>>, ApiError> {
        self.sessions
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_session(id))
    }
}

fn session_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.json"))
}

fn meta_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.meta.json"))
}

type Shared = Arc<Store>;

async fn create(
    State(store): State<Shared>,
    JsonBody(req): JsonBody<CreateSessionRequest>,
) -> Result<Response, ApiError> {
    let state = create_session(req.session_config()?)?;
    let meta = Meta {
        id: uuid::Uuid::new_v4().simple().to_string(),
        created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
    };
    let dir = store.dir.clone();
    let (state, meta) = tokio::task::spawn_blocking(move || -> hasod_core::Result<_> {
        state.save(&session_path(&dir, &meta.id))?;
        write_atomic(&meta_path(&dir, &meta.id), &serde_json::to_vec(&meta)?)?;
        Ok((state, meta))
    })
    .await
    .expect("save task")?;
    let entry = Entry { meta, state };
    let summary = entry.summary();
    store
        .sessions
        .write()
        .await
        .insert(summary.id.clone(), Arc::new(Mutex::new(entry)));
    canonical(StatusCode::CREATED, &summary)
}

async fn list(State(store): State<Shared>) -> Result<Response, ApiError> {
    let entries: Vec<_> = store.sessions.read().await.values().cloned().collect();
    let mut out = Vec::with_capacity(entries.len());
    for e in entries {
        out.push(e.lock().await.summary());
    }
    out.sort_by(|a, b| (&a.created_at, &a.id).cmp(&(&b.created_at, &b.id)));
    canonical(StatusCode::OK, &out)
}

async fn show(State(store): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let entry = store.entry(&id).await?;
    let e = entry.lock().await;
    canonical(StatusCode::OK, &e.state)
}

async fn batch(State(store): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let entry = store.entry(&id).await?;
    let runs = entry.lock().await.state.propose_runs()?;
    canonical(StatusCode::OK, &runs)
}

async fn responses(
    State(store): State<Shared>,
    UrlPath(id): UrlPath<String>,
    JsonBody(batch): JsonBody<Vec<RunResponse>>,
) -> Result<Response, ApiError> {
    let entry = store.entry(&id).await?;
    // Held across the analytics and the write so submissions to one session
    // are applied in a total order.
    let mut e = entry.lock().await;
    let current = e.state.clone();
    let path = session_path(&store.dir, &id);
    let next = tokio::task::spawn_blocking(move || -> hasod_core::Result<SessionState> {
        let next = current.ingest_responses(&batch)?;
        next.save(&path)?;
        Ok(next)
    })
    .await
    .expect("ingest task")?;
    e.state = next;
    canonical(StatusCode::OK, &e.summary())
}

async fn report(State(store): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let entry = store.entry(&id).await?;
    let result = entry.lock().await.state.finalize_report()?;
    canonical(StatusCode::OK, &result)
}

async fn screening(State(store): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let entry = store.entry(&id).await?;
    let e = entry.lock().await;
    match &e.state.screening {
        Some(r) => canonical(StatusCode::OK, r),
        None => Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "NotAvailable",
            "screening is available once every Phase-1 run has a response",
        )),
    }
}

fn parse_levels(q: &HashMap<String, String>) -> Result<Vec<f64>, ApiError> {
    let raw = q
        .get("x")
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "Parse", "missing query parameter x"))?;
    raw.split(',')
        .map(|v| {
            v.trim().parse::<f64>().map_err(|_| {
                ApiError::new(StatusCode::BAD_REQUEST, "Parse", format!("bad level {v:?}"))
            })
        })
        .collect()
}

async fn surface(
    State(store): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let x = parse_levels(&q)?;
    let entry = store.entry(&id).await?;
    let state = entry.lock().await.state.clone();
    let (mean, variance) = tokio::task::spawn_blocking(move || state.surface(&x))
        .await
        .expect("surface task")?;
    canonical(StatusCode::OK, &SurfacePoint { mean, variance })
}

/// API routes, plus the static UI under `/` when `ui_dir` is given.
pub fn router(store: Arc<Store>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/sessions", post(create).get(list))
        .route("/api/sessions/{id}", get(show))
        .route("/api/sessions/{id}/batch", get(batch))
        .route("/api/sessions/{id}/responses", post(responses))
        .route("/api/sessions/{id}/report", get(report))
        .route("/api/sessions/{id}/screening", get(screening))
        .route("/api/sessions/{id}/surface", get(surface))
        .with_state(store);
    let app = match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    app.layer(CorsLayer::permissive())
}

/// Serves on an already bound listener until the process ends.
pub async fn serve(listener: TcpListener, sessions_dir: PathBuf) -> std::io::Result<()> {
    let store = Store::open(sessions_dir).map_err(|e| std::io::Error::other(e.to_string()))?;
    let ui = std::env::var_os(UI_DIR_ENV).map(PathBuf::from);
    axum::serve(listener, router(Arc::new(store), ui)).await
}

/// Binds the loopback interface on `port` and serves.
pub async fn run(port: u16, sessions_dir: PathBuf) -> std::io::Result<()> {
    let listener = TcpListener::bind(SocketAddr::from((Ipv4Addr::LOCALHOST, port))).await?;
    serve(listener, sessions_dir).await
}
