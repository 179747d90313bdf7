//! Local HTTP API over one trace.
//!
//! Every JSON response carries a `stale` field. Search sessions live on the
//! server, are addressed by id (`s1`, `s2`, ...) and expire after ten
//! minutes without use.

use std::collections::HashMap;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::{Mutex, RwLock};
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use tracelens_core::annotate::{annotate_file, on_edit, select_iteration, AnnotateError, CursorContext};
use tracelens_core::docs::{generate_docs, succinctness_report, DocConfig, SourceMap, SourceRoot};
use tracelens_core::search::{open_session, SearchQuery, SearchScope, SearchSession};
use tracelens_core::trace::TraceStore;

pub const SESSION_IDLE: Duration = Duration::from_secs(600);

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub trace: PathBuf,
    pub source_root: PathBuf,
    pub source_map: Option<PathBuf>,
    pub port: u16,
    pub allow_stale: bool,
    pub ui_dir: Option<PathBuf>,
    pub constructor_marker: Option<String>,
}

impl ServeConfig {
    pub fn new(trace: impl Into<PathBuf>, source_root: impl Into<PathBuf>) -> Self {
        Self {
            trace: trace.into(),
            source_root: source_root.into(),
            source_map: None,
            port: crate::cli::DEFAULT_PORT,
            allow_stale: false,
            ui_dir: None,
            constructor_marker: None,
        }
    }
}

struct SessionEntry {
    session: SearchSession,
    last_used: Instant,
}

pub struct AppState {
    config: ServeConfig,
    store: RwLock<Arc<TraceStore>>,
    source_map: Option<SourceMap>,
    sessions: Mutex<HashMap<String, Arc<Mutex<SessionEntry>>>>,
    next_session: AtomicU64,
    idle: Duration,
}

impl AppState {
    /// Loads the trace (and source map, if configured).
    pub fn new(config: ServeConfig) -> anyhow::Result<Self> {
        anyhow::ensure!(config.port != 0, "port must be in 1..=65535");
        let store = TraceStore::load(&config.trace).map_err(|e| anyhow::anyhow!("{}: {e}", config.trace.display()))?;
        let source_map = match &config.source_map {
            Some(p) => Some(SourceMap::load(p)?),
            None => None,
        };
        Ok(Self {
            config,
            store: RwLock::new(Arc::new(store)),
            source_map,
            sessions: Mutex::new(HashMap::new()),
            next_session: AtomicU64::new(1),
            idle: SESSION_IDLE,
        })
    }

    pub fn with_idle_timeout(mut self, idle: Duration) -> Self {
        self.idle = idle;
        self
    }

    pub fn store(&self) -> Arc<TraceStore> {
        Arc::clone(&self.store.read())
    }

    fn sweep_sessions(&self) {
        let idle = self.idle;
        self.sessions.lock().retain(|_, s| s.lock().last_used.elapsed() < idle);
    }
}

struct ApiError {
    status: StatusCode,
    message: String,
    stale: bool,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>, stale: bool) -> Self {
        Self {
            status,
            message: message.into(),
            stale,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.message, "stale": self.stale}))).into_response()
    }
}

type ApiResult = Result<Json<Value>, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/files", get(files))
        .route("/source", get(source))
        .route("/annotations", get(annotations))
        .route("/search/sessions", post(create_session))
        .route("/search/sessions/{id}/next", post(next_match))
        .route("/docs", get(docs))
        .route("/invalidate", post(invalidate))
        .route("/reload", post(reload));
    let app = Router::new().nest("/api", api);
    let app = match &state.config.ui_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    };
    app.with_state(state)
}

pub async fn serve(state: Arc<AppState>, host: &str) -> anyhow::Result<()> {
    let addr = format!("{host}:{}", state.config.port);
    let listener = tokio::net::TcpListener::bind(&addr).await?;
    eprintln!("tracelens serving {} on http://{addr}", state.config.trace.display());
    axum::serve(listener, router(state)).await?;
    Ok(())
}

async fn files(State(state): State<Arc<AppState>>) -> ApiResult {
    let store = state.store();
    let files: Vec<&str> = store.files().collect();
    Ok(Json(json!({"stale": store.is_stale(), "files": files})))
}

/// Joins a trace-relative path to the source root, refusing anything that
/// could leave it.
fn resolve_source(root: &Path, file: &str) -> Result<PathBuf, ApiError> {
    let rel = Path::new(file);
    let escapes = file.is_empty()
        || file.contains('\\')
        || rel
            .components()
            .any(|c| !matches!(c, Component::Normal(_) | Component::CurDir));
    if escapes {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            format!("invalid file path '{file}'"),
            false,
        ));
    }
    let joined = root.join(rel);
    let (Ok(root), Ok(full)) = (root.canonicalize(), joined.canonicalize()) else {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            format!("unknown file '{file}'"),
            false,
        ));
    };
    if !full.starts_with(&root) {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            format!("invalid file path '{file}'"),
            false,
        ));
    }
    Ok(full)
}

#[derive(Deserialize)]
struct SourceParams {
    file: Option<String>,
}

async fn source(State(state): State<Arc<AppState>>, Query(params): Query<SourceParams>) -> ApiResult {
    let stale = state.store().is_stale();
    let file = params
        .file
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "missing 'file' parameter", stale))?;
    let path = resolve_source(&state.config.source_root, &file).map_err(|e| ApiError { stale, ..e })?;
    let text = std::fs::read_to_string(&path)
        .map_err(|_| ApiError::new(StatusCode::NOT_FOUND, format!("unknown file '{file}'"), stale))?;
    Ok(Json(json!({"stale": stale, "file": file, "text": text})))
}

#[derive(Deserialize)]
struct AnnotationParams {
    file: Option<String>,
    cursor: Option<String>,
    allow_stale: Option<String>,
}

fn parse_flag(value: Option<&str>) -> Result<Option<bool>, String> {
    match value {
        None => Ok(None),
        Some("1" | "true" | "yes") => Ok(Some(true)),
        Some("0" | "false" | "no") => Ok(Some(false)),
        Some(other) => Err(format!("invalid boolean '{other}'")),
    }
}

async fn annotations(State(state): State<Arc<AppState>>, Query(params): Query<AnnotationParams>) -> ApiResult {
    let store = state.store();
    let stale = store.is_stale();
    let bad = |msg: String| ApiError::new(StatusCode::BAD_REQUEST, msg, stale);
    let file = params.file.ok_or_else(|| bad("missing 'file' parameter".into()))?;
    let cursor: u32 = match params.cursor.as_deref() {
        None => 1,
        Some(c) => c.parse().map_err(|_| bad(format!("invalid cursor '{c}'")))?,
    };
    let allow_stale = parse_flag(params.allow_stale.as_deref())
        .map_err(bad)?
        .unwrap_or(state.config.allow_stale);
    let ctx = CursorContext::new(file.clone(), cursor).map_err(|e| bad(e.to_string()))?;
    if store.executed_lines(&file).is_none() {
        resolve_source(&state.config.source_root, &file).map_err(|e| ApiError { stale, ..e })?;
    }
    let to_api = |e: AnnotateError| match e {
        AnnotateError::StaleTrace => ApiError::new(StatusCode::CONFLICT, e.to_string(), true),
        AnnotateError::InvalidCursor => bad(e.to_string()),
    };
    let selected = select_iteration(&store, &ctx, allow_stale).map_err(to_api)?;
    let annotations = annotate_file(&store, &ctx, allow_stale).map_err(to_api)?;
    Ok(Json(json!({
        "stale": stale,
        "file": file,
        "cursor": cursor,
        "selected": selected.map(|it| it.id()),
        "annotations": annotations,
    })))
}

#[derive(Deserialize)]
struct ScopeBody {
    #[serde(default)]
    method_prefixes: Vec<String>,
    #[serde(default)]
    file_globs: Vec<String>,
}

#[derive(Deserialize)]
struct CreateSessionBody {
    query: SearchQuery,
    scope: Option<ScopeBody>,
    #[serde(default = "default_true")]
    exception_text: bool,
}

fn default_true() -> bool {
    true
}

async fn create_session(State(state): State<Arc<AppState>>, body: Option<Json<Value>>) -> ApiResult {
    let store = state.store();
    let stale = store.is_stale();
    let bad = |msg: String| ApiError::new(StatusCode::BAD_REQUEST, msg, stale);
    let Json(raw) = body.ok_or_else(|| bad("expected a JSON body".into()))?;
    let body: CreateSessionBody = serde_json::from_value(raw).map_err(|e| bad(e.to_string()))?;
    let scope = match body.scope {
        Some(s) => SearchScope::new(s.method_prefixes, s.file_globs).map_err(|e| bad(e.to_string()))?,
        None => SearchScope::all(),
    };
    let session = open_session(store, body.query, scope)
        .map_err(|e| bad(e.to_string()))?
        .with_exception_text(body.exception_text);
    state.sweep_sessions();
    let id = format!("s{}", state.next_session.fetch_add(1, Ordering::Relaxed));
    state.sessions.lock().insert(
        id.clone(),
        Arc::new(Mutex::new(SessionEntry {
            session,
            last_used: Instant::now(),
        })),
    );
    Ok(Json(json!({"id": id, "stale": stale})))
}

async fn next_match(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult {
    state.sweep_sessions();
    let entry = state.sessions.lock().get(&id).cloned().ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            format!("unknown or expired session '{id}'"),
            state.store().is_stale(),
        )
    })?;
    let mut entry = entry.lock();
    entry.last_used = Instant::now();
    let found = entry.session.find_next();
    let stale = entry.session.is_stale();
    Ok(Json(json!({
        "stale": stale,
        "exhausted": found.is_none(),
        "match": found,
    })))
}

#[derive(Deserialize)]
struct DocsParams {
    prefix: Option<String>,
    k: Option<String>,
}

async fn docs(State(state): State<Arc<AppState>>, Query(params): Query<DocsParams>) -> ApiResult {
    let store = state.store();
    let stale = store.is_stale();
    let mut config = DocConfig::for_store(&store);
    if let Some(marker) = &state.config.constructor_marker {
        config.constructor_marker = marker.clone();
    }
    if let Some(k) = params.k.as_deref() {
        config.max_sentences = k
            .parse()
            .map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, format!("invalid k '{k}'"), stale))?;
    }
    let prefix = params.prefix.as_deref().filter(|p| !p.is_empty());
    let entries = generate_docs(&store, prefix, &config)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string(), stale))?;
    let mut body = json!({"stale": stale, "entries": entries});
    if let Some(map) = &state.source_map {
        let report = succinctness_report(&entries, map, &SourceRoot(state.config.source_root.clone()));
        body["succinctness"] = json!(report);
    }
    Ok(Json(body))
}

#[derive(Deserialize, Default)]
struct InvalidateBody {
    file: Option<String>,
}

async fn invalidate(State(state): State<Arc<AppState>>, body: Option<Json<InvalidateBody>>) -> ApiResult {
    let file = body.and_then(|Json(b)| b.file).unwrap_or_default();
    on_edit(&state.store(), &file);
    Ok(Json(json!({"stale": true})))
}

async fn reload(State(state): State<Arc<AppState>>) -> ApiResult {
    let fresh = TraceStore::load(&state.config.trace)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string(), state.store().is_stale()))?;
    let events = fresh.events().len();
    *state.store.write() = Arc::new(fresh);
    Ok(Json(json!({"stale": false, "events": events})))
}
