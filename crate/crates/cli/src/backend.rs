//! HTTP backend for the annotation frontend.
//!
//! | method | path | body / query |
//! |---|---|---|
//! | GET | `/api/version` | |
//! | GET | `/api/overview` | |
//! | GET | `/api/scenarios/{s}/frames` | |
//! | GET | `/api/scenarios/{s}/frames/{f}` | |
//! | GET | `/api/scenarios/{s}/images/{name}` | |
//! | GET | `/api/scenarios/{s}/qas` | `from`, `to`, `qids=19,50`, `keyword` |
//! | POST | `/api/scenarios/{s}/frames/{f}/edits` | `{qid, text, mark?}` |
//! | PUT | `/api/scenarios/{s}/frames/{f}/status` | `{status}` |
//! | PUT | `/api/scenarios/{s}/interval` | `{entry_frame, exit_frame}` |
//! | GET | `/api/scenarios/{s}/history` | |
//! | GET, POST | `/api/options` | POST `{qid, text}` |
//!
//! Errors are `{"error": ...}` with 400, 404 or 409.

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use lanebench_core::dataset::{FrameStatus, QaFilter, Store, StoreError};
use serde::Deserialize;
use serde_json::{json, Value};

struct Backend {
    store: Store,
    /// Serializes writes; reads go straight to disk.
    write: Mutex<()>,
    version: AtomicU64,
}

type Shared = Arc<Backend>;

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({"error": self.1}))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let code = match &e {
            StoreError::NotFound { .. } | StoreError::NoScenario(_) => StatusCode::NOT_FOUND,
            StoreError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => StatusCode::NOT_FOUND,
            StoreError::UnknownQid { .. } | StoreError::BadName(_) | StoreError::BadInterval { .. } => StatusCode::BAD_REQUEST,
            StoreError::BadTransition { .. } => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(code, e.to_string())
    }
}

type ApiResult = Result<Json<Value>, ApiError>;

fn ok<T: serde::Serialize>(v: T) -> ApiResult {
    serde_json::to_value(v).map(Json).map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

/// Parses a JSON body, naming the offending field on failure.
fn body<T: serde::de::DeserializeOwned>(raw: &[u8]) -> Result<T, ApiError> {
    let mut de = serde_json::Deserializer::from_slice(raw);
    serde_path_to_error::deserialize(&mut de).map_err(|e| ApiError(StatusCode::BAD_REQUEST, format!("{}: {}", e.path(), e.inner())))
}

impl Backend {
    fn write<T>(&self, f: impl FnOnce(&Store) -> Result<T, StoreError>) -> Result<T, ApiError> {
        let _guard = self.write.lock().unwrap_or_else(|e| e.into_inner());
        let out = f(&self.store)?;
        self.version.fetch_add(1, Ordering::SeqCst);
        Ok(out)
    }
}

async fn version(State(b): State<Shared>) -> ApiResult {
    ok(json!({"version": b.version.load(Ordering::SeqCst)}))
}

async fn overview(State(b): State<Shared>) -> ApiResult {
    ok(b.store.overview()?)
}

async fn frames(State(b): State<Shared>, Path(s): Path<String>) -> ApiResult {
    let meta = b.store.meta(&s)?;
    ok(json!({"meta": meta, "frames": b.store.frames(&s)?}))
}

async fn frame(State(b): State<Shared>, Path((s, f)): Path<(String, u64)>) -> ApiResult {
    let stored = b.store.read_frame(&s, f)?;
    ok(json!({"record": stored.record, "excluded": stored.excluded}))
}

async fn image(State(b): State<Shared>, Path((s, name)): Path<(String, String)>) -> Result<Response, ApiError> {
    let bytes = b.store.read_image(&s, &name)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

#[derive(Deserialize)]
struct QaQuery {
    from: Option<u64>,
    to: Option<u64>,
    qids: Option<String>,
    keyword: Option<String>,
}

async fn qas(State(b): State<Shared>, Path(s): Path<String>, Query(q): Query<QaQuery>) -> ApiResult {
    let mut qids = BTreeSet::new();
    for tok in q.qids.as_deref().unwrap_or("").split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let id = tok.parse().map_err(|_| ApiError(StatusCode::BAD_REQUEST, format!("qids: {tok:?} is not a number")))?;
        qids.insert(id);
    }
    let filter = QaFilter { from_frame: q.from, to_frame: q.to, qids, keyword: q.keyword };
    ok(b.store.filter_qas(&s, &filter)?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EditBody {
    qid: u32,
    text: String,
    #[serde(default)]
    mark: Option<FrameStatus>,
}

async fn edit(State(b): State<Shared>, Path((s, f)): Path<(String, u64)>, raw: axum::body::Bytes) -> ApiResult {
    let e: EditBody = body(&raw)?;
    let rec = b.write(|st| st.edit_answer(&s, f, e.qid, &e.text, e.mark))?;
    ok(rec)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StatusBody {
    status: FrameStatus,
}

async fn status(State(b): State<Shared>, Path((s, f)): Path<(String, u64)>, raw: axum::body::Bytes) -> ApiResult {
    let sb: StatusBody = body(&raw)?;
    ok(b.write(|st| st.set_status(&s, f, sb.status))?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IntervalBody {
    entry_frame: u64,
    #[serde(default)]
    exit_frame: Option<u64>,
}

async fn interval(State(b): State<Shared>, Path(s): Path<String>, raw: axum::body::Bytes) -> ApiResult {
    let ib: IntervalBody = body(&raw)?;
    ok(b.write(|st| st.set_interval(&s, ib.entry_frame, ib.exit_frame))?)
}

async fn history(State(b): State<Shared>, Path(s): Path<String>) -> ApiResult {
    b.store.meta(&s)?;
    ok(b.store.history(&s)?)
}

async fn options(State(b): State<Shared>) -> ApiResult {
    ok(b.store.options()?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OptionBody {
    qid: u32,
    text: String,
}

async fn add_option(State(b): State<Shared>, raw: axum::body::Bytes) -> ApiResult {
    let ob: OptionBody = body(&raw)?;
    ok(b.write(|st| st.add_option(ob.qid, &ob.text))?)
}

pub fn router(root: PathBuf) -> Router {
    let state = Arc::new(Backend { store: Store::new(root), write: Mutex::new(()), version: AtomicU64::new(0) });
    Router::new()
        .route("/api/version", get(version))
        .route("/api/overview", get(overview))
        .route("/api/scenarios/{s}/frames", get(frames))
        .route("/api/scenarios/{s}/frames/{f}", get(frame))
        .route("/api/scenarios/{s}/images/{name}", get(image))
        .route("/api/scenarios/{s}/qas", get(qas))
        .route("/api/scenarios/{s}/frames/{f}/edits", post(edit))
        .route("/api/scenarios/{s}/frames/{f}/status", put(status))
        .route("/api/scenarios/{s}/interval", put(interval))
        .route("/api/scenarios/{s}/history", get(history))
        .route("/api/options", get(options).post(add_option))
        .with_state(state)
}

/// Backend on a background thread; stops when dropped.
pub struct BackendHandle {
    addr: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl BackendHandle {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the server exits.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for BackendHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

pub fn serve_backend(root: PathBuf, addr: &str) -> std::io::Result<BackendHandle> {
    let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
    let listener = rt.block_on(tokio::net::TcpListener::bind(addr))?;
    let local = listener.local_addr()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let app = router(root);
    let thread = std::thread::spawn(move || {
        rt.block_on(async move {
            let server = axum::serve(listener, app).with_graceful_shutdown(async {
                let _ = rx.await;
            });
            if let Err(e) = server.await {
                log::error!("annotation backend stopped: {e}");
            }
        });
    });
    log::info!("annotation backend listening on http://{local}");
    Ok(BackendHandle { addr: local, stop: Some(tx), thread: Some(thread) })
}
