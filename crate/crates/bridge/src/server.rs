use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lanebench_core::policy::{Policy, PolicyError, PolicyRequest, PolicyResponse};
use lanebench_core::schema::{validate, SchemaKind};
use serde_json::{json, Value};
use tokio::sync::oneshot;

#[derive(Debug)]
pub enum ServeError {
    Bind(std::io::Error),
    Runtime(std::io::Error),
}

impl std::fmt::Display for ServeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ServeError::Bind(e) => write!(f, "cannot bind: {e}"),
            ServeError::Runtime(e) => write!(f, "cannot start runtime: {e}"),
        }
    }
}

impl std::error::Error for ServeError {}

type Shared = Arc<Mutex<Box<dyn Policy + Send>>>;

struct AppState {
    policy: Shared,
    model_id: String,
}

fn bad_request(field: &str, message: impl Into<String>) -> Response {
    let body = json!({"error": message.into(), "field": field});
    (StatusCode::BAD_REQUEST, Json(body)).into_response()
}

/// Parses and checks a request body; the error names the offending field.
fn parse_request(body: &[u8]) -> Result<PolicyRequest, Response> {
    let value: Value = serde_json::from_slice(body).map_err(|e| bad_request("", format!("invalid JSON: {e}")))?;
    validate(SchemaKind::PolicyRequest, &value).map_err(|e| bad_request(&e.pointer, e.message))?;
    let req: PolicyRequest = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        bad_request(&path, e.into_inner().to_string())
    })?;
    for (i, img) in req.images.iter().enumerate() {
        if let Err(e) = img.bytes() {
            return Err(bad_request(&format!("/images/{i}"), e.to_string()));
        }
    }
    Ok(req)
}

async fn infer(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req = match parse_request(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    let policy = state.policy.clone();
    let started = Instant::now();
    let result = tokio::task::spawn_blocking(move || {
        let mut p = policy.lock().unwrap_or_else(|e| e.into_inner());
        p.answer(&req, None)
    })
    .await;
    match result {
        Ok(Ok(answer)) => Json(PolicyResponse {
            answer,
            latency_ms: started.elapsed().as_millis() as u64,
            model_id: state.model_id.clone(),
        })
        .into_response(),
        Ok(Err(e @ PolicyError::MissingOracle { .. })) => {
            (StatusCode::UNPROCESSABLE_ENTITY, Json(json!({"error": e.to_string()}))).into_response()
        }
        Ok(Err(e)) => (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({"error": e.to_string()}))).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({"error": format!("policy panicked: {e}")}))).into_response(),
    }
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({"status": "ok", "model_id": state.model_id}))
}

pub fn router(policy: Box<dyn Policy + Send>) -> Router {
    let model_id = policy.name().to_string();
    let state = Arc::new(AppState { policy: Arc::new(Mutex::new(policy)), model_id });
    Router::new()
        .route("/infer", post(infer))
        .route("/health", get(health))
        .with_state(state)
}

/// A server running on its own thread; stops on [`ServerHandle::shutdown`] or drop.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(mut self) {
        self.stop_now();
    }

    /// Blocks until the server exits.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    fn stop_now(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_now();
    }
}

/// Binds `addr` (port 0 picks a free port) and serves `policy` in the background.
pub fn serve(policy: Box<dyn Policy + Send>, addr: &str) -> Result<ServerHandle, ServeError> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .map_err(ServeError::Runtime)?;
    let listener = rt.block_on(tokio::net::TcpListener::bind(addr)).map_err(ServeError::Bind)?;
    let local = listener.local_addr().map_err(ServeError::Bind)?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(policy);
    let thread = std::thread::spawn(move || {
        rt.block_on(async move {
            let server = axum::serve(listener, app).with_graceful_shutdown(async {
                let _ = rx.await;
            });
            if let Err(e) = server.await {
                log::error!("policy server stopped: {e}");
            }
        });
    });
    log::info!("policy server listening on http://{local}");
    Ok(ServerHandle { addr: local, stop: Some(tx), thread: Some(thread) })
}
