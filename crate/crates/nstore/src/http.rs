//! HTTP read API.

use std::collections::HashMap;
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use nstore_core::domain::{EntityId, TopicKind};
use nstore_core::query::{self, QueryError, QueryRequest, DEFAULT_PAGE_SIZE};
use nstore_core::store::{Store, StoreError};
use serde::Serialize;
use serde_json::Value;
use tokio::sync::Semaphore;

use crate::config::Role;
use crate::store_net::ReplicaStatus;

/// Where reads are served from.
#[derive(Clone)]
pub struct ReadPath {
    pub primary: Option<Store>,
    pub replica: Option<(Store, Arc<ReplicaStatus>)>,
    pub prefer_replica: bool,
}

impl ReadPath {
    /// Replica first when preferred and connected, otherwise the primary.
    pub fn store(&self) -> Option<&Store> {
        let replica = self
            .replica
            .as_ref()
            .filter(|(_, st)| st.connected.load(Ordering::SeqCst))
            .map(|(s, _)| s);
        match (&self.primary, replica) {
            (Some(p), Some(r)) => Some(if self.prefer_replica { r } else { p }),
            (Some(p), None) => Some(p),
            (None, _) => self.replica.as_ref().map(|(s, _)| s),
        }
    }
}

struct AppState {
    role: Role,
    reads: ReadPath,
    inflight: Arc<Semaphore>,
    timeout: Duration,
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> ApiError {
        ApiError {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message: message.into(),
            },
        }
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        let status = match &e {
            QueryError::Store(StoreError::NotFound(_)) => StatusCode::NOT_FOUND,
            QueryError::Store(StoreError::StoreClosed) => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

fn parse_topic(s: &str) -> Result<TopicKind, ApiError> {
    s.parse()
        .map_err(|_| ApiError::new(StatusCode::NOT_FOUND, "UnknownTopic", format!("unknown topic {s:?}")))
}

fn malformed(msg: impl Into<String>) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, "MalformedRequest", msg)
}

fn param<T: std::str::FromStr>(params: &HashMap<String, String>, key: &str) -> Result<Option<T>, ApiError> {
    params
        .get(key)
        .map(|v| v.parse().map_err(|_| malformed(format!("bad {key} {v:?}"))))
        .transpose()
}

pub fn router(role: Role, reads: ReadPath, max_inflight: usize, timeout: Duration) -> Router {
    router_with_limiter(role, reads, Arc::new(Semaphore::new(max_inflight.max(1))), timeout)
}

/// Like [`router`], sharing a caller-owned in-flight limiter.
pub fn router_with_limiter(role: Role, reads: ReadPath, inflight: Arc<Semaphore>, timeout: Duration) -> Router {
    let state = Arc::new(AppState {
        role,
        reads,
        inflight,
        timeout,
    });
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/{topic}/browse", get(browse))
        .route("/v1/{topic}/detail", get(detail))
        .route("/v1/{topic}/{op}", post(post_query))
        .with_state(state)
}

async fn health(State(app): State<Arc<AppState>>) -> Json<Value> {
    let store = app.reads.store();
    let mut body = serde_json::json!({
        "status": if store.is_some_and(|s| !s.is_closed()) { "ok" } else { "unavailable" },
        "role": app.role.as_str(),
        "lsn": store.map(|s| s.lsn()),
        "entities": store.map(|s| s.snapshot().entity_count()),
    });
    if let Some((r, st)) = &app.reads.replica {
        let upstream = app
            .reads
            .primary
            .as_ref()
            .map_or(st.upstream_lsn.load(Ordering::SeqCst), |p| p.lsn());
        let lsn = r.lsn();
        body["replica_lsn"] = lsn.into();
        body["replica_lag"] = upstream.saturating_sub(lsn).into();
        body["replica_connected"] = st.connected.load(Ordering::SeqCst).into();
        body["replica_error"] = st.last_error.lock().unwrap().clone().into();
    }
    Json(body)
}

async fn run(app: Arc<AppState>, req: QueryRequest) -> Result<Response, ApiError> {
    let Ok(permit) = app.inflight.clone().try_acquire_owned() else {
        return Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "Overloaded",
            "too many requests in flight",
        ));
    };
    let Some(store) = app.reads.store().cloned() else {
        return Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "StoreUnavailable",
            "no store to read from",
        ));
    };
    if store.is_closed() {
        return Err(QueryError::Store(StoreError::StoreClosed).into());
    }
    let task = tokio::task::spawn_blocking(move || {
        let _permit = permit;
        // Serialize inside the blocking task so large pages stay off the runtime.
        query::execute(&store.snapshot(), &req).map(|r| serde_json::to_vec(&r).expect("response serializes"))
    });
    match tokio::time::timeout(app.timeout, task).await {
        Ok(Ok(Ok(bytes))) => Ok(([(axum::http::header::CONTENT_TYPE, "application/json")], bytes).into_response()),
        Ok(Ok(Err(e))) => Err(e.into()),
        Ok(Err(e)) => Err(ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "Internal",
            e.to_string(),
        )),
        Err(_) => Err(ApiError::new(
            StatusCode::GATEWAY_TIMEOUT,
            "Timeout",
            "request exceeded the query timeout",
        )),
    }
}

async fn browse(
    State(app): State<Arc<AppState>>,
    Path(topic): Path<String>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let topic = parse_topic(&topic)?;
    let req = QueryRequest::Browse {
        topic,
        page: param(&params, "page")?.unwrap_or(0),
        page_size: param(&params, "page_size")?.unwrap_or(DEFAULT_PAGE_SIZE),
    };
    run(app, req).await
}

async fn detail(
    State(app): State<Arc<AppState>>,
    Path(topic): Path<String>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let topic = parse_topic(&topic)?;
    let id: EntityId = param(&params, "id")?.ok_or_else(|| malformed("missing id"))?;
    run(app, QueryRequest::Detail { topic, id }).await
}

async fn post_query(
    State(app): State<Arc<AppState>>,
    Path((topic, op)): Path<(String, String)>,
    body: axum::body::Bytes,
) -> Result<Response, ApiError> {
    let topic = parse_topic(&topic)?;
    let kind = match op.as_str() {
        "query" => "conditional",
        "joint" => "joint",
        "composed" => "composed",
        other => {
            return Err(ApiError::new(
                StatusCode::NOT_FOUND,
                "UnknownOperation",
                format!("unknown operation {other:?}"),
            ))
        }
    };
    let mut doc: Value = serde_json::from_slice(&body).map_err(|e| malformed(e.to_string()))?;
    let Some(obj) = doc.as_object_mut() else {
        return Err(malformed("request body must be a JSON object"));
    };
    obj.insert("kind".into(), kind.into());
    obj.insert("topic".into(), topic.as_str().into());
    let req: QueryRequest = serde_json::from_value(doc).map_err(|e| malformed(e.to_string()))?;
    run(app, req).await
}

/// A running HTTP server on its own runtime.
pub struct HttpServer {
    addr: std::net::SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl HttpServer {
    pub fn start(listen: &str, app: Router) -> std::io::Result<HttpServer> {
        let listener = crate::net::bind(listen)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .max_blocking_threads(64)
            .thread_name("nstore-http")
            .enable_all()
            .build()?;
        let thread = std::thread::Builder::new().name("http".into()).spawn(move || {
            rt.block_on(async move {
                let listener = match tokio::net::TcpListener::from_std(listener) {
                    Ok(l) => l,
                    Err(e) => {
                        tracing::error!(error = %e, "http listener setup failed");
                        return;
                    }
                };
                let serve = axum::serve(listener, app).with_graceful_shutdown(async {
                    let _ = rx.await;
                });
                if let Err(e) = serve.await {
                    tracing::error!(error = %e, "http server failed");
                }
            });
        })?;
        tracing::info!(server = "query", %addr, "listening");
        Ok(HttpServer {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn local_addr(&self) -> std::net::SocketAddr {
        self.addr
    }

    pub fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for HttpServer {
    fn drop(&mut self) {
        self.stop();
    }
}
