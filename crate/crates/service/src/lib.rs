//! HTTP front end for inductive triage: classifies arriving patients against
//! a loaded model bundle and keeps the waiting-room queue.

mod error;
mod patient;
mod queue;
mod verdict;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use triage_core::gnn::{GnnError, InductiveOptions, ModelBundle};

pub use error::{ApiError, ErrorBody};
pub use patient::parse_patient;
pub use queue::{EntryStatus, EventLog, QueueEntry, QueueError, QueueEvent, TriageQueue};
pub use verdict::{Neighbor, Scores, Verdict};

/// A bundle together with the checksum of the bytes it was read from.
#[derive(Debug)]
pub struct LoadedBundle {
    pub bundle: ModelBundle,
    /// CRC-32 of the bundle file, verified on load.
    pub checksum: u32,
    pub source: Option<PathBuf>,
}

impl LoadedBundle {
    pub fn from_bytes(bytes: &[u8], source: Option<PathBuf>) -> Result<Self, GnnError> {
        Ok(Self {
            bundle: ModelBundle::from_bytes(bytes)?,
            checksum: crc32fast::hash(bytes),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, GnnError> {
        let bytes = std::fs::read(path).map_err(|e| GnnError::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes, Some(path.to_path_buf()))
    }
}

/// Milliseconds since the epoch; replaceable so tests get fixed times.
pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64)
    })
}

struct QueueStore {
    queue: TriageQueue,
    log: Option<EventLog>,
}

impl QueueStore {
    // Log first, so a mutation the log could not record never happens.
    fn commit(&mut self, event: QueueEvent) -> Result<QueueEntry, ApiError> {
        if let Some(log) = &mut self.log {
            log.append(&event).map_err(|e| ApiError::internal(e.to_string()))?;
        }
        self.queue
            .apply(&event)
            .cloned()
            .map_err(|e| ApiError::internal(e.to_string()))
    }
}

pub struct AppState {
    bundle: RwLock<Option<Arc<LoadedBundle>>>,
    queue: Mutex<QueueStore>,
    clock: Clock,
    options: InductiveOptions,
}

impl AppState {
    pub fn new(options: InductiveOptions, clock: Clock) -> Self {
        Self {
            bundle: RwLock::new(None),
            queue: Mutex::new(QueueStore {
                queue: TriageQueue::new(),
                log: None,
            }),
            clock,
            options,
        }
    }

    /// Replays and then appends to the event log at `path`.
    pub fn with_event_log(self, path: &Path) -> Result<Self, QueueError> {
        let (log, queue) = EventLog::open(path)?;
        *self.queue.try_lock().expect("state not shared yet") = QueueStore { queue, log: Some(log) };
        Ok(self)
    }

    /// Swaps in a new bundle; requests already running keep the old one.
    pub fn install(&self, bundle: LoadedBundle) {
        *self.bundle.write().expect("bundle lock poisoned") = Some(Arc::new(bundle));
    }

    pub fn bundle(&self) -> Option<Arc<LoadedBundle>> {
        self.bundle.read().expect("bundle lock poisoned").clone()
    }

    fn require_bundle(&self) -> Result<Arc<LoadedBundle>, ApiError> {
        self.bundle().ok_or_else(ApiError::not_loaded)
    }

    pub async fn queue_snapshot(&self) -> Vec<QueueEntry> {
        self.queue.lock().await.queue.ordered().into_iter().cloned().collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct RouterOptions {
    /// Built console assets served at `/`.
    pub static_dir: Option<PathBuf>,
    /// Permissive CORS for a console served from another origin.
    pub cors: bool,
}

pub fn router(state: Arc<AppState>, opts: &RouterOptions) -> Router {
    let mut app = Router::new()
        .route("/healthz", get(healthz))
        .route("/api/v1/triage", post(triage))
        .route("/api/v1/queue", get(list_queue))
        .route("/api/v1/queue/{id}/status", post(set_status))
        .route("/api/v1/model", get(model_card))
        .with_state(state);
    if let Some(dir) = &opts.static_dir {
        app = app.fallback_service(tower_http::services::ServeDir::new(dir));
    }
    if opts.cors {
        app = app.layer(tower_http::cors::CorsLayer::permissive());
    }
    app
}

/// Serves until ctrl-c or SIGTERM, then lets in-flight requests finish.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>, opts: &RouterOptions) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "triage service listening");
    axum::serve(listener, router(state, opts))
        .with_graceful_shutdown(shutdown_signal())
        .await
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
    tracing::info!("shutting down");
}

#[derive(Debug, Serialize)]
struct Health {
    status: &'static str,
    config_hash: String,
    bundle_checksum: String,
    checksum_verified: bool,
}

async fn healthz(State(state): State<Arc<AppState>>) -> Result<Json<Health>, ApiError> {
    let loaded = state.require_bundle()?;
    Ok(Json(Health {
        status: "ok",
        config_hash: loaded.bundle.config_hash.clone(),
        bundle_checksum: format!("{:08x}", loaded.checksum),
        checksum_verified: true,
    }))
}

#[derive(Debug, Serialize)]
struct TriageResponse {
    entry_id: u64,
    arrival_ms: u64,
    status: EntryStatus,
    verdict: Verdict,
}

async fn triage(State(state): State<Arc<AppState>>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let loaded = state.require_bundle()?;
    let value: serde_json::Value = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed_body", e.to_string()))?;
    let patient = parse_patient(&value)?;

    let opts = state.options;
    let classified = patient.clone();
    let worker = Arc::clone(&loaded);
    let raw = tokio::task::spawn_blocking(move || worker.bundle.predict_inductive(&classified, &opts))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    let verdict = Verdict::new(raw, &loaded.bundle.config_hash);

    let entry = {
        let mut store = state.queue.lock().await;
        let event = store.queue.prepare(patient, verdict, (state.clock)());
        store.commit(event)?
    };
    let location = format!("/api/v1/queue/{}", entry.id);
    let response = TriageResponse {
        entry_id: entry.id,
        arrival_ms: entry.arrival_ms,
        status: entry.status,
        verdict: entry.verdict,
    };
    Ok((StatusCode::CREATED, [(header::LOCATION, location)], Json(response)))
}

async fn list_queue(State(state): State<Arc<AppState>>) -> Json<Vec<QueueEntry>> {
    Json(state.queue_snapshot().await)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StatusChange {
    status: EntryStatus,
}

async fn set_status(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<u64>,
    body: Bytes,
) -> Result<Json<QueueEntry>, ApiError> {
    let change: StatusChange = serde_json::from_slice(&body).map_err(|e| {
        let mut err = ApiError::field("status", e.to_string());
        err.body.error = "malformed_body";
        err
    })?;
    let mut store = state.queue.lock().await;
    let event = store.queue.check_status(id, change.status).map_err(|e| match e {
        QueueError::NotFound(id) => ApiError::not_found(id),
        QueueError::Transition { .. } => ApiError::new(StatusCode::CONFLICT, "illegal_transition", e.to_string()),
        QueueError::Log(msg) => ApiError::internal(msg),
    })?;
    Ok(Json(store.commit(event)?))
}

#[derive(Debug, Serialize)]
struct ModelCard {
    preset: Option<String>,
    layers: usize,
    metric: &'static str,
    threshold: f64,
    threshold_source: &'static str,
    nodes: usize,
    edges: usize,
    config_hash: String,
    epochs: usize,
    best_epoch: usize,
    train_accuracy: f64,
    eval_accuracy: Option<f64>,
}

async fn model_card(State(state): State<Arc<AppState>>) -> Result<Json<ModelCard>, ApiError> {
    let loaded = state.require_bundle()?;
    let b = &loaded.bundle;
    let best = b.report.best();
    let threshold = b.graph.threshold();
    Ok(Json(ModelCard {
        preset: b.spec.preset.map(|p| p.name().to_string()),
        layers: b.spec.layers.len(),
        metric: b.graph.metric().name(),
        threshold: threshold.value,
        threshold_source: threshold.source.name(),
        nodes: b.graph.node_count(),
        edges: b.graph.edge_count(),
        config_hash: b.config_hash.clone(),
        epochs: b.report.epochs,
        best_epoch: b.report.best_epoch,
        train_accuracy: best.train_accuracy,
        eval_accuracy: best.eval_accuracy,
    }))
}
