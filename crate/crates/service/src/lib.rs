//! HTTP face of the detection engine.
//!
//! One process owns a `TwinStore` and one `Brain` per router twin. The graph
//! and ingest endpoints are thin wrappers over the store; the `/v1/ops/*`
//! endpoints run the batch commands (prepare, run, bench, report) on the
//! server's filesystem so a whole run stays a single deterministic execution.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::Mutex;

use twinguard_client::api;
use twinguard_core::autofs::{run_autofs, FsError, FsMethod};
use twinguard_core::config::AppConfig;
use twinguard_core::data::ClassLabel;
use twinguard_core::detector::{Brain, DetectorError};
use twinguard_core::labeling::BaselinePool;
use twinguard_core::runner::{self, RunnerError};
use twinguard_core::twin::{parse_ndjson, TwinError, TwinId, TwinStore};
use twinguard_core::yang::{
    build_manifest, default_manifest, default_modules, extract_features, parse_manifest_spec,
    YangError, TOTAL_SENSORS,
};
use twinguard_core::Matrix;

pub const DEFAULT_MODEL: &str = "kpi-bundle";

struct BrainSlot {
    brain: Brain,
    winner_method: Option<FsMethod>,
}

pub struct ServiceState {
    store: TwinStore,
    brains: Mutex<HashMap<TwinId, BrainSlot>>,
}

impl ServiceState {
    /// Fresh state with the built-in KPI bundle already registered.
    pub fn new() -> ServiceState {
        let store = TwinStore::new();
        store.add_model(DEFAULT_MODEL, Arc::new(default_manifest()));
        ServiceState { store, brains: Mutex::new(HashMap::new()) }
    }
}

impl Default for ServiceState {
    fn default() -> Self {
        Self::new()
    }
}

/// Error reply carrying the exit-code family the CLI maps back to.
struct ApiError {
    status: StatusCode,
    family: &'static str,
    message: String,
}

impl ApiError {
    fn config(message: impl Into<String>) -> ApiError {
        ApiError { status: StatusCode::BAD_REQUEST, family: "config", message: message.into() }
    }

    fn data(message: impl Into<String>) -> ApiError {
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            family: "data",
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> ApiError {
        ApiError { status: StatusCode::NOT_FOUND, family: "runtime", message: message.into() }
    }

    fn conflict(message: impl Into<String>) -> ApiError {
        ApiError { status: StatusCode::CONFLICT, family: "runtime", message: message.into() }
    }

    fn runtime(message: impl Into<String>) -> ApiError {
        ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            family: "runtime",
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = api::ErrorBody { error: self.message, family: self.family.to_string() };
        (self.status, Json(body)).into_response()
    }
}

impl From<TwinError> for ApiError {
    fn from(e: TwinError) -> ApiError {
        match &e {
            TwinError::NotFound(_) => ApiError::not_found(e.to_string()),
            TwinError::IncompleteState { .. } => ApiError::conflict(e.to_string()),
            TwinError::DuplicateTwin(_) | TwinError::SelfRelation => {
                ApiError::conflict(e.to_string())
            }
            TwinError::UnknownModelRef(_) | TwinError::BadDocument(_) => {
                ApiError::config(e.to_string())
            }
            TwinError::UnknownSensor { .. } | TwinError::InvalidValue { .. } => {
                ApiError::data(e.to_string())
            }
        }
    }
}

impl From<YangError> for ApiError {
    fn from(e: YangError) -> ApiError {
        ApiError::data(e.to_string())
    }
}

impl From<DetectorError> for ApiError {
    fn from(e: DetectorError) -> ApiError {
        match &e {
            DetectorError::NoActiveModel => ApiError::conflict(e.to_string()),
            DetectorError::WrongWidth { .. } => ApiError::config(e.to_string()),
            DetectorError::InsufficientWindow { .. } => ApiError::conflict(e.to_string()),
            DetectorError::Labeling(_) | DetectorError::Model(_) => {
                ApiError::runtime(e.to_string())
            }
        }
    }
}

impl From<FsError> for ApiError {
    fn from(e: FsError) -> ApiError {
        ApiError::data(e.to_string())
    }
}

impl From<RunnerError> for ApiError {
    fn from(e: RunnerError) -> ApiError {
        match &e {
            RunnerError::Config(_) => ApiError::config(e.to_string()),
            RunnerError::Data(_) => ApiError::data(e.to_string()),
            RunnerError::Runtime(_) => ApiError::runtime(e.to_string()),
        }
    }
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/graph/models", post(register_model))
        .route("/v1/graph/twins", post(register_twin))
        .route("/v1/graph/relations", post(relate))
        .route("/v1/graph", get(graph))
        .route("/v1/ingest", post(ingest))
        .route("/v1/twins/:twin/snapshot", get(snapshot))
        .route("/v1/brains", post(bootstrap_brain))
        .route("/v1/brains/:twin", get(brain_status))
        .route("/v1/brains/:twin/verdict", post(verdict))
        .route("/v1/brains/:twin/evaluate", post(evaluate))
        .route("/v1/brains/:twin/alarms", get(alarms))
        .route("/v1/ops/prepare", post(ops_prepare))
        .route("/v1/ops/run", post(ops_run))
        .route("/v1/ops/bench", post(ops_bench))
        .route("/v1/ops/report", post(ops_report))
        // Bootstrap bodies carry a full selection window plus a labeled pool;
        // the 2 MB default is far too small for 92-wide float rows as JSON.
        .layer(axum::extract::DefaultBodyLimit::max(256 * 1024 * 1024))
        .with_state(state)
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn register_model(
    State(state): State<Arc<ServiceState>>,
    Json(req): Json<api::RegisterModel>,
) -> Result<Json<api::ModelInfo>, ApiError> {
    let manifest = match req.manifest_csv {
        Some(csv) => {
            let (rows, declared) = parse_manifest_spec(&csv)?;
            build_manifest(&default_modules(), &rows, declared)?
        }
        None => default_manifest(),
    };
    let (kpi1, kpi2) = manifest.kpi_counts();
    let info = api::ModelInfo { name: req.name.clone(), sensors: manifest.len(), kpi1, kpi2 };
    state.store.add_model(&req.name, Arc::new(manifest));
    Ok(Json(info))
}

async fn register_twin(
    State(state): State<Arc<ServiceState>>,
    Json(req): Json<api::RegisterTwin>,
) -> Result<Json<api::TwinCreated>, ApiError> {
    let id = state.store.register_router(&req.name, &req.model)?;
    Ok(Json(api::TwinCreated { twin_id: id.0 }))
}

async fn relate(
    State(state): State<Arc<ServiceState>>,
    Json(req): Json<api::Relate>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let a = resolve(&state, &req.a)?;
    let b = resolve(&state, &req.b)?;
    state.store.relate(a, b, &req.label)?;
    Ok(Json(serde_json::json!({ "related": true })))
}

async fn graph(
    State(state): State<Arc<ServiceState>>,
) -> Result<Json<twinguard_core::twin::TwinGraphDoc>, ApiError> {
    Ok(Json(state.store.export_graph()))
}

async fn ingest(
    State(state): State<Arc<ServiceState>>,
    body: String,
) -> Result<Json<api::IngestSummary>, ApiError> {
    let mut accepted = 0;
    let mut errors = Vec::new();
    for (line, parsed) in parse_ndjson(&body) {
        match parsed {
            Ok(reading) => match state.store.ingest_wire(&reading) {
                Ok(()) => accepted += 1,
                Err(e) => errors.push(api::IngestError { line, detail: e.to_string() }),
            },
            Err(detail) => errors.push(api::IngestError { line, detail }),
        }
    }
    Ok(Json(api::IngestSummary { accepted, errors }))
}

async fn snapshot(
    State(state): State<Arc<ServiceState>>,
    Path(twin): Path<String>,
) -> Result<Json<api::Snapshot>, ApiError> {
    let id = resolve(&state, &twin)?;
    let frame = state.store.snapshot(id)?;
    Ok(Json(api::Snapshot {
        twin: frame.router_name,
        last_sync: frame.last_sync,
        values: frame.values,
    }))
}

async fn bootstrap_brain(
    State(state): State<Arc<ServiceState>>,
    Json(req): Json<api::BootstrapBrain>,
) -> Result<Json<api::BrainStatus>, ApiError> {
    let id = resolve(&state, &req.twin)?;
    let twin = req.twin;
    blocking(move || {
        for (i, row) in req.window.iter().chain(req.pool.rows.iter()).enumerate() {
            if row.len() != TOTAL_SENSORS {
                return Err(ApiError::config(format!(
                    "row {i} has {} values, the sensor space has {TOTAL_SENSORS}",
                    row.len()
                )));
            }
        }
        if req.pool.rows.len() != req.pool.labels.len() {
            return Err(ApiError::config(format!(
                "pool has {} rows but {} labels",
                req.pool.rows.len(),
                req.pool.labels.len()
            )));
        }
        let window = Matrix::from_rows(&req.window);
        let pool = BaselinePool::new(Matrix::from_rows(&req.pool.rows), req.pool.labels);
        let active: Vec<usize> = (0..TOTAL_SENSORS).collect();
        let cfg = req.autofs.unwrap_or_default();
        let outcome = run_autofs(&window, &pool, &active, &cfg, req.seed)?;
        let mut model = outcome.winner.model.clone();
        model.set_version(1);

        let thresholds = req.thresholds.unwrap_or_default();
        thresholds.validate().map_err(ApiError::config)?;
        let mut brain = Brain::new(id, pool, thresholds, cfg, req.seed);
        brain.install(outcome.winner.selected.clone(), model)?;

        let slot = BrainSlot { brain, winner_method: Some(outcome.winner.method) };
        let status = status_of(&twin, &slot);
        state.brains.lock().insert(id, slot);
        Ok(Json(status))
    })
    .await
}

async fn brain_status(
    State(state): State<Arc<ServiceState>>,
    Path(twin): Path<String>,
) -> Result<Json<api::BrainStatus>, ApiError> {
    let id = resolve(&state, &twin)?;
    let brains = state.brains.lock();
    let slot = brains.get(&id).ok_or_else(|| no_brain(&twin))?;
    Ok(Json(status_of(&twin, slot)))
}

async fn verdict(
    State(state): State<Arc<ServiceState>>,
    Path(twin): Path<String>,
) -> Result<Json<twinguard_core::detector::DetectionVerdict>, ApiError> {
    let id = resolve(&state, &twin)?;
    let frame = state.store.snapshot(id)?;
    let manifest = manifest_of(&state, id)?;
    let fv = extract_features(&manifest, &frame)?;
    let mut brains = state.brains.lock();
    let slot = brains.get_mut(&id).ok_or_else(|| no_brain(&twin))?;
    Ok(Json(slot.brain.on_feature_vector(&fv)?))
}

async fn evaluate(
    State(state): State<Arc<ServiceState>>,
    Path(twin): Path<String>,
    Json(req): Json<api::Evaluate>,
) -> Result<Json<api::Evaluation>, ApiError> {
    let id = resolve(&state, &twin)?;
    blocking(move || {
        let mut brains = state.brains.lock();
        let slot = brains.get_mut(&id).ok_or_else(|| no_brain(&twin))?;
        let reference: Vec<ClassLabel> = match req.reference {
            Some(labels) => labels,
            None => slot.brain.pseudo_label_window()?,
        };
        let snapshot = slot.brain.update_metrics(&reference);
        let outcome = slot.brain.check_and_trigger(&snapshot);
        if let twinguard_core::detector::TriggerOutcome::Triggered(report) = &outcome {
            slot.winner_method = Some(report.winner_method);
        }
        Ok(Json(api::Evaluation { snapshot, outcome }))
    })
    .await
}

async fn alarms(
    State(state): State<Arc<ServiceState>>,
    Path(twin): Path<String>,
) -> Result<Json<Vec<twinguard_core::detector::AttackAlarm>>, ApiError> {
    let id = resolve(&state, &twin)?;
    let brains = state.brains.lock();
    let slot = brains.get(&id).ok_or_else(|| no_brain(&twin))?;
    Ok(Json(slot.brain.alarms().to_vec()))
}

async fn ops_prepare(
    Json(cfg): Json<AppConfig>,
) -> Result<Json<api::PrepareOutcome>, ApiError> {
    blocking(move || {
        let artifacts = runner::execute_prepare(&cfg)?;
        Ok(Json(api::PrepareOutcome { dataset: artifacts.dataset, stats: artifacts.stats }))
    })
    .await
}

async fn ops_run(
    Json(cfg): Json<AppConfig>,
) -> Result<Json<twinguard_core::report::RunReport>, ApiError> {
    blocking(move || Ok(Json(runner::execute_run(&cfg)?))).await
}

async fn ops_bench(Json(cfg): Json<AppConfig>) -> Result<Json<api::BenchOutcome>, ApiError> {
    blocking(move || {
        let path = runner::execute_bench(&cfg)?;
        let csv = std::fs::read_to_string(&path)
            .map_err(|e| ApiError::runtime(format!("reading {}: {e}", path.display())))?;
        Ok(Json(api::BenchOutcome { path, csv }))
    })
    .await
}

async fn ops_report(Json(req): Json<api::RunDir>) -> Result<Json<api::PlotData>, ApiError> {
    blocking(move || {
        let (detection_rate, method_comparison) = runner::execute_report(&req.run_dir)?;
        Ok(Json(api::PlotData { detection_rate, method_comparison }))
    })
    .await
}

fn resolve(state: &ServiceState, name: &str) -> Result<TwinId, ApiError> {
    state
        .store
        .resolve_name(name)
        .ok_or_else(|| ApiError::not_found(format!("no twin named `{name}`")))
}

fn manifest_of(
    state: &ServiceState,
    id: TwinId,
) -> Result<Arc<twinguard_core::yang::KpiManifest>, ApiError> {
    let model_ref = state
        .store
        .twin_summaries()
        .into_iter()
        .find(|(tid, _, _, _)| *tid == id)
        .map(|(_, _, model_ref, _)| model_ref)
        .ok_or_else(|| ApiError::not_found(format!("no twin with id {id}")))?;
    state
        .store
        .model(&model_ref)
        .ok_or_else(|| ApiError::runtime(format!("model `{model_ref}` vanished")))
}

fn no_brain(twin: &str) -> ApiError {
    ApiError::not_found(format!("no brain bootstrapped for twin `{twin}`"))
}

fn status_of(twin: &str, slot: &BrainSlot) -> api::BrainStatus {
    api::BrainStatus {
        twin: twin.to_string(),
        model_version: slot.brain.model_version().unwrap_or(0),
        selected_feature_indices: slot.brain.active_indices().map(<[usize]>::to_vec).unwrap_or_default(),
        window_len: slot.brain.window_len(),
        autofs_runs: slot.brain.autofs_runs(),
        winner_method: slot.winner_method,
    }
}

/// Runs CPU-heavy work off the async executor.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| Err(ApiError::runtime(format!("worker panicked: {e}"))))
}

/// Serves until the listener errors or the process exits.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<ServiceState>,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

/// Starts the service on a background thread bound to an ephemeral local
/// port. The CLI uses this to run client commands without a separate server
/// process; the thread lives until the process exits.
pub fn spawn_in_process() -> std::io::Result<SocketAddr> {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::Builder::new().name("twinguard-service".into()).spawn(move || {
        let rt = match tokio::runtime::Builder::new_current_thread().enable_all().build() {
            Ok(rt) => rt,
            Err(e) => {
                let _ = tx.send(Err(e));
                return;
            }
        };
        rt.block_on(async move {
            let listener = match tokio::net::TcpListener::bind("127.0.0.1:0").await {
                Ok(l) => l,
                Err(e) => {
                    let _ = tx.send(Err(e));
                    return;
                }
            };
            let addr = listener.local_addr().expect("bound listener has an address");
            let _ = tx.send(Ok(addr));
            let _ = serve(listener, Arc::new(ServiceState::new())).await;
        });
    })?;
    rx.recv().map_err(|_| {
        std::io::Error::new(std::io::ErrorKind::Other, "service thread died before binding")
    })?
}
