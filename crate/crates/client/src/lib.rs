//! Blocking HTTP client for the detection service, plus the request and
//! response bodies both sides share.

use serde::{Deserialize, Serialize};
use thiserror::Error;
use twinguard_core::config::AppConfig;
use twinguard_core::data::ClassLabel;
use twinguard_core::detector::{
    AttackAlarm, DetectionVerdict, MetricsSnapshot, ThresholdConfig, TriggerOutcome,
};
use twinguard_core::prep::PrepStats;
use twinguard_core::report::RunReport;
use twinguard_core::twin::TwinGraphDoc;

pub mod api {
    //! Bodies of the service endpoints.

    use super::*;
    use twinguard_core::autofs::{AutoFsConfig, FsMethod};

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct RegisterModel {
        pub name: String,
        /// Manifest spec CSV; the built-in KPI bundle when absent.
        #[serde(default)]
        pub manifest_csv: Option<String>,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct ModelInfo {
        pub name: String,
        pub sensors: usize,
        pub kpi1: usize,
        pub kpi2: usize,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct RegisterTwin {
        pub name: String,
        pub model: String,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct TwinCreated {
        pub twin_id: u64,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct Relate {
        pub a: String,
        pub b: String,
        pub label: String,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct IngestSummary {
        pub accepted: usize,
        pub errors: Vec<IngestError>,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct IngestError {
        pub line: usize,
        pub detail: String,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct Snapshot {
        pub twin: String,
        pub last_sync: u64,
        pub values: std::collections::BTreeMap<String, f64>,
    }

    /// Labeled rows in the full sensor space.
    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct LabeledRows {
        pub rows: Vec<Vec<f64>>,
        pub labels: Vec<ClassLabel>,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct BootstrapBrain {
        pub twin: String,
        pub seed: u64,
        /// Unlabeled selection window, full sensor width.
        pub window: Vec<Vec<f64>>,
        pub pool: LabeledRows,
        #[serde(default)]
        pub thresholds: Option<ThresholdConfig>,
        #[serde(default)]
        pub autofs: Option<AutoFsConfig>,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct BrainStatus {
        pub twin: String,
        pub model_version: u64,
        pub selected_feature_indices: Vec<usize>,
        pub window_len: usize,
        pub autofs_runs: u64,
        pub winner_method: Option<FsMethod>,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct Evaluate {
        /// Reference labels aligned to the newest verdicts; `None` asks the
        /// brain to pseudo-label its own window.
        #[serde(default)]
        pub reference: Option<Vec<ClassLabel>>,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct Evaluation {
        pub snapshot: MetricsSnapshot,
        pub outcome: TriggerOutcome,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct RunDir {
        pub run_dir: std::path::PathBuf,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct PlotData {
        pub detection_rate: std::path::PathBuf,
        pub method_comparison: std::path::PathBuf,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct PrepareOutcome {
        pub dataset: std::path::PathBuf,
        pub stats: PrepStats,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct BenchOutcome {
        pub path: std::path::PathBuf,
        pub csv: String,
    }

    /// Error body every endpoint uses.
    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct ErrorBody {
        pub error: String,
        /// config | data | runtime
        pub family: String,
    }
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("{family} error from service: {message}")]
    Service { family: String, message: String, status: u16 },
    #[error("unexpected response: {0}")]
    Decode(String),
}

impl ClientError {
    /// Exit-code family of the failure, matching the runner's convention.
    pub fn exit_code(&self) -> i32 {
        match self {
            ClientError::Service { family, .. } => match family.as_str() {
                "config" => 2,
                "data" => 3,
                _ => 4,
            },
            _ => 4,
        }
    }
}

pub struct Client {
    base: String,
    http: reqwest::blocking::Client,
}

impl Client {
    pub fn new(base_url: &str) -> Client {
        // No request timeout: a detection run or bench sweep legitimately
        // holds the connection for minutes.
        let http = reqwest::blocking::Client::builder()
            .timeout(None)
            .build()
            .expect("client construction is infallible without TLS");
        Client { base: base_url.trim_end_matches('/').to_string(), http }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn decode<T: serde::de::DeserializeOwned>(
        resp: reqwest::blocking::Response,
    ) -> Result<T, ClientError> {
        let status = resp.status();
        if status.is_success() {
            let text = resp.text()?;
            serde_json::from_str(&text).map_err(|e| ClientError::Decode(format!("{e}: {text}")))
        } else {
            let text = resp.text().unwrap_or_default();
            let body: api::ErrorBody = serde_json::from_str(&text).unwrap_or(api::ErrorBody {
                error: text,
                family: "runtime".into(),
            });
            Err(ClientError::Service {
                family: body.family,
                message: body.error,
                status: status.as_u16(),
            })
        }
    }

    fn post_json<B: Serialize, T: serde::de::DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<T, ClientError> {
        Self::decode(self.http.post(self.url(path)).json(body).send()?)
    }

    fn get_json<T: serde::de::DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        Self::decode(self.http.get(self.url(path)).send()?)
    }

    pub fn health(&self) -> Result<(), ClientError> {
        let _: serde_json::Value = self.get_json("/v1/health")?;
        Ok(())
    }

    pub fn register_model(
        &self,
        name: &str,
        manifest_csv: Option<String>,
    ) -> Result<api::ModelInfo, ClientError> {
        self.post_json(
            "/v1/graph/models",
            &api::RegisterModel { name: name.to_string(), manifest_csv },
        )
    }

    pub fn register_twin(&self, name: &str, model: &str) -> Result<api::TwinCreated, ClientError> {
        self.post_json(
            "/v1/graph/twins",
            &api::RegisterTwin { name: name.to_string(), model: model.to_string() },
        )
    }

    pub fn relate(&self, a: &str, b: &str, label: &str) -> Result<serde_json::Value, ClientError> {
        self.post_json(
            "/v1/graph/relations",
            &api::Relate { a: a.to_string(), b: b.to_string(), label: label.to_string() },
        )
    }

    pub fn graph(&self) -> Result<TwinGraphDoc, ClientError> {
        self.get_json("/v1/graph")
    }

    pub fn ingest_ndjson(&self, body: String) -> Result<api::IngestSummary, ClientError> {
        Self::decode(self.http.post(self.url("/v1/ingest")).body(body).send()?)
    }

    pub fn snapshot(&self, twin: &str) -> Result<api::Snapshot, ClientError> {
        self.get_json(&format!("/v1/twins/{twin}/snapshot"))
    }

    pub fn bootstrap_brain(
        &self,
        req: &api::BootstrapBrain,
    ) -> Result<api::BrainStatus, ClientError> {
        self.post_json("/v1/brains", req)
    }

    pub fn verdict(&self, twin: &str) -> Result<DetectionVerdict, ClientError> {
        self.post_json(&format!("/v1/brains/{twin}/verdict"), &serde_json::json!({}))
    }

    pub fn evaluate(
        &self,
        twin: &str,
        reference: Option<Vec<ClassLabel>>,
    ) -> Result<api::Evaluation, ClientError> {
        self.post_json(&format!("/v1/brains/{twin}/evaluate"), &api::Evaluate { reference })
    }

    pub fn brain_status(&self, twin: &str) -> Result<api::BrainStatus, ClientError> {
        self.get_json(&format!("/v1/brains/{twin}"))
    }

    pub fn alarms(&self, twin: &str) -> Result<Vec<AttackAlarm>, ClientError> {
        self.get_json(&format!("/v1/brains/{twin}/alarms"))
    }

    pub fn prepare(&self, cfg: &AppConfig) -> Result<api::PrepareOutcome, ClientError> {
        self.post_json("/v1/ops/prepare", cfg)
    }

    pub fn run(&self, cfg: &AppConfig) -> Result<RunReport, ClientError> {
        self.post_json("/v1/ops/run", cfg)
    }

    pub fn bench(&self, cfg: &AppConfig) -> Result<api::BenchOutcome, ClientError> {
        self.post_json("/v1/ops/bench", cfg)
    }

    pub fn report(&self, run_dir: &std::path::Path) -> Result<api::PlotData, ClientError> {
        self.post_json("/v1/ops/report", &api::RunDir { run_dir: run_dir.to_path_buf() })
    }
}
