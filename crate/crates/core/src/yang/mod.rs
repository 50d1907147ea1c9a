//! YANG-subset schema handling and the KPI sensor manifest.
//!
//! Router models are described by a small YANG subset: a module wraps nested
//! containers whose leaves are numeric sensors. A manifest binds a fixed,
//! ordered list of sensor paths to the two KPI families and to source columns
//! in replayable datasets; its order defines the layout of every feature
//! vector downstream.

mod lexer;
mod parser;

pub use parser::{parse_module, print_module};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::twin::{SensorFrame, TwinId};

pub const KPI1_SENSORS: usize = 37;
pub const KPI2_SENSORS: usize = 55;
pub const TOTAL_SENSORS: usize = KPI1_SENSORS + KPI2_SENSORS;

#[derive(Debug, Error, PartialEq)]
pub enum YangError {
    #[error("syntax error at {line}:{col}: expected {expected}")]
    SyntaxError { line: usize, col: usize, expected: String },
    #[error("unsupported YANG keyword `{keyword}` at line {line}")]
    UnsupportedKeyword { keyword: String, line: usize },
    #[error("duplicate sibling node `{name}` at line {line}")]
    DuplicateNode { name: String, line: usize },
    #[error("path `{0}` not found in any module")]
    PathNotFound(String),
    #[error("path `{0}` names a container, not a leaf")]
    PathIsContainer(String),
    #[error("duplicate manifest path `{0}`")]
    DuplicatePath(String),
    #[error("manifest count mismatch: declared {declared_kpi1}+{declared_kpi2}, found {found_kpi1}+{found_kpi2}")]
    CountMismatch {
        declared_kpi1: usize,
        declared_kpi2: usize,
        found_kpi1: usize,
        found_kpi2: usize,
    },
    #[error("manifest spec row {row}: {reason}")]
    BadManifestRow { row: usize, reason: String },
    #[error("sensor `{0}` missing from frame")]
    MissingSensor(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeafType {
    Int,
    Decimal,
    Counter,
    Gauge,
}

impl LeafType {
    /// Accepts the subset names plus their common width-suffixed spellings.
    pub fn parse(s: &str) -> Option<LeafType> {
        match s {
            "int" | "int8" | "int16" | "int32" | "int64" | "uint32" | "uint64" => {
                Some(LeafType::Int)
            }
            "decimal" | "decimal64" => Some(LeafType::Decimal),
            "counter" | "counter32" | "counter64" => Some(LeafType::Counter),
            "gauge" | "gauge32" | "gauge64" => Some(LeafType::Gauge),
            _ => None,
        }
    }

    pub fn canonical_name(self) -> &'static str {
        match self {
            LeafType::Int => "int",
            LeafType::Decimal => "decimal",
            LeafType::Counter => "counter",
            LeafType::Gauge => "gauge",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Container { name: String, children: Vec<Node> },
    Leaf { name: String, leaf_type: LeafType },
}

impl Node {
    pub fn name(&self) -> &str {
        match self {
            Node::Container { name, .. } | Node::Leaf { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct YangModule {
    pub name: String,
    pub namespace: String,
    pub body: Vec<Node>,
}

/// A leaf located by absolute path across a set of modules.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedLeaf {
    pub path: String,
    pub leaf_type: LeafType,
}

/// Finds the unique leaf at `path` (`/container/.../leaf`), searching modules
/// in order.
pub fn resolve_path(modules: &[YangModule], path: &str) -> Result<ResolvedLeaf, YangError> {
    let trimmed = path.strip_prefix('/').ok_or_else(|| YangError::PathNotFound(path.into()))?;
    let segments: Vec<&str> = trimmed.split('/').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(YangError::PathNotFound(path.into()));
    }
    for module in modules {
        if let Some(found) = resolve_in(&module.body, &segments) {
            return match found {
                Node::Leaf { leaf_type, .. } => {
                    Ok(ResolvedLeaf { path: path.to_string(), leaf_type: *leaf_type })
                }
                Node::Container { .. } => Err(YangError::PathIsContainer(path.into())),
            };
        }
    }
    Err(YangError::PathNotFound(path.into()))
}

fn resolve_in<'a>(nodes: &'a [Node], segments: &[&str]) -> Option<&'a Node> {
    let (head, rest) = segments.split_first()?;
    let node = nodes.iter().find(|n| n.name() == *head)?;
    if rest.is_empty() {
        return Some(node);
    }
    match node {
        Node::Container { children, .. } => resolve_in(children, rest),
        Node::Leaf { .. } => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KpiTag {
    #[serde(rename = "kpi1")]
    Kpi1,
    #[serde(rename = "kpi2")]
    Kpi2,
}

/// One sensor binding: schema leaf, KPI family, and the dataset column that
/// feeds it during replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorDescriptor {
    pub path: String,
    pub leaf_type: LeafType,
    pub kpi: KpiTag,
    pub source_column: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub path: String,
    pub kpi: KpiTag,
    pub source_column: String,
}

/// Ordered sensor list; the order fixes feature-vector layout.
#[derive(Debug, Clone, PartialEq)]
pub struct KpiManifest {
    sensors: Vec<SensorDescriptor>,
    by_path: HashMap<String, usize>,
}

impl KpiManifest {
    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    pub fn sensors(&self) -> &[SensorDescriptor] {
        &self.sensors
    }

    pub fn index_of(&self, path: &str) -> Option<usize> {
        self.by_path.get(path).copied()
    }

    pub fn contains(&self, path: &str) -> bool {
        self.by_path.contains_key(path)
    }

    /// (KPI-1 count, KPI-2 count).
    pub fn kpi_counts(&self) -> (usize, usize) {
        let k1 = self.sensors.iter().filter(|s| s.kpi == KpiTag::Kpi1).count();
        (k1, self.sensors.len() - k1)
    }
}

/// Validates every spec row against the schema and builds the manifest.
/// `declared` totals (KPI-1, KPI-2), when present, must match what the rows
/// actually contain.
pub fn build_manifest(
    modules: &[YangModule],
    rows: &[ManifestRow],
    declared: Option<(usize, usize)>,
) -> Result<KpiManifest, YangError> {
    let mut sensors = Vec::with_capacity(rows.len());
    let mut by_path = HashMap::with_capacity(rows.len());
    for row in rows {
        let leaf = resolve_path(modules, &row.path)?;
        if by_path.insert(row.path.clone(), sensors.len()).is_some() {
            return Err(YangError::DuplicatePath(row.path.clone()));
        }
        sensors.push(SensorDescriptor {
            path: row.path.clone(),
            leaf_type: leaf.leaf_type,
            kpi: row.kpi,
            source_column: row.source_column.clone(),
        });
    }
    let manifest = KpiManifest { sensors, by_path };
    if let Some((d1, d2)) = declared {
        let (f1, f2) = manifest.kpi_counts();
        if (d1, d2) != (f1, f2) {
            return Err(YangError::CountMismatch {
                declared_kpi1: d1,
                declared_kpi2: d2,
                found_kpi1: f1,
                found_kpi2: f2,
            });
        }
    }
    Ok(manifest)
}

/// Parses a manifest spec CSV (`path,kpi,source_column`). A leading comment
/// line `# expect kpi1=N kpi2=M` declares expected family totals.
pub fn parse_manifest_spec(text: &str) -> Result<(Vec<ManifestRow>, Option<(usize, usize)>), YangError> {
    let mut declared = None;
    for line in text.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(d) = parse_expect_comment(rest) {
                declared = Some(d);
            }
            continue;
        }
        break;
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| YangError::BadManifestRow { row: 0, reason: e.to_string() })?
        .clone();
    let expected = ["path", "kpi", "source_column"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(YangError::BadManifestRow {
            row: 0,
            reason: format!("header must be `path,kpi,source_column`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| YangError::BadManifestRow { row: i + 1, reason: e.to_string() })?;
        if record.len() != 3 {
            return Err(YangError::BadManifestRow { row: i + 1, reason: "expected 3 fields".into() });
        }
        let kpi = match &record[1] {
            "kpi1" | "KPI1" => KpiTag::Kpi1,
            "kpi2" | "KPI2" => KpiTag::Kpi2,
            other => {
                return Err(YangError::BadManifestRow {
                    row: i + 1,
                    reason: format!("kpi must be kpi1 or kpi2, got `{other}`"),
                })
            }
        };
        rows.push(ManifestRow {
            path: record[0].to_string(),
            kpi,
            source_column: record[2].to_string(),
        });
    }
    Ok((rows, declared))
}

fn parse_expect_comment(rest: &str) -> Option<(usize, usize)> {
    let rest = rest.trim();
    let rest = rest.strip_prefix("expect")?.trim();
    let mut k1 = None;
    let mut k2 = None;
    for part in rest.split_whitespace() {
        if let Some(v) = part.strip_prefix("kpi1=") {
            k1 = v.parse().ok();
        } else if let Some(v) = part.strip_prefix("kpi2=") {
            k2 = v.parse().ok();
        }
    }
    Some((k1?, k2?))
}

/// A twin snapshot flattened into the manifest's feature order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub twin_id: TwinId,
    pub timestamp: u64,
    pub values: Vec<f64>,
}

/// Flattens `frame` into manifest order. Every manifest path must be present.
pub fn extract_features(manifest: &KpiManifest, frame: &SensorFrame) -> Result<FeatureVector, YangError> {
    let mut values = Vec::with_capacity(manifest.len());
    for sensor in &manifest.sensors {
        match frame.values.get(&sensor.path) {
            Some(v) => values.push(*v),
            None => return Err(YangError::MissingSensor(sensor.path.clone())),
        }
    }
    Ok(FeatureVector { twin_id: frame.twin_id, timestamp: frame.last_sync, values })
}

pub const KPI1_YANG: &str = include_str!("../../data/kpi-1.yang");
pub const KPI2_YANG: &str = include_str!("../../data/kpi-2.yang");
pub const MANIFEST_SPEC_CSV: &str = include_str!("../../data/manifest.csv");

/// The two KPI modules shipped with the engine.
pub fn default_modules() -> Vec<YangModule> {
    vec![
        parse_module(KPI1_YANG).expect("bundled kpi-1 module parses"),
        parse_module(KPI2_YANG).expect("bundled kpi-2 module parses"),
    ]
}

/// The bundled 92-sensor manifest (37 KPI-1 + 55 KPI-2).
pub fn default_manifest() -> KpiManifest {
    let modules = default_modules();
    let (rows, declared) = parse_manifest_spec(MANIFEST_SPEC_CSV).expect("bundled manifest parses");
    build_manifest(&modules, &rows, declared).expect("bundled manifest builds")
}
