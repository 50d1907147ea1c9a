//! Digital-twin replica of the router estate.
//!
//! Each `RouterTwin` mirrors one core router: an identity, the KPI model it
//! implements, and the latest value per sensor path. Ingest applies
//! last-write-wins by timestamp (ties go to the later arrival), so replaying
//! a telemetry log out of order converges to the same state. Snapshots are
//! taken under the twin's lock and therefore never mix readings from two
//! in-flight writes.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::yang::KpiManifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TwinId(pub u64);

impl fmt::Display for TwinId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TwinError {
    #[error("twin name `{0}` already registered")]
    DuplicateTwin(String),
    #[error("model ref `{0}` not known to the store")]
    UnknownModelRef(String),
    #[error("twin `{0}` not found")]
    NotFound(String),
    #[error("sensor path `{path}` not in model `{model_ref}`")]
    UnknownSensor { path: String, model_ref: String },
    #[error("reading for `{path}` has non-finite value")]
    InvalidValue { path: String },
    #[error("twin `{twin}` snapshot incomplete: {} paths never reported", missing.len())]
    IncompleteState { twin: String, missing: Vec<String> },
    #[error("relation endpoints must differ")]
    SelfRelation,
    #[error("graph document invalid: {0}")]
    BadDocument(String),
}

/// Telemetry line as it appears on the wire, twin addressed by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireReading {
    pub twin: String,
    pub path: String,
    pub value: f64,
    pub ts: u64,
}

/// A reading resolved to a registered twin.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorReading {
    pub twin_id: TwinId,
    pub path: String,
    pub value: f64,
    pub timestamp: u64,
}

/// Atomic view of one twin's sensors at snapshot time.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorFrame {
    pub twin_id: TwinId,
    pub router_name: String,
    pub last_sync: u64,
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug)]
pub struct RouterTwin {
    pub twin_id: TwinId,
    pub router_name: String,
    pub model_ref: String,
    last_sync: u64,
    /// path -> (value, timestamp of the writing reading)
    state: HashMap<String, (f64, u64)>,
}

impl RouterTwin {
    pub fn last_sync(&self) -> u64 {
        self.last_sync
    }

    fn apply(&mut self, path: &str, value: f64, ts: u64) {
        match self.state.get_mut(path) {
            Some(slot) if ts < slot.1 => {}
            Some(slot) => *slot = (value, ts),
            None => {
                self.state.insert(path.to_string(), (value, ts));
            }
        }
        self.last_sync = self.last_sync.max(ts);
    }
}

struct Registry {
    by_name: HashMap<String, TwinId>,
    twins: BTreeMap<TwinId, Arc<RwLock<RouterTwin>>>,
    relations: BTreeSet<(TwinId, TwinId, String)>,
    next_id: u64,
}

/// Thread-safe registry of twins. One writer per twin at a time; snapshots
/// and graph export run concurrently with writers to other twins.
pub struct TwinStore {
    models: RwLock<HashMap<String, Arc<KpiManifest>>>,
    inner: RwLock<Registry>,
}

impl TwinStore {
    pub fn new() -> Self {
        TwinStore {
            models: RwLock::new(HashMap::new()),
            inner: RwLock::new(Registry {
                by_name: HashMap::new(),
                twins: BTreeMap::new(),
                relations: BTreeSet::new(),
                next_id: 1,
            }),
        }
    }

    pub fn add_model(&self, model_ref: &str, manifest: Arc<KpiManifest>) {
        self.models.write().insert(model_ref.to_string(), manifest);
    }

    pub fn model(&self, model_ref: &str) -> Option<Arc<KpiManifest>> {
        self.models.read().get(model_ref).cloned()
    }

    pub fn register_router(&self, name: &str, model_ref: &str) -> Result<TwinId, TwinError> {
        let manifest = self
            .model(model_ref)
            .ok_or_else(|| TwinError::UnknownModelRef(model_ref.to_string()))?;
        drop(manifest);
        let mut reg = self.inner.write();
        if reg.by_name.contains_key(name) {
            return Err(TwinError::DuplicateTwin(name.to_string()));
        }
        let id = TwinId(reg.next_id);
        reg.next_id += 1;
        reg.by_name.insert(name.to_string(), id);
        reg.twins.insert(
            id,
            Arc::new(RwLock::new(RouterTwin {
                twin_id: id,
                router_name: name.to_string(),
                model_ref: model_ref.to_string(),
                last_sync: 0,
                state: HashMap::new(),
            })),
        );
        Ok(id)
    }

    pub fn resolve_name(&self, name: &str) -> Option<TwinId> {
        self.inner.read().by_name.get(name).copied()
    }

    pub fn twin_ids(&self) -> Vec<TwinId> {
        self.inner.read().twins.keys().copied().collect()
    }

    pub fn twin_summaries(&self) -> Vec<(TwinId, String, String, u64)> {
        let reg = self.inner.read();
        reg.twins
            .values()
            .map(|t| {
                let t = t.read();
                (t.twin_id, t.router_name.clone(), t.model_ref.clone(), t.last_sync)
            })
            .collect()
    }

    fn twin_handle(&self, id: TwinId) -> Result<Arc<RwLock<RouterTwin>>, TwinError> {
        self.inner
            .read()
            .twins
            .get(&id)
            .cloned()
            .ok_or_else(|| TwinError::NotFound(id.to_string()))
    }

    /// Applies one reading. The path must be declared by the twin's model and
    /// the value must be finite.
    pub fn ingest(&self, reading: &SensorReading) -> Result<(), TwinError> {
        let handle = self.twin_handle(reading.twin_id)?;
        let model_ref = handle.read().model_ref.clone();
        let manifest = self
            .model(&model_ref)
            .ok_or_else(|| TwinError::UnknownModelRef(model_ref.clone()))?;
        if !manifest.contains(&reading.path) {
            return Err(TwinError::UnknownSensor { path: reading.path.clone(), model_ref });
        }
        if !reading.value.is_finite() {
            return Err(TwinError::InvalidValue { path: reading.path.clone() });
        }
        handle.write().apply(&reading.path, reading.value, reading.timestamp);
        Ok(())
    }

    /// Resolves a wire reading's twin name and ingests it.
    pub fn ingest_wire(&self, reading: &WireReading) -> Result<(), TwinError> {
        let id = self
            .resolve_name(&reading.twin)
            .ok_or_else(|| TwinError::NotFound(reading.twin.clone()))?;
        self.ingest(&SensorReading {
            twin_id: id,
            path: reading.path.clone(),
            value: reading.value,
            timestamp: reading.ts,
        })
    }

    /// Consistent frame of all sensors. Fails with the sorted list of missing
    /// paths until every sensor in the model has reported at least once.
    pub fn snapshot(&self, id: TwinId) -> Result<SensorFrame, TwinError> {
        let handle = self.twin_handle(id)?;
        let twin = handle.read();
        let manifest = self
            .model(&twin.model_ref)
            .ok_or_else(|| TwinError::UnknownModelRef(twin.model_ref.clone()))?;
        let mut missing = Vec::new();
        let mut values = BTreeMap::new();
        for sensor in manifest.sensors() {
            match twin.state.get(&sensor.path) {
                Some((v, _)) => {
                    values.insert(sensor.path.clone(), *v);
                }
                None => missing.push(sensor.path.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(TwinError::IncompleteState { twin: twin.router_name.clone(), missing });
        }
        Ok(SensorFrame {
            twin_id: twin.twin_id,
            router_name: twin.router_name.clone(),
            last_sync: twin.last_sync,
            values,
        })
    }

    pub fn relate(&self, a: TwinId, b: TwinId, label: &str) -> Result<(), TwinError> {
        if a == b {
            return Err(TwinError::SelfRelation);
        }
        let reg = self.inner.read();
        for id in [a, b] {
            if !reg.twins.contains_key(&id) {
                return Err(TwinError::NotFound(id.to_string()));
            }
        }
        drop(reg);
        self.inner.write().relations.insert((a, b, label.to_string()));
        Ok(())
    }

    /// Serializable form of the whole graph, canonically ordered.
    pub fn export_graph(&self) -> TwinGraphDoc {
        let reg = self.inner.read();
        let twins = reg
            .twins
            .values()
            .map(|t| {
                let t = t.read();
                TwinDoc {
                    twin_id: t.twin_id.0,
                    router_name: t.router_name.clone(),
                    model_ref: t.model_ref.clone(),
                    last_sync: t.last_sync,
                    sensors: t
                        .state
                        .iter()
                        .map(|(p, (v, ts))| (p.clone(), SensorDoc { value: *v, ts: *ts }))
                        .collect(),
                }
            })
            .collect();
        let relations = reg
            .relations
            .iter()
            .map(|(a, b, l)| RelationDoc { a: a.0, b: b.0, label: l.clone() })
            .collect();
        TwinGraphDoc { twins, relations }
    }

    /// Rebuilds a store from an exported document. Twin ids are preserved, so
    /// `export(import(export(s)))` is byte-identical to `export(s)`.
    pub fn import_graph(doc: &TwinGraphDoc, models: &HashMap<String, Arc<KpiManifest>>) -> Result<TwinStore, TwinError> {
        let store = TwinStore::new();
        for (r, m) in models {
            store.add_model(r, m.clone());
        }
        let mut reg = store.inner.write();
        let mut max_id = 0u64;
        for t in &doc.twins {
            if store.models.read().get(&t.model_ref).is_none() {
                return Err(TwinError::UnknownModelRef(t.model_ref.clone()));
            }
            if reg.by_name.contains_key(&t.router_name) {
                return Err(TwinError::DuplicateTwin(t.router_name.clone()));
            }
            if reg.twins.contains_key(&TwinId(t.twin_id)) {
                return Err(TwinError::BadDocument(format!("duplicate twin_id {}", t.twin_id)));
            }
            let id = TwinId(t.twin_id);
            max_id = max_id.max(t.twin_id);
            reg.by_name.insert(t.router_name.clone(), id);
            reg.twins.insert(
                id,
                Arc::new(RwLock::new(RouterTwin {
                    twin_id: id,
                    router_name: t.router_name.clone(),
                    model_ref: t.model_ref.clone(),
                    last_sync: t.last_sync,
                    state: t.sensors.iter().map(|(p, s)| (p.clone(), (s.value, s.ts))).collect(),
                })),
            );
        }
        for r in &doc.relations {
            for id in [r.a, r.b] {
                if !reg.twins.contains_key(&TwinId(id)) {
                    return Err(TwinError::BadDocument(format!("relation references unknown twin {id}")));
                }
            }
            if r.a == r.b {
                return Err(TwinError::SelfRelation);
            }
            reg.relations.insert((TwinId(r.a), TwinId(r.b), r.label.clone()));
        }
        reg.next_id = max_id + 1;
        drop(reg);
        Ok(store)
    }
}

impl Default for TwinStore {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorDoc {
    pub value: f64,
    pub ts: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinDoc {
    pub twin_id: u64,
    pub router_name: String,
    pub model_ref: String,
    pub last_sync: u64,
    pub sensors: BTreeMap<String, SensorDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationDoc {
    pub a: u64,
    pub b: u64,
    pub label: String,
}

/// Canonical graph document: twins sorted by id, relations sorted
/// lexicographically, sensor maps sorted by path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinGraphDoc {
    pub twins: Vec<TwinDoc>,
    pub relations: Vec<RelationDoc>,
}

/// Parses one NDJSON telemetry body; returns per-line outcomes so a batch
/// with bad lines still applies the good ones.
pub fn parse_ndjson(body: &str) -> Vec<(usize, Result<WireReading, String>)> {
    body.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, serde_json::from_str::<WireReading>(l).map_err(|e| e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::yang::default_manifest;

    fn store_with_model() -> TwinStore {
        let store = TwinStore::new();
        store.add_model("kpi-bundle-v1", Arc::new(default_manifest()));
        store
    }

    #[test]
    fn register_rejects_duplicates_and_unknown_models() {
        let store = store_with_model();
        store.register_router("core-rtr-1", "kpi-bundle-v1").unwrap();
        assert_eq!(
            store.register_router("core-rtr-1", "kpi-bundle-v1"),
            Err(TwinError::DuplicateTwin("core-rtr-1".into()))
        );
        assert_eq!(
            store.register_router("core-rtr-2", "nope"),
            Err(TwinError::UnknownModelRef("nope".into()))
        );
    }

    #[test]
    fn last_write_wins_by_timestamp() {
        let store = store_with_model();
        let id = store.register_router("core-rtr-1", "kpi-bundle-v1").unwrap();
        let mut r = SensorReading {
            twin_id: id,
            path: "/kpi1/iface/in-octets".into(),
            value: 10.0,
            timestamp: 5,
        };
        store.ingest(&r).unwrap();
        r.value = 20.0;
        r.timestamp = 9;
        store.ingest(&r).unwrap();
        // Stale timestamp: ignored for the value, last_sync keeps its max.
        r.value = 99.0;
        r.timestamp = 7;
        store.ingest(&r).unwrap();
        // Equal timestamp: later arrival wins.
        r.value = 21.0;
        r.timestamp = 9;
        store.ingest(&r).unwrap();

        let err = store.snapshot(id).unwrap_err();
        match err {
            TwinError::IncompleteState { missing, .. } => {
                assert_eq!(missing.len(), crate::yang::TOTAL_SENSORS - 1);
                assert!(!missing.contains(&"/kpi1/iface/in-octets".to_string()));
            }
            other => panic!("unexpected {other:?}"),
        }

        let manifest = default_manifest();
        for s in manifest.sensors() {
            store
                .ingest(&SensorReading { twin_id: id, path: s.path.clone(), value: 1.0, timestamp: 9 })
                .unwrap();
        }
        // Re-assert the interesting path after the fill.
        store
            .ingest(&SensorReading { twin_id: id, path: "/kpi1/iface/in-octets".into(), value: 21.0, timestamp: 9 })
            .unwrap();
        let frame = store.snapshot(id).unwrap();
        assert_eq!(frame.values["/kpi1/iface/in-octets"], 21.0);
        assert_eq!(frame.last_sync, 9);
    }

    #[test]
    fn ingest_validates_path_and_value() {
        let store = store_with_model();
        let id = store.register_router("r1", "kpi-bundle-v1").unwrap();
        let bad_path = SensorReading { twin_id: id, path: "/nope".into(), value: 1.0, timestamp: 1 };
        assert!(matches!(store.ingest(&bad_path), Err(TwinError::UnknownSensor { .. })));
        let bad_value = SensorReading {
            twin_id: id,
            path: "/kpi1/iface/in-octets".into(),
            value: f64::NAN,
            timestamp: 1,
        };
        assert!(matches!(store.ingest(&bad_value), Err(TwinError::InvalidValue { .. })));
    }

    #[test]
    fn wire_format_round_trip() {
        let line = r#"{"twin":"core-rtr-1","path":"/kpi1/iface/in-octets","value":123.4,"ts":9001}"#;
        let parsed: WireReading = serde_json::from_str(line).unwrap();
        assert_eq!(parsed.twin, "core-rtr-1");
        assert_eq!(parsed.ts, 9001);
        let store = store_with_model();
        store.register_router("core-rtr-1", "kpi-bundle-v1").unwrap();
        store.ingest_wire(&parsed).unwrap();
    }

    #[test]
    fn ndjson_reports_bad_lines_by_number() {
        let body = "{\"twin\":\"a\",\"path\":\"/p\",\"value\":1,\"ts\":1}\n\nnot json\n";
        let out = parse_ndjson(body);
        assert_eq!(out.len(), 2);
        assert!(out[0].1.is_ok());
        assert_eq!(out[1].0, 3);
        assert!(out[1].1.is_err());
    }

    #[test]
    fn graph_export_import_is_byte_identical() {
        let store = store_with_model();
        let a = store.register_router("core-rtr-1", "kpi-bundle-v1").unwrap();
        let b = store.register_router("core-rtr-2", "kpi-bundle-v1").unwrap();
        store.relate(a, b, "peer").unwrap();
        store
            .ingest(&SensorReading { twin_id: a, path: "/kpi1/iface/in-octets".into(), value: 3.5, timestamp: 11 })
            .unwrap();
        let doc = store.export_graph();
        let json = serde_json::to_string_pretty(&doc).unwrap();
        let models = store.models.read().clone();
        let store2 = TwinStore::import_graph(&doc, &models).unwrap();
        let json2 = serde_json::to_string_pretty(&store2.export_graph()).unwrap();
        assert_eq!(json, json2);
    }

    #[test]
    fn relate_rejects_self_and_unknown() {
        let store = store_with_model();
        let a = store.register_router("r1", "kpi-bundle-v1").unwrap();
        assert_eq!(store.relate(a, a, "peer"), Err(TwinError::SelfRelation));
        assert!(matches!(store.relate(a, TwinId(99), "peer"), Err(TwinError::NotFound(_))));
    }
}
