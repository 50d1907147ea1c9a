//! End-to-end exercise of the HTTP surface: graph setup, telemetry ingest,
//! brain bootstrap, verdicts, and error mapping, all through the real client
//! against an in-process server.

use std::fmt::Write as _;

use twinguard_client::{api, Client, ClientError};
use twinguard_core::autofs::AutoFsConfig;
use twinguard_core::data::Dataset;
use twinguard_core::labeling::WINDOW_ROWS;
use twinguard_core::synth::{regime_dataset, SIGNAL_CHANNELS};
use twinguard_core::twin::TwinId;
use twinguard_core::yang::default_manifest;

fn client() -> Client {
    let addr = twinguard_service::spawn_in_process().expect("service starts");
    Client::new(&format!("http://{addr}"))
}

fn rows_of(ds: &Dataset) -> Vec<Vec<f64>> {
    (0..ds.n_rows()).map(|i| ds.features().row(i).to_vec()).collect()
}

fn ndjson_for_all_sensors(twin: &str, ts: u64) -> String {
    let manifest = default_manifest();
    let mut body = String::new();
    for (i, sensor) in manifest.sensors().iter().enumerate() {
        writeln!(
            body,
            r#"{{"twin":"{twin}","path":"{}","value":{},"ts":{ts}}}"#,
            sensor.path,
            i as f64 * 0.25
        )
        .unwrap();
    }
    body
}

#[test]
fn graph_ingest_and_snapshot_round_trip() {
    let c = client();
    c.health().expect("health");

    let info = c.register_model("edge-bundle", None).expect("model");
    assert_eq!((info.sensors, info.kpi1, info.kpi2), (92, 37, 55));

    c.register_twin("core-rtr-7", "edge-bundle").expect("twin");
    c.register_twin("edge-rtr-1", "edge-bundle").expect("second twin");
    c.relate("core-rtr-7", "edge-rtr-1", "peer").expect("relation");

    let dup = c.register_twin("core-rtr-7", "edge-bundle").unwrap_err();
    match dup {
        ClientError::Service { status, .. } => assert_eq!(status, 409),
        other => panic!("expected service error, got {other:?}"),
    }

    // A twin exists but has no telemetry yet: snapshot must refuse, naming
    // the conflict rather than inventing values.
    let empty = c.snapshot("edge-rtr-1").unwrap_err();
    match empty {
        ClientError::Service { status, message, .. } => {
            assert_eq!(status, 409);
            assert!(message.contains("incomplete"), "unexpected message: {message}");
        }
        other => panic!("expected service error, got {other:?}"),
    }

    let mut body = ndjson_for_all_sensors("core-rtr-7", 1);
    body.push_str("not json at all\n");
    body.push_str(r#"{"twin":"core-rtr-7","path":"/nope","value":1.0,"ts":1}"#);
    body.push('\n');
    let summary = c.ingest_ndjson(body).expect("ingest");
    assert_eq!(summary.accepted, 92);
    assert_eq!(summary.errors.len(), 2);

    let snap = c.snapshot("core-rtr-7").expect("snapshot");
    assert_eq!(snap.twin, "core-rtr-7");
    assert_eq!(snap.last_sync, 1);
    assert_eq!(snap.values.len(), 92);

    let graph = c.graph().expect("graph");
    assert_eq!(graph.twins.len(), 2);
    assert_eq!(graph.relations.len(), 1);

    let missing = c.snapshot("no-such-twin").unwrap_err();
    match missing {
        ClientError::Service { status, .. } => assert_eq!(status, 404),
        other => panic!("expected service error, got {other:?}"),
    }
}

#[test]
fn bootstrap_then_verdict_and_evaluate() {
    let c = client();
    let created = c.register_twin("core-rtr-1", twinguard_service::DEFAULT_MODEL).expect("twin");

    let signal: Vec<usize> = SIGNAL_CHANNELS.collect();
    let pool_ds = regime_dataset(700, 700, &signal, 41);
    let window_ds = regime_dataset(WINDOW_ROWS / 2, WINDOW_ROWS / 2, &signal, 42);

    let req = api::BootstrapBrain {
        twin: "core-rtr-1".into(),
        seed: 9,
        window: rows_of(&window_ds),
        pool: api::LabeledRows {
            rows: rows_of(&pool_ds),
            labels: pool_ds.labels().iter().map(|l| l.expect("labeled row")).collect(),
        },
        thresholds: None,
        autofs: Some(AutoFsConfig { candidate_epochs: 40, ..AutoFsConfig::default() }),
    };
    let status = c.bootstrap_brain(&req).expect("bootstrap");
    assert_eq!(status.model_version, 1);
    assert_eq!(status.selected_feature_indices.len(), 10);
    assert!(status.winner_method.is_some());

    // Feed one frame and ask for a verdict on it.
    c.ingest_ndjson(ndjson_for_all_sensors("core-rtr-1", 5)).expect("ingest");
    let verdict = c.verdict("core-rtr-1").expect("verdict");
    assert_eq!(verdict.twin_id, TwinId(created.twin_id));
    assert_eq!(verdict.timestamp, 5);
    assert_eq!(verdict.model_version, 1);
    assert_eq!(verdict.selected_feature_indices, status.selected_feature_indices);

    let fetched = c.brain_status("core-rtr-1").expect("status");
    assert_eq!(fetched.window_len, 1);
    // The bootstrap selection happens before the brain exists; only
    // trigger-driven retrains count as its own runs.
    assert_eq!(fetched.autofs_runs, 0);

    // One verdict is far below the minimum evaluation window.
    let eval = c
        .evaluate("core-rtr-1", Some(vec![verdict.class]))
        .expect("evaluate");
    match eval.snapshot {
        twinguard_core::detector::MetricsSnapshot::Insufficient { have, need } => {
            assert_eq!(have, 1);
            assert!(need > 1);
        }
        other => panic!("expected insufficient metrics, got {other:?}"),
    }
    match eval.outcome {
        twinguard_core::detector::TriggerOutcome::NoAction { .. } => {}
        other => panic!("expected no action, got {other:?}"),
    }

    assert!(c.alarms("core-rtr-1").expect("alarms").is_empty());

    let absent = c.brain_status("edge-rtr-9").unwrap_err();
    match absent {
        ClientError::Service { status, .. } => assert_eq!(status, 404),
        other => panic!("expected service error, got {other:?}"),
    }
}

#[test]
fn malformed_bootstrap_rows_are_config_errors() {
    let c = client();
    c.register_twin("core-rtr-2", twinguard_service::DEFAULT_MODEL).expect("twin");

    let req = api::BootstrapBrain {
        twin: "core-rtr-2".into(),
        seed: 1,
        window: vec![vec![0.0; 5]],
        pool: api::LabeledRows { rows: vec![], labels: vec![] },
        thresholds: None,
        autofs: None,
    };
    let err = c.bootstrap_brain(&req).unwrap_err();
    match err {
        ClientError::Service { family, status, .. } => {
            assert_eq!(family, "config");
            assert_eq!(status, 400);
        }
        other => panic!("expected service error, got {other:?}"),
    }
}
