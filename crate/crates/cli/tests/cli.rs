//! Exercises the installed binary the way an operator would: real process,
//! real flags, real exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn twinguard(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_twinguard"));
    cmd.current_dir(dir).args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn missing_inputs_exit_with_the_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = twinguard(dir.path(), &["prepare", "--out", "out"], &[]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_of(&out));
    assert!(stderr_of(&out).contains("d1.csv"), "stderr: {}", stderr_of(&out));
}

#[test]
fn unknown_flags_exit_with_the_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = twinguard(dir.path(), &["run", "--no-such-flag"], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_without_logs_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("out")).unwrap();
    let out = twinguard(dir.path(), &["report", "--out", "out"], &[]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr_of(&out));
}

#[test]
fn synth_prepare_bench_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let out = twinguard(dir.path(), &["synth-data"], &[]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    assert!(dir.path().join("d1.csv").exists());
    assert!(dir.path().join("d2.csv").exists());

    let out = twinguard(dir.path(), &["prepare", "--out", "out"], &[]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let stats: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/prep_stats.json")).unwrap())
            .unwrap();
    assert_eq!(stats["columns"], 92);
    assert!(stats["imbalance_ratio"].as_f64().unwrap() <= 1.5);

    // One seed, trimmed training, full selection race.
    let out = twinguard(
        dir.path(),
        &["autofs-bench", "--out", "out", "--seeds", "1"],
        &[("TWINGUARD_BENCH__AUTOFS__CANDIDATE_EPOCHS", "40")],
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let table = std::fs::read_to_string(dir.path().join("out/bench.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "seed,method,recall,time,winner");
    assert_eq!(lines.len(), 6, "one row per candidate:\n{table}");
    assert_eq!(lines.iter().filter(|l| l.ends_with(",true")).count(), 1);
}

#[test]
fn row_cap_flag_limits_each_source() {
    let dir = tempfile::tempdir().unwrap();
    let out = twinguard(dir.path(), &["synth-data"], &[]);
    assert_eq!(out.status.code(), Some(0));

    let out = twinguard(dir.path(), &["prepare", "--out", "capped", "--row-cap", "900"], &[]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let stats: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("capped/prep_stats.json")).unwrap(),
    )
    .unwrap();
    for source in ["d1", "d2"] {
        let loaded = stats[source]["loaded"]["rows"].as_u64().unwrap();
        assert!(loaded <= 900, "{source} loaded {loaded} rows past the cap");
    }
}
