//! Run artifacts and their readers: verdict NDJSON, alarm and trigger logs,
//! windowed-metrics CSV, the run report, and the plot-data files recomputed
//! from raw logs.

use crate::data::ClassLabel;
use crate::detector::{AttackAlarm, DetectionVerdict, Metrics, MetricsSnapshot, TriggerReport};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("run log missing: {0}")]
    MissingLogs(PathBuf),
    #[error("{path}:{line}: {detail}")]
    BadLine { path: PathBuf, line: usize, detail: String },
    #[error("cannot write {path}: {source}")]
    Unwritable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One verdict as logged on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub twin: String,
    pub ts: u64,
    pub class: ClassLabel,
    pub confidence: f64,
    pub model_version: u64,
}

pub fn verdict_line(router: &str, v: &DetectionVerdict) -> String {
    let record = VerdictRecord {
        twin: router.to_string(),
        ts: v.timestamp,
        class: v.class,
        confidence: v.confidence,
        model_version: v.model_version,
    };
    let mut line = serde_json::to_string(&record).expect("verdict serializes");
    line.push('\n');
    line
}

pub fn parse_verdict_log(path: &Path, text: &str) -> Result<Vec<VerdictRecord>, ReportError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|e| ReportError::BadLine {
            path: path.to_path_buf(),
            line: i + 1,
            detail: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Pretty JSON with a trailing newline. Struct field order is fixed, so the
/// same value always prints the same bytes.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

pub const METRICS_CSV_HEADER: &str =
    "at_verdict,tick,model_version,status,accuracy,precision,recall,f_measure,tp,fp,fn,tn\n";

pub fn metrics_csv_row(
    at_verdict: u64,
    tick: u64,
    model_version: u64,
    snapshot: &MetricsSnapshot,
) -> String {
    match snapshot {
        MetricsSnapshot::Insufficient { .. } => {
            format!("{at_verdict},{tick},{model_version},insufficient,,,,,,,,\n")
        }
        MetricsSnapshot::Ready(m) => {
            let c = m.confusion;
            format!(
                "{at_verdict},{tick},{model_version},ready,{},{},{},{},{},{},{},{}\n",
                m.accuracy, m.precision, m.recall, m.f_measure, c.tp, c.fp, c.fn_, c.tn
            )
        }
    }
}

/// One feature-selection trigger as it appears in the run log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TriggerLogEntry {
    pub at_verdict: u64,
    pub tick: u64,
    pub report: TriggerReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlarmReport {
    pub onset_tick: u64,
    pub cleared_tick: Option<u64>,
    /// Simulated minutes from the enclosing attack interval's start; absent
    /// for alarms outside every interval.
    pub latency_minutes: Option<f64>,
}

pub fn alarm_report(
    alarm: &AttackAlarm,
    schedule: &[(u64, u64)],
    ticks_per_minute: u64,
) -> AlarmReport {
    let latency_minutes = schedule
        .iter()
        .find(|&&(s, e)| s <= alarm.onset_tick && alarm.onset_tick < e)
        .map(|&(s, _)| (alarm.onset_tick - s) as f64 / ticks_per_minute as f64);
    AlarmReport { onset_tick: alarm.onset_tick, cleared_tick: alarm.cleared_tick, latency_minutes }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsPoint {
    pub at_verdict: u64,
    pub tick: u64,
    pub model_version: u64,
    pub snapshot: MetricsSnapshot,
}

/// The whole run, one canonical JSON document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub router: String,
    pub seed: u64,
    pub ticks: u64,
    pub rows_per_tick: usize,
    pub ticks_per_minute: u64,
    pub schedule: Vec<(u64, u64)>,
    pub ground_truth_metrics: bool,
    pub verdict_count: u64,
    pub initial_model_version: u64,
    pub final_model_version: u64,
    pub metrics_series: Vec<MetricsPoint>,
    pub alarms: Vec<AlarmReport>,
    pub triggers: Vec<TriggerLogEntry>,
    /// Whole-run confusion against ground truth when available, otherwise
    /// the last ready snapshot.
    pub final_metrics: Option<Metrics>,
}

/// Per simulated minute: verdict count and the share flagged DDoS, plus
/// agreement with ground truth when a truth log is supplied.
pub fn detection_rate_csv(
    verdicts: &[VerdictRecord],
    truth: Option<&[(u64, ClassLabel)]>,
    ticks_per_minute: u64,
) -> String {
    let truth_at = |tick: u64| -> Option<ClassLabel> {
        truth.and_then(|t| t.iter().find(|(k, _)| *k == tick).map(|(_, l)| *l))
    };
    let mut minutes: Vec<(u64, [u64; 3])> = Vec::new(); // (minute, [total, ddos, matching])
    for v in verdicts {
        let minute = v.ts / ticks_per_minute;
        if minutes.last().map(|(m, _)| *m) != Some(minute) {
            minutes.push((minute, [0; 3]));
        }
        let cell = &mut minutes.last_mut().unwrap().1;
        cell[0] += 1;
        if v.class == ClassLabel::Ddos {
            cell[1] += 1;
        }
        if truth_at(v.ts) == Some(v.class) {
            cell[2] += 1;
        }
    }
    let mut out = String::from("minute,verdicts,flagged_ddos,ddos_share,accuracy\n");
    for (minute, [total, ddos, matching]) in minutes {
        let share = ddos as f64 / total as f64;
        let accuracy = if truth.is_some() {
            format!("{}", matching as f64 / total as f64)
        } else {
            String::new()
        };
        out.push_str(&format!("{minute},{total},{ddos},{share},{accuracy}\n"));
    }
    out
}

/// Every candidate from every trigger, flat, winner flagged.
pub fn method_comparison_csv(triggers: &[TriggerLogEntry]) -> String {
    let mut out = String::from("trigger,at_verdict,method,recall,time,winner\n");
    for (i, t) in triggers.iter().enumerate() {
        for c in &t.report.candidates {
            let winner = c.method == t.report.winner_method;
            out.push_str(&format!(
                "{i},{},{},{},{},{winner}\n",
                t.at_verdict,
                c.method.as_str(),
                c.recall,
                c.detection_time
            ));
        }
    }
    out
}

pub mod files {
    //! Stable artifact names under the output directory.
    pub fn verdicts(router: &str) -> String {
        format!("verdicts-{router}.ndjson")
    }
    pub fn metrics(router: &str) -> String {
        format!("metrics-{router}.csv")
    }
    pub const ALARMS: &str = "alarms.json";
    pub const TRIGGERS: &str = "autofs.json";
    pub const GROUND_TRUTH: &str = "ground_truth.csv";
    pub const GRAPH: &str = "graph.json";
    pub const REPORT: &str = "report.json";
    pub const PREPARED: &str = "prepared.csv";
    pub const PREP_STATS: &str = "prep_stats.json";
    pub const BENCH: &str = "bench.csv";
    pub const DETECTION_RATE: &str = "detection_rate.csv";
    pub const METHOD_COMPARISON: &str = "method_comparison.csv";
}

fn write(path: &Path, content: &str) -> Result<(), ReportError> {
    std::fs::write(path, content)
        .map_err(|source| ReportError::Unwritable { path: path.to_path_buf(), source })
}

/// Reads a finished run directory and emits the two plot-data files.
/// Returns their paths.
pub fn generate_plot_data(run_dir: &Path) -> Result<(PathBuf, PathBuf), ReportError> {
    let verdict_path = find_verdict_log(run_dir)?;
    let text = std::fs::read_to_string(&verdict_path)
        .map_err(|_| ReportError::MissingLogs(verdict_path.clone()))?;
    let verdicts = parse_verdict_log(&verdict_path, &text)?;

    let truth_path = run_dir.join(files::GROUND_TRUTH);
    let truth = match std::fs::read_to_string(&truth_path) {
        Ok(t) => Some(crate::replay::parse_ground_truth_csv(&t).map_err(|e| {
            ReportError::BadLine { path: truth_path.clone(), line: 0, detail: e.to_string() }
        })?),
        Err(_) => None,
    };

    let report_path = run_dir.join(files::REPORT);
    let report_text = std::fs::read_to_string(&report_path)
        .map_err(|_| ReportError::MissingLogs(report_path.clone()))?;
    let report: serde_json::Value =
        serde_json::from_str(&report_text).map_err(|e| ReportError::BadLine {
            path: report_path.clone(),
            line: 1,
            detail: e.to_string(),
        })?;
    let ticks_per_minute = report
        .get("ticks_per_minute")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| ReportError::BadLine {
            path: report_path.clone(),
            line: 1,
            detail: "missing ticks_per_minute".into(),
        })?;

    let triggers_path = run_dir.join(files::TRIGGERS);
    let triggers: Vec<TriggerLogEntry> = match std::fs::read_to_string(&triggers_path) {
        Ok(t) => serde_json::from_str(&t).map_err(|e| ReportError::BadLine {
            path: triggers_path.clone(),
            line: 1,
            detail: e.to_string(),
        })?,
        Err(_) => Vec::new(),
    };

    let rate_path = run_dir.join(files::DETECTION_RATE);
    write(&rate_path, &detection_rate_csv(&verdicts, truth.as_deref(), ticks_per_minute))?;
    let cmp_path = run_dir.join(files::METHOD_COMPARISON);
    write(&cmp_path, &method_comparison_csv(&triggers))?;
    Ok((rate_path, cmp_path))
}

fn find_verdict_log(run_dir: &Path) -> Result<PathBuf, ReportError> {
    let entries = std::fs::read_dir(run_dir)
        .map_err(|_| ReportError::MissingLogs(run_dir.to_path_buf()))?;
    let mut logs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("verdicts-") && n.ends_with(".ndjson"))
                .unwrap_or(false)
        })
        .collect();
    logs.sort();
    logs.into_iter().next().ok_or_else(|| {
        ReportError::MissingLogs(run_dir.join("verdicts-<router>.ndjson"))
    })
}
