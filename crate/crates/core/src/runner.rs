//! Command orchestration: prepare, run, bench, report. Each function is
//! deterministic given its config and leaves its artifacts under the
//! configured output directory with stable names.

use crate::config::{AppConfig, ConfigError};
use crate::data::{load_csv, ClassLabel, Dataset, LabelMapping};
use crate::detector::{metrics_from_confusion, Brain, Confusion, MetricsSnapshot, TriggerOutcome};
use crate::labeling::BaselinePool;
use crate::matrix::Matrix;
use crate::prep::{prepare_merged, PrepOptions, PrepStats};
use crate::replay::{replay, AttackSchedule, ReplayConfig, ReplayError};
use crate::report::{
    self, alarm_report, canonical_json, files, metrics_csv_row, verdict_line, MetricsPoint,
    RunReport, TriggerLogEntry, METRICS_CSV_HEADER,
};
use crate::seed::derive_seed;
use crate::twin::TwinStore;
use crate::yang::{default_manifest, extract_features, TOTAL_SENSORS};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

/// Errors grouped into the exit-code families the front ends expose.
#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("runtime: {0}")]
    Runtime(String),
}

impl RunnerError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunnerError::Config(_) => 2,
            RunnerError::Data(_) => 3,
            RunnerError::Runtime(_) => 4,
        }
    }
}

impl From<ConfigError> for RunnerError {
    fn from(e: ConfigError) -> Self {
        RunnerError::Config(e.to_string())
    }
}

fn data_err(e: impl std::fmt::Display) -> RunnerError {
    RunnerError::Data(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> RunnerError {
    RunnerError::Runtime(e.to_string())
}

fn ensure_out_dir(out: &Path) -> Result<(), RunnerError> {
    std::fs::create_dir_all(out)
        .map_err(|e| RunnerError::Config(format!("output directory {}: {e}", out.display())))
}

fn write_artifact(path: &Path, content: &str) -> Result<(), RunnerError> {
    std::fs::write(path, content)
        .map_err(|e| RunnerError::Runtime(format!("write {}: {e}", path.display())))
}

#[derive(Debug, Clone)]
pub struct PreparedArtifacts {
    pub dataset: PathBuf,
    pub stats: PrepStats,
}

pub fn execute_prepare(cfg: &AppConfig) -> Result<PreparedArtifacts, RunnerError> {
    AppConfig::require_file(&cfg.prepare.d1)?;
    AppConfig::require_file(&cfg.prepare.d2)?;
    ensure_out_dir(&cfg.out)?;

    let d1 = load_csv(&cfg.prepare.d1, &cfg.prepare.d1_labels.column, &cfg.prepare.d1_labels.mapping())
        .map_err(|e| RunnerError::Data(format!("{}: {e}", cfg.prepare.d1.display())))?;
    let d2 = load_csv(&cfg.prepare.d2, &cfg.prepare.d2_labels.column, &cfg.prepare.d2_labels.mapping())
        .map_err(|e| RunnerError::Data(format!("{}: {e}", cfg.prepare.d2.display())))?;

    let opts = PrepOptions {
        row_cap: cfg.prepare.row_cap,
        ddos_fraction: cfg.prepare.ddos_fraction,
        seed: derive_seed(cfg.seed, "prepare"),
    };
    let manifest = default_manifest();
    let (merged, stats) = prepare_merged(&d1, &d2, &manifest, &opts).map_err(data_err)?;

    let dataset = cfg.out.join(files::PREPARED);
    merged.write_csv(&dataset).map_err(runtime_err)?;
    write_artifact(&cfg.out.join(files::PREP_STATS), &canonical_json(&stats))?;
    Ok(PreparedArtifacts { dataset, stats })
}

/// Prepared datasets are artifacts, so relative paths resolve against the
/// output directory; the source CSVs for `prepare` stay cwd-relative.
fn artifact_path(cfg: &AppConfig, path: &Path) -> PathBuf {
    if path.is_relative() {
        cfg.out.join(path)
    } else {
        path.to_path_buf()
    }
}

fn load_prepared(path: &Path) -> Result<Dataset, RunnerError> {
    AppConfig::require_file(path)?;
    let ds = load_csv(path, "label", &LabelMapping::canonical())
        .map_err(|e| RunnerError::Data(format!("{}: {e}", path.display())))?;
    if ds.n_cols() != TOTAL_SENSORS {
        return Err(RunnerError::Data(format!(
            "{}: expected {TOTAL_SENSORS} feature columns, found {}",
            path.display(),
            ds.n_cols()
        )));
    }
    Ok(ds)
}

fn pool_from(ds: &Dataset) -> Result<BaselinePool, RunnerError> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..ds.n_rows() {
        if let Some(l) = ds.labels()[i] {
            rows.push(i);
            labels.push(l);
        }
    }
    if rows.is_empty() {
        return Err(RunnerError::Data("dataset has no labeled rows".into()));
    }
    Ok(BaselinePool::new(ds.features().select_rows(&rows), labels))
}

/// Seeded window sample: without replacement when the dataset is large
/// enough, with replacement otherwise.
fn sample_window(ds: &Dataset, n: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx: Vec<usize> = if ds.n_rows() >= n {
        let mut all: Vec<usize> = (0..ds.n_rows()).collect();
        all.shuffle(&mut rng);
        all.truncate(n);
        all.sort_unstable();
        all
    } else {
        (0..n).map(|_| rng.gen_range(0..ds.n_rows())).collect()
    };
    ds.features().select_rows(&idx)
}

fn all_features() -> Vec<usize> {
    (0..TOTAL_SENSORS).collect()
}

pub fn execute_run(cfg: &AppConfig) -> Result<RunReport, RunnerError> {
    ensure_out_dir(&cfg.out)?;
    let run = &cfg.run;
    let ds = load_prepared(&artifact_path(cfg, &run.dataset))?;
    let drift_ds = match &run.drift_dataset {
        Some(p) => Some(load_prepared(&artifact_path(cfg, p))?),
        None => None,
    };
    let schedule = AttackSchedule::new(run.schedule.clone()).map_err(|e| match e {
        ReplayError::BadInterval { .. } | ReplayError::OverlappingIntervals(..) => {
            RunnerError::Config(e.to_string())
        }
        other => data_err(other),
    })?;

    let manifest = Arc::new(default_manifest());
    let store = TwinStore::new();
    store.add_model("kpi-bundle", Arc::clone(&manifest));
    let twin = store.register_router(&run.router, "kpi-bundle").map_err(runtime_err)?;

    let pool = pool_from(&ds)?;
    let mut brain = Brain::new(
        twin,
        pool.clone(),
        run.thresholds.clone(),
        run.autofs.clone(),
        derive_seed(cfg.seed, "brain"),
    );

    // Bootstrap: selection over an unlabeled sample, winner installed as v1.
    let window = sample_window(&ds, run.bootstrap_rows, derive_seed(cfg.seed, "bootstrap-window"));
    let outcome = crate::autofs::run_autofs(
        &window,
        &pool,
        &all_features(),
        &run.autofs,
        derive_seed(cfg.seed, "bootstrap"),
    )
    .map_err(runtime_err)?;
    let mut model = outcome.winner.model.clone();
    model.set_version(1);
    brain.install(outcome.winner.selected.clone(), model).map_err(runtime_err)?;

    let rcfg = ReplayConfig {
        rows_per_tick: run.rows_per_tick,
        ticks: run.ticks,
        seed: derive_seed(cfg.seed, "replay"),
    };
    let drift_at = run.drift_at_tick.unwrap_or(u64::MAX);
    let base = replay(&ds, &manifest, &run.router, &schedule, &rcfg).map_err(data_err)?;
    let drift_stream = match &drift_ds {
        Some(dds) => {
            let dcfg = ReplayConfig { seed: derive_seed(cfg.seed, "replay-drift"), ..rcfg.clone() };
            Some(replay(dds, &manifest, &run.router, &schedule, &dcfg).map_err(data_err)?)
        }
        None => None,
    };
    let stream = base
        .filter(|b| b.tick < drift_at)
        .chain(drift_stream.into_iter().flatten().filter(move |b| b.tick >= drift_at));

    // The verdict log streams to disk so an aborted run keeps its prefix.
    let verdict_path = cfg.out.join(files::verdicts(&run.router));
    let mut verdict_file = std::fs::File::create(&verdict_path)
        .map_err(|e| RunnerError::Runtime(format!("write {}: {e}", verdict_path.display())))?;
    let mut metrics_csv = String::from(METRICS_CSV_HEADER);
    let mut ground_truth: Vec<(u64, ClassLabel)> = Vec::new();
    let mut truth_by_verdict: Vec<ClassLabel> = Vec::new();
    let mut run_confusion = Confusion::default();
    let mut metrics_series: Vec<MetricsPoint> = Vec::new();
    let mut triggers: Vec<TriggerLogEntry> = Vec::new();
    let mut verdict_count: u64 = 0;
    let mut last_ready = None;

    for batch in stream {
        ground_truth.push((batch.tick, batch.label));
        for row in &batch.rows {
            for reading in row {
                store.ingest_wire(reading).map_err(runtime_err)?;
            }
            let frame = store.snapshot(twin).map_err(runtime_err)?;
            let fv = extract_features(&manifest, &frame).map_err(runtime_err)?;
            let verdict = brain.on_feature_vector(&fv).map_err(runtime_err)?;
            verdict_file
                .write_all(verdict_line(&run.router, &verdict).as_bytes())
                .map_err(|e| RunnerError::Runtime(format!("write {}: {e}", verdict_path.display())))?;
            verdict_count += 1;
            truth_by_verdict.push(batch.label);
            match (verdict.class, batch.label) {
                (ClassLabel::Ddos, ClassLabel::Ddos) => run_confusion.tp += 1,
                (ClassLabel::Ddos, ClassLabel::NotDdos) => run_confusion.fp += 1,
                (ClassLabel::NotDdos, ClassLabel::Ddos) => run_confusion.fn_ += 1,
                (ClassLabel::NotDdos, ClassLabel::NotDdos) => run_confusion.tn += 1,
            }

            if verdict_count % run.eval_every as u64 == 0 {
                let snapshot = if run.ground_truth_metrics {
                    let k = truth_by_verdict.len().min(run.thresholds.window);
                    brain.update_metrics(&truth_by_verdict[truth_by_verdict.len() - k..])
                } else {
                    match brain.pseudo_label_window() {
                        Ok(refs) => brain.update_metrics(&refs),
                        Err(e) => {
                            tracing::debug!(error = %e, "pseudo-labeling unavailable");
                            MetricsSnapshot::Insufficient { have: 0, need: run.thresholds.min_window }
                        }
                    }
                };
                let version = brain.model_version().unwrap_or(0);
                metrics_csv.push_str(&metrics_csv_row(verdict_count, batch.tick, version, &snapshot));
                if let MetricsSnapshot::Ready(m) = &snapshot {
                    last_ready = Some(*m);
                }
                metrics_series.push(MetricsPoint {
                    at_verdict: verdict_count,
                    tick: batch.tick,
                    model_version: version,
                    snapshot: snapshot.clone(),
                });
                if let TriggerOutcome::Triggered(report) = brain.check_and_trigger(&snapshot) {
                    triggers.push(TriggerLogEntry {
                        at_verdict: verdict_count,
                        tick: batch.tick,
                        report,
                    });
                }
            }
        }
    }
    verdict_file
        .flush()
        .map_err(|e| RunnerError::Runtime(format!("write {}: {e}", verdict_path.display())))?;

    let alarms: Vec<report::AlarmReport> = brain
        .alarms()
        .iter()
        .map(|a| alarm_report(a, schedule.intervals(), run.ticks_per_minute))
        .collect();
    let final_metrics = if run.ground_truth_metrics && verdict_count > 0 {
        Some(metrics_from_confusion(run_confusion))
    } else {
        last_ready
    };
    let report = RunReport {
        router: run.router.clone(),
        seed: cfg.seed,
        ticks: run.ticks,
        rows_per_tick: run.rows_per_tick,
        ticks_per_minute: run.ticks_per_minute,
        schedule: schedule.intervals().to_vec(),
        ground_truth_metrics: run.ground_truth_metrics,
        verdict_count,
        initial_model_version: 1,
        final_model_version: brain.model_version().unwrap_or(0),
        metrics_series,
        alarms,
        triggers: triggers.clone(),
        final_metrics,
    };

    write_artifact(&cfg.out.join(files::metrics(&run.router)), &metrics_csv)?;
    write_artifact(
        &cfg.out.join(files::GROUND_TRUTH),
        &crate::replay::ground_truth_csv(&ground_truth),
    )?;
    write_artifact(&cfg.out.join(files::ALARMS), &canonical_json(&brain.alarms()))?;
    write_artifact(&cfg.out.join(files::TRIGGERS), &canonical_json(&triggers))?;
    write_artifact(&cfg.out.join(files::GRAPH), &canonical_json(&store.export_graph()))?;
    write_artifact(&cfg.out.join(files::REPORT), &canonical_json(&report))?;
    Ok(report)
}

/// AutoFS benchmark: repeated seeded selection over fresh windows, one CSV
/// row per surviving candidate.
pub fn execute_bench(cfg: &AppConfig) -> Result<PathBuf, RunnerError> {
    ensure_out_dir(&cfg.out)?;
    let ds = load_prepared(&artifact_path(cfg, &cfg.bench.dataset))?;
    let pool = pool_from(&ds)?;
    let mut csv = String::from("seed,method,recall,time,winner\n");
    for s in 0..cfg.bench.seeds {
        let seed = derive_seed(cfg.seed, &format!("bench-{s}"));
        let window = sample_window(&ds, crate::labeling::WINDOW_ROWS, derive_seed(seed, "window"));
        let outcome =
            crate::autofs::run_autofs(&window, &pool, &all_features(), &cfg.bench.autofs, seed)
                .map_err(runtime_err)?;
        for c in &outcome.candidates {
            csv.push_str(&format!(
                "{s},{},{},{},{}\n",
                c.method.as_str(),
                c.recall,
                c.detection_time,
                c.method == outcome.winner.method
            ));
        }
    }
    let path = cfg.out.join(files::BENCH);
    write_artifact(&path, &csv)?;
    Ok(path)
}

pub fn execute_report(run_dir: &Path) -> Result<(PathBuf, PathBuf), RunnerError> {
    report::generate_plot_data(run_dir).map_err(data_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{mini_d1_csv, mini_d2_csv};

    fn write_fixtures(dir: &Path) -> AppConfig {
        std::fs::write(dir.join("d1.csv"), mini_d1_csv(4000, 300, 21)).unwrap();
        std::fs::write(dir.join("d2.csv"), mini_d2_csv(1200, 400, 22)).unwrap();
        let mut cfg = AppConfig::default();
        cfg.out = dir.join("out");
        cfg.prepare.d1 = dir.join("d1.csv");
        cfg.prepare.d2 = dir.join("d2.csv");
        cfg.run.dataset = cfg.out.join(files::PREPARED);
        cfg.bench.dataset = cfg.out.join(files::PREPARED);
        cfg
    }

    #[test]
    fn prepare_writes_balanced_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_fixtures(dir.path());
        let prepared = execute_prepare(&cfg).unwrap();
        assert!(prepared.dataset.is_file());
        assert!(cfg.out.join(files::PREP_STATS).is_file());
        assert!(prepared.stats.imbalance_ratio <= 1.5);

        let ds = load_prepared(&prepared.dataset).unwrap();
        assert_eq!(ds.n_cols(), TOTAL_SENSORS);
        let share = ds.class_count(ClassLabel::Ddos) as f64 / ds.n_rows() as f64;
        assert!((share - 0.6).abs() < 0.01, "ddos share {share}");
    }

    #[test]
    fn missing_input_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = write_fixtures(dir.path());
        cfg.prepare.d1 = dir.path().join("absent.csv");
        match execute_prepare(&cfg) {
            Err(e @ RunnerError::Config(_)) => {
                assert!(e.to_string().contains("absent.csv"));
                assert_eq!(e.exit_code(), 2);
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    // The full run is exercised end to end by the acceptance suite; here a
    // short, trigger-free run checks artifact shape and self-consistency.
    #[test]
    fn short_run_emits_consistent_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = write_fixtures(dir.path());
        execute_prepare(&cfg).unwrap();
        cfg.run.ticks = 120;
        cfg.run.schedule = vec![(40, 90)];
        cfg.run.eval_every = 100;
        cfg.run.ground_truth_metrics = true;
        cfg.run.autofs.candidate_epochs = 40;
        let report = execute_run(&cfg).unwrap();

        assert_eq!(report.verdict_count, 240);
        assert_eq!(report.final_model_version, 1);
        assert!(!report.alarms.is_empty());
        assert!(report.alarms[0].latency_minutes.is_some());

        // Report JSON on disk matches the returned value byte for byte.
        let on_disk = std::fs::read_to_string(cfg.out.join(files::REPORT)).unwrap();
        assert_eq!(on_disk, canonical_json(&report));

        // Verdict log length equals the reported count, and the plot data
        // regenerates from the logs alone.
        let log = std::fs::read_to_string(cfg.out.join(files::verdicts("core-rtr-1"))).unwrap();
        assert_eq!(log.lines().count(), 240);
        let (rate, cmp) = execute_report(&cfg.out).unwrap();
        assert!(rate.is_file() && cmp.is_file());
        let rate_csv = std::fs::read_to_string(rate).unwrap();
        assert!(rate_csv.lines().count() > 1);
    }

    #[test]
    fn empty_schedule_yields_no_alarms() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = write_fixtures(dir.path());
        execute_prepare(&cfg).unwrap();
        cfg.run.ticks = 80;
        cfg.run.schedule = vec![];
        cfg.run.autofs.candidate_epochs = 40;
        let report = execute_run(&cfg).unwrap();
        assert!(report.alarms.is_empty());
        assert_eq!(report.verdict_count, 160);
    }

    #[test]
    fn bench_table_has_one_row_per_candidate() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = write_fixtures(dir.path());
        execute_prepare(&cfg).unwrap();
        cfg.bench.seeds = 1;
        cfg.bench.autofs.candidate_epochs = 40;
        let path = execute_bench(&cfg).unwrap();
        let csv = std::fs::read_to_string(path).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "seed,method,recall,time,winner");
        assert_eq!(lines.len(), 6, "header plus five methods: {csv}");
        assert_eq!(csv.matches(",true").count(), 1);
    }
}
