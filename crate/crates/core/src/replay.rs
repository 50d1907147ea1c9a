//! Telemetry replay: turns a labeled dataset into a ticked stream of wire
//! readings. Ticks inside the attack schedule draw DDoS rows, the rest draw
//! NotDDoS rows, and every tick's ground-truth class is recorded for scoring.

use crate::data::{ClassLabel, Dataset};
use crate::twin::WireReading;
use crate::yang::KpiManifest;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("attack interval [{start}, {end}) is empty or inverted")]
    BadInterval { start: u64, end: u64 },
    #[error("attack intervals [{0}, {1}) and [{2}, {3}) overlap")]
    OverlappingIntervals(u64, u64, u64, u64),
    #[error("manifest source column {0:?} is not in the dataset")]
    MissingSourceColumn(String),
    #[error("replay needs {0} rows but the dataset has none")]
    ClassAbsent(ClassLabel),
    #[error("ground-truth line {line}: {detail}")]
    BadGroundTruth { line: usize, detail: String },
}

/// Half-open `[start, end)` tick intervals during which the stream draws
/// from the DDoS class.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AttackSchedule {
    intervals: Vec<(u64, u64)>,
}

impl AttackSchedule {
    /// Intervals may arrive in any order; they must not overlap.
    pub fn new(mut intervals: Vec<(u64, u64)>) -> Result<AttackSchedule, ReplayError> {
        for &(start, end) in &intervals {
            if start >= end {
                return Err(ReplayError::BadInterval { start, end });
            }
        }
        intervals.sort_unstable();
        for w in intervals.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(ReplayError::OverlappingIntervals(w[0].0, w[0].1, w[1].0, w[1].1));
            }
        }
        Ok(AttackSchedule { intervals })
    }

    pub fn empty() -> AttackSchedule {
        AttackSchedule::default()
    }

    pub fn contains(&self, tick: u64) -> bool {
        self.intervals.iter().any(|&(s, e)| s <= tick && tick < e)
    }

    pub fn intervals(&self) -> &[(u64, u64)] {
        &self.intervals
    }

    fn class_at(&self, tick: u64) -> ClassLabel {
        if self.contains(tick) {
            ClassLabel::Ddos
        } else {
            ClassLabel::NotDdos
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayConfig {
    pub rows_per_tick: usize,
    pub ticks: u64,
    pub seed: u64,
}

/// One tick's emission: `rows_per_tick` rows, each flattened to one wire
/// reading per manifest sensor, all stamped with the tick.
#[derive(Debug, Clone)]
pub struct TickBatch {
    pub tick: u64,
    pub label: ClassLabel,
    pub rows: Vec<Vec<WireReading>>,
}

/// Lazy tick generator. Single-threaded; batches are owned values, so a
/// consumer on another thread just takes them off a channel.
pub struct ReplayStream<'a> {
    ds: &'a Dataset,
    manifest: &'a KpiManifest,
    router: String,
    schedule: AttackSchedule,
    source_cols: Vec<usize>,
    ddos_rows: Vec<usize>,
    benign_rows: Vec<usize>,
    rows_per_tick: usize,
    ticks: u64,
    next_tick: u64,
    rng: ChaCha8Rng,
}

/// Rows are drawn with replacement, so any labeled dataset sustains any
/// stream length.
pub fn replay<'a>(
    ds: &'a Dataset,
    manifest: &'a KpiManifest,
    router: &str,
    schedule: &AttackSchedule,
    cfg: &ReplayConfig,
) -> Result<ReplayStream<'a>, ReplayError> {
    let source_cols = manifest
        .sensors()
        .iter()
        .map(|s| {
            ds.column_index(&s.source_column)
                .ok_or_else(|| ReplayError::MissingSourceColumn(s.source_column.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let class_rows = |class: ClassLabel| -> Vec<usize> {
        ds.labels()
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Some(class))
            .map(|(i, _)| i)
            .collect()
    };
    let ddos_rows = class_rows(ClassLabel::Ddos);
    let benign_rows = class_rows(ClassLabel::NotDdos);

    let needs_ddos = (0..cfg.ticks).any(|t| schedule.contains(t));
    let needs_benign = (0..cfg.ticks).any(|t| !schedule.contains(t));
    if needs_ddos && ddos_rows.is_empty() {
        return Err(ReplayError::ClassAbsent(ClassLabel::Ddos));
    }
    if needs_benign && benign_rows.is_empty() {
        return Err(ReplayError::ClassAbsent(ClassLabel::NotDdos));
    }

    Ok(ReplayStream {
        ds,
        manifest,
        router: router.to_string(),
        schedule: schedule.clone(),
        source_cols,
        ddos_rows,
        benign_rows,
        rows_per_tick: cfg.rows_per_tick,
        ticks: cfg.ticks,
        next_tick: 0,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
    })
}

impl Iterator for ReplayStream<'_> {
    type Item = TickBatch;

    fn next(&mut self) -> Option<TickBatch> {
        if self.next_tick >= self.ticks {
            return None;
        }
        let tick = self.next_tick;
        self.next_tick += 1;

        let label = self.schedule.class_at(tick);
        let pool = match label {
            ClassLabel::Ddos => &self.ddos_rows,
            ClassLabel::NotDdos => &self.benign_rows,
        };
        let mut rows = Vec::with_capacity(self.rows_per_tick);
        for _ in 0..self.rows_per_tick {
            let row = self.ds.features().row(pool[self.rng.gen_range(0..pool.len())]);
            let readings = self
                .manifest
                .sensors()
                .iter()
                .zip(&self.source_cols)
                .map(|(sensor, &col)| WireReading {
                    twin: self.router.clone(),
                    path: sensor.path.clone(),
                    value: row[col],
                    ts: tick,
                })
                .collect();
            rows.push(readings);
        }
        Some(TickBatch { tick, label, rows })
    }
}

impl ReplayStream<'_> {
    /// Drives the whole stream into `sink`.
    pub fn run_to_sink(self, mut sink: impl FnMut(TickBatch)) {
        for batch in self {
            sink(batch);
        }
    }
}

pub fn ground_truth_csv(log: &[(u64, ClassLabel)]) -> String {
    let mut out = String::from("tick,label\n");
    for &(tick, label) in log {
        out.push_str(&format!("{tick},{}\n", label.as_str()));
    }
    out
}

pub fn parse_ground_truth_csv(text: &str) -> Result<Vec<(u64, ClassLabel)>, ReplayError> {
    let mut log = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let bad = |detail: &str| ReplayError::BadGroundTruth { line: i + 1, detail: detail.into() };
        let (tick, label) = line.split_once(',').ok_or_else(|| bad("expected tick,label"))?;
        let tick = tick.trim().parse::<u64>().map_err(|e| bad(&format!("tick: {e}")))?;
        let label = match label.trim() {
            "ddos" => ClassLabel::Ddos,
            "not_ddos" => ClassLabel::NotDdos,
            other => return Err(bad(&format!("unknown label {other:?}"))),
        };
        log.push((tick, label));
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::regime_dataset;
    use crate::yang::default_manifest;

    fn fixture() -> (Dataset, KpiManifest) {
        (regime_dataset(40, 40, &[80, 81], 3), default_manifest())
    }

    #[test]
    fn schedule_rejects_bad_intervals() {
        assert!(matches!(
            AttackSchedule::new(vec![(5, 5)]),
            Err(ReplayError::BadInterval { start: 5, end: 5 })
        ));
        assert!(matches!(
            AttackSchedule::new(vec![(10, 20), (15, 30)]),
            Err(ReplayError::OverlappingIntervals(..))
        ));
        // Touching endpoints are fine: [0,10) and [10,20) share no tick.
        let s = AttackSchedule::new(vec![(10, 20), (0, 10)]).unwrap();
        assert_eq!(s.intervals(), &[(0, 10), (10, 20)]);
    }

    #[test]
    fn tick_labels_match_schedule_membership() {
        let (ds, manifest) = fixture();
        let schedule = AttackSchedule::new(vec![(3, 6), (9, 11)]).unwrap();
        let cfg = ReplayConfig { rows_per_tick: 2, ticks: 14, seed: 8 };
        let batches: Vec<TickBatch> =
            replay(&ds, &manifest, "core-rtr-1", &schedule, &cfg).unwrap().collect();
        assert_eq!(batches.len(), 14);
        for b in &batches {
            assert_eq!(b.label, schedule.class_at(b.tick));
            assert_eq!(b.rows.len(), 2);
            for row in &b.rows {
                assert_eq!(row.len(), manifest.len());
                assert!(row.iter().all(|r| r.ts == b.tick && r.twin == "core-rtr-1"));
            }
        }
    }

    #[test]
    fn empty_schedule_is_all_benign() {
        let (ds, manifest) = fixture();
        let cfg = ReplayConfig { rows_per_tick: 1, ticks: 6, seed: 0 };
        let batches: Vec<TickBatch> =
            replay(&ds, &manifest, "r", &AttackSchedule::empty(), &cfg).unwrap().collect();
        assert!(batches.iter().all(|b| b.label == ClassLabel::NotDdos));
    }

    #[test]
    fn replayed_values_come_from_the_right_class() {
        // Every emitted row must be byte-identical to some dataset row whose
        // label matches the tick's schedule membership.
        let (ds, manifest) = fixture();
        let schedule = AttackSchedule::new(vec![(0, 5)]).unwrap();
        let cfg = ReplayConfig { rows_per_tick: 3, ticks: 10, seed: 5 };
        for batch in replay(&ds, &manifest, "r", &schedule, &cfg).unwrap() {
            for row in &batch.rows {
                let values: Vec<f64> = row.iter().map(|r| r.value).collect();
                let source = (0..ds.n_rows())
                    .find(|&i| ds.features().row(i) == values.as_slice())
                    .expect("emitted row not found in dataset");
                assert_eq!(ds.labels()[source], Some(batch.label), "tick {}", batch.tick);
            }
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let (ds, manifest) = fixture();
        let schedule = AttackSchedule::new(vec![(2, 4)]).unwrap();
        let cfg = ReplayConfig { rows_per_tick: 2, ticks: 8, seed: 42 };
        let a: Vec<TickBatch> = replay(&ds, &manifest, "r", &schedule, &cfg).unwrap().collect();
        let b: Vec<TickBatch> = replay(&ds, &manifest, "r", &schedule, &cfg).unwrap().collect();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.tick, y.tick);
            assert_eq!(x.label, y.label);
            for (rx, ry) in x.rows.iter().zip(&y.rows) {
                assert!(rx.iter().zip(ry).all(|(p, q)| p.value == q.value && p.path == q.path));
            }
        }
    }

    #[test]
    fn missing_class_and_column_are_rejected() {
        let (ds, manifest) = fixture();
        let benign_only = {
            let labels: Vec<usize> = ds
                .labels()
                .iter()
                .enumerate()
                .filter(|(_, l)| **l == Some(ClassLabel::NotDdos))
                .map(|(i, _)| i)
                .collect();
            ds.select_rows(&labels)
        };
        let schedule = AttackSchedule::new(vec![(0, 3)]).unwrap();
        let cfg = ReplayConfig { rows_per_tick: 1, ticks: 4, seed: 0 };
        assert!(matches!(
            replay(&benign_only, &manifest, "r", &schedule, &cfg),
            Err(ReplayError::ClassAbsent(ClassLabel::Ddos))
        ));

        let mut renamed = ds.clone();
        renamed.column_names[0] = "bogus".into();
        assert!(matches!(
            replay(&renamed, &manifest, "r", &AttackSchedule::empty(), &cfg),
            Err(ReplayError::MissingSourceColumn(_))
        ));
    }

    #[test]
    fn ground_truth_round_trips() {
        let log = vec![(0, ClassLabel::NotDdos), (1, ClassLabel::Ddos), (7, ClassLabel::Ddos)];
        let csv = ground_truth_csv(&log);
        assert!(csv.starts_with("tick,label\n0,not_ddos\n"));
        assert_eq!(parse_ground_truth_csv(&csv).unwrap(), log);
        assert!(parse_ground_truth_csv("tick,label\n3,wat\n").is_err());
    }
}
