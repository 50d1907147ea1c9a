//! Per-router detection brain: every feature vector is projected through the
//! active feature set and classified by the active model, sliding windows
//! feed the four performance metrics, and a threshold breach re-runs feature
//! selection and hot-swaps the winner.

use crate::autofs::{run_autofs, AutoFsConfig, CandidateSummary, FsError, FsMethod};
use crate::data::ClassLabel;
use crate::labeling::{
    make_baseline, run_labeling, BaselineDataset, BaselinePool, LabelingError, WINDOW_ROWS,
};
use crate::matrix::Matrix;
use crate::mlp::MlpModel;
use crate::seed::derive_seed;
use crate::twin::TwinId;
use crate::yang::{FeatureVector, TOTAL_SENSORS};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("no active model installed for this twin")]
    NoActiveModel,
    #[error("feature vector has {got} values, the sensor space has {TOTAL_SENSORS}")]
    WrongWidth { got: usize },
    #[error("window holds {have} rows, need {need}")]
    InsufficientWindow { have: usize, need: usize },
    #[error(transparent)]
    Labeling(#[from] LabelingError),
    #[error(transparent)]
    Model(#[from] crate::mlp::MlpError),
}

/// Breach thresholds and window geometry.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdConfig {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    /// Verdict window length W.
    pub window: usize,
    /// Fewest referenced verdicts that still define the metrics.
    pub min_window: usize,
    /// Verdicts between feature-selection triggers.
    pub cooldown: usize,
    /// Consecutive verdicts that open or clear an alarm.
    pub alarm_run: usize,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            accuracy: 0.90,
            precision: 0.90,
            recall: 0.90,
            f_measure: 0.90,
            window: 2000,
            min_window: 200,
            cooldown: 1000,
            alarm_run: 5,
        }
    }
}

impl ThresholdConfig {
    pub fn validate(&self) -> Result<(), String> {
        let in01 = |v: f64| (0.0..=1.0).contains(&v);
        if !(in01(self.accuracy) && in01(self.precision) && in01(self.recall) && in01(self.f_measure)) {
            return Err("metric thresholds must lie in [0,1]".into());
        }
        if self.window < self.min_window {
            return Err(format!("window {} below min_window {}", self.window, self.min_window));
        }
        if self.cooldown == 0 || self.alarm_run == 0 {
            return Err("cooldown and alarm_run must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionVerdict {
    pub twin_id: TwinId,
    pub timestamp: u64,
    pub class: ClassLabel,
    pub confidence: f64,
    pub model_version: u64,
    pub selected_feature_indices: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

/// The four class-weighted metrics over an evaluation window.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub window_len: usize,
    pub confusion: Confusion,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MetricsSnapshot {
    Insufficient { have: usize, need: usize },
    Ready(Metrics),
}

fn div(n: f64, d: f64) -> f64 {
    if d == 0.0 {
        0.0
    } else {
        n / d
    }
}

/// Class-weighted metrics; weights are the reference supports. An undefined
/// per-class ratio contributes 0.
pub fn metrics_from_confusion(c: Confusion) -> Metrics {
    let (tp, fp, fnn, tn) = (c.tp as f64, c.fp as f64, c.fn_ as f64, c.tn as f64);
    let n = tp + fp + fnn + tn;
    let support_ddos = tp + fnn;
    let support_not = tn + fp;

    let p_ddos = div(tp, tp + fp);
    let r_ddos = div(tp, tp + fnn);
    let f_ddos = div(2.0 * p_ddos * r_ddos, p_ddos + r_ddos);
    let p_not = div(tn, tn + fnn);
    let r_not = div(tn, tn + fp);
    let f_not = div(2.0 * p_not * r_not, p_not + r_not);

    Metrics {
        accuracy: div(tp + tn, n),
        precision: div(support_ddos * p_ddos + support_not * p_not, n),
        recall: div(support_ddos * r_ddos + support_not * r_not, n),
        f_measure: div(support_ddos * f_ddos + support_not * f_not, n),
        window_len: n as usize,
        confusion: c,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackAlarm {
    pub twin_id: TwinId,
    pub onset_tick: u64,
    pub cleared_tick: Option<u64>,
}

/// Run-length state machine over the verdict stream. An alarm opens at a run
/// of `a` DDoS verdicts (onset backdated to the run's first tick) and clears
/// symmetrically on `a` NotDDoS verdicts.
#[derive(Debug, Clone)]
pub struct AlarmTracker {
    a: usize,
    run_class: Option<ClassLabel>,
    run_len: usize,
    run_start: u64,
    open: bool,
}

impl AlarmTracker {
    pub fn new(a: usize) -> AlarmTracker {
        assert!(a >= 1);
        AlarmTracker { a, run_class: None, run_len: 0, run_start: 0, open: false }
    }

    /// Feeds one verdict; returns an alarm transition if one fired.
    pub fn observe(&mut self, tick: u64, class: ClassLabel) -> Option<AlarmEvent> {
        if self.run_class == Some(class) {
            self.run_len += 1;
        } else {
            self.run_class = Some(class);
            self.run_len = 1;
            self.run_start = tick;
        }
        if self.run_len != self.a {
            return None;
        }
        match class {
            ClassLabel::Ddos if !self.open => {
                self.open = true;
                Some(AlarmEvent::Opened { onset_tick: self.run_start })
            }
            ClassLabel::NotDdos if self.open => {
                self.open = false;
                Some(AlarmEvent::Cleared { cleared_tick: self.run_start })
            }
            _ => None,
        }
    }

    pub fn is_open(&self) -> bool {
        self.open
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlarmEvent {
    Opened { onset_tick: u64 },
    Cleared { cleared_tick: u64 },
}

/// Folds a whole verdict stream into its alarm list.
pub fn alarm_tracker(
    twin_id: TwinId,
    stream: impl IntoIterator<Item = (u64, ClassLabel)>,
    a: usize,
) -> Vec<AttackAlarm> {
    let mut tracker = AlarmTracker::new(a);
    let mut alarms: Vec<AttackAlarm> = Vec::new();
    for (tick, class) in stream {
        match tracker.observe(tick, class) {
            Some(AlarmEvent::Opened { onset_tick }) => {
                alarms.push(AttackAlarm { twin_id, onset_tick, cleared_tick: None });
            }
            Some(AlarmEvent::Cleared { cleared_tick }) => {
                alarms.last_mut().expect("cleared implies open").cleared_tick = Some(cleared_tick);
            }
            None => {}
        }
    }
    alarms
}

/// The triple served on the hot path. Swapped as a unit so every verdict is
/// produced entirely by one version.
struct ActiveModel {
    indices: Vec<usize>,
    model: MlpModel,
    baseline: BaselineDataset,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TriggerReport {
    pub winner_method: FsMethod,
    pub winner_indices: Vec<usize>,
    pub winner_recall: f64,
    pub new_version: u64,
    pub candidates: Vec<CandidateSummary>,
    pub failures: Vec<(FsMethod, String)>,
    pub labeling_alignment_flagged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum TriggerOutcome {
    NoAction { reason: String },
    Triggered(TriggerReport),
}

pub struct Brain {
    twin_id: TwinId,
    thresholds: ThresholdConfig,
    autofs_cfg: AutoFsConfig,
    pool: BaselinePool,
    seed: u64,
    active: Option<ActiveModel>,
    raw_window: VecDeque<Vec<f64>>,
    verdict_window: VecDeque<(u64, ClassLabel)>,
    cooldown_remaining: usize,
    autofs_runs: u64,
    tracker: AlarmTracker,
    alarms: Vec<AttackAlarm>,
}

impl Brain {
    pub fn new(
        twin_id: TwinId,
        pool: BaselinePool,
        thresholds: ThresholdConfig,
        autofs_cfg: AutoFsConfig,
        seed: u64,
    ) -> Brain {
        let tracker = AlarmTracker::new(thresholds.alarm_run);
        Brain {
            twin_id,
            thresholds,
            autofs_cfg,
            pool,
            seed,
            active: None,
            raw_window: VecDeque::new(),
            verdict_window: VecDeque::new(),
            cooldown_remaining: 0,
            autofs_runs: 0,
            tracker,
            alarms: Vec::new(),
        }
    }

    /// Installs a (feature set, model) pair, keeping the model's version.
    pub fn install(&mut self, indices: Vec<usize>, model: MlpModel) -> Result<(), DetectorError> {
        let baseline =
            make_baseline(&self.pool, &indices, derive_seed(self.seed, "brain-baseline"))?;
        self.active = Some(ActiveModel { indices, model, baseline });
        Ok(())
    }

    pub fn model_version(&self) -> Option<u64> {
        self.active.as_ref().map(|a| a.model.version())
    }

    pub fn active_indices(&self) -> Option<&[usize]> {
        self.active.as_ref().map(|a| a.indices.as_slice())
    }

    pub fn alarms(&self) -> &[AttackAlarm] {
        &self.alarms
    }

    pub fn autofs_runs(&self) -> u64 {
        self.autofs_runs
    }

    pub fn window_len(&self) -> usize {
        self.raw_window.len()
    }

    /// Multiply-add count of one verdict. Constant for a fixed active model,
    /// independent of window fill or stream history.
    pub fn verdict_op_count(&self) -> Option<u64> {
        let a = self.active.as_ref()?;
        let sizes = a.model.layer_sizes();
        let mut ops = 0u64;
        for w in sizes.windows(2) {
            ops += 2 * (w[0] as u64) * (w[1] as u64) + w[1] as u64;
        }
        // Projection gathers and standardizes one value per input.
        Some(ops + 3 * sizes[0] as u64)
    }

    pub fn on_feature_vector(
        &mut self,
        fv: &FeatureVector,
    ) -> Result<DetectionVerdict, DetectorError> {
        if fv.values.len() != TOTAL_SENSORS {
            return Err(DetectorError::WrongWidth { got: fv.values.len() });
        }
        let active = self.active.as_ref().ok_or(DetectorError::NoActiveModel)?;
        let projected: Vec<f64> = active.indices.iter().map(|&j| fv.values[j]).collect();
        let pred = active.model.predict(&projected)?;
        let verdict = DetectionVerdict {
            twin_id: self.twin_id,
            timestamp: fv.timestamp,
            class: pred.class,
            confidence: pred.confidence,
            model_version: active.model.version(),
            selected_feature_indices: active.indices.clone(),
        };

        self.raw_window.push_back(fv.values.clone());
        self.verdict_window.push_back((fv.timestamp, pred.class));
        while self.raw_window.len() > self.thresholds.window {
            self.raw_window.pop_front();
        }
        while self.verdict_window.len() > self.thresholds.window {
            self.verdict_window.pop_front();
        }
        self.cooldown_remaining = self.cooldown_remaining.saturating_sub(1);
        match self.tracker.observe(fv.timestamp, pred.class) {
            Some(AlarmEvent::Opened { onset_tick }) => {
                self.alarms.push(AttackAlarm {
                    twin_id: self.twin_id,
                    onset_tick,
                    cleared_tick: None,
                });
            }
            Some(AlarmEvent::Cleared { cleared_tick }) => {
                if let Some(last) = self.alarms.last_mut() {
                    last.cleared_tick = Some(cleared_tick);
                }
            }
            None => {}
        }
        Ok(verdict)
    }

    /// Ensemble-labels the newest `WINDOW_ROWS` raw vectors in the active
    /// feature space. The returned labels align with the newest verdicts.
    pub fn pseudo_label_window(&self) -> Result<Vec<ClassLabel>, DetectorError> {
        let active = self.active.as_ref().ok_or(DetectorError::NoActiveModel)?;
        if self.raw_window.len() < WINDOW_ROWS {
            return Err(DetectorError::InsufficientWindow {
                have: self.raw_window.len(),
                need: WINDOW_ROWS,
            });
        }
        let mut win = Matrix::with_capacity(WINDOW_ROWS, active.indices.len());
        let start = self.raw_window.len() - WINDOW_ROWS;
        let mut buf = vec![0.0; active.indices.len()];
        for row in self.raw_window.iter().skip(start) {
            for (b, &j) in buf.iter_mut().zip(&active.indices) {
                *b = row[j];
            }
            win.push_row(&buf);
        }
        let labeled = run_labeling(
            &win,
            &active.baseline,
            derive_seed(self.seed, &format!("pseudo-{}", self.autofs_runs)),
        )?;
        Ok(labeled.labels[..WINDOW_ROWS].to_vec())
    }

    /// Confusion of the newest verdicts against the given reference labels
    /// (last entry pairs with the newest verdict).
    pub fn update_metrics(&self, reference: &[ClassLabel]) -> MetricsSnapshot {
        let usable = reference.len().min(self.verdict_window.len());
        if usable < self.thresholds.min_window {
            return MetricsSnapshot::Insufficient { have: usable, need: self.thresholds.min_window };
        }
        let verdicts = self.verdict_window.iter().skip(self.verdict_window.len() - usable);
        let refs = reference.iter().skip(reference.len() - usable);
        let mut c = Confusion::default();
        for ((_, predicted), truth) in verdicts.zip(refs) {
            match (predicted, truth) {
                (ClassLabel::Ddos, ClassLabel::Ddos) => c.tp += 1,
                (ClassLabel::Ddos, ClassLabel::NotDdos) => c.fp += 1,
                (ClassLabel::NotDdos, ClassLabel::Ddos) => c.fn_ += 1,
                (ClassLabel::NotDdos, ClassLabel::NotDdos) => c.tn += 1,
            }
        }
        MetricsSnapshot::Ready(metrics_from_confusion(c))
    }

    fn breached(&self, m: &Metrics) -> Option<String> {
        let t = &self.thresholds;
        for (name, value, threshold) in [
            ("accuracy", m.accuracy, t.accuracy),
            ("precision", m.precision, t.precision),
            ("recall", m.recall, t.recall),
            ("f_measure", m.f_measure, t.f_measure),
        ] {
            if value < threshold {
                return Some(format!("{name} {value:.4} below threshold {threshold:.2}"));
            }
        }
        None
    }

    /// Runs feature selection when a metric breached and the cool-down has
    /// elapsed. Any attempt re-arms the cool-down; a failed attempt keeps the
    /// current model serving.
    pub fn check_and_trigger(&mut self, snapshot: &MetricsSnapshot) -> TriggerOutcome {
        let metrics = match snapshot {
            MetricsSnapshot::Insufficient { have, need } => {
                return TriggerOutcome::NoAction {
                    reason: format!("window has {have} referenced verdicts, metrics need {need}"),
                }
            }
            MetricsSnapshot::Ready(m) => m,
        };
        let Some(breach) = self.breached(metrics) else {
            return TriggerOutcome::NoAction { reason: "all metrics at or above thresholds".into() };
        };
        if self.cooldown_remaining > 0 {
            return TriggerOutcome::NoAction {
                reason: format!("{breach}, but cool-down has {} verdicts left", self.cooldown_remaining),
            };
        }
        let active = match self.active.as_ref() {
            Some(a) => a,
            None => return TriggerOutcome::NoAction { reason: "no active model".into() },
        };

        self.cooldown_remaining = self.thresholds.cooldown;
        let mut window = Matrix::with_capacity(self.raw_window.len(), TOTAL_SENSORS);
        for row in &self.raw_window {
            window.push_row(row);
        }
        let seed = derive_seed(self.seed, &format!("trigger-{}", self.autofs_runs));
        match run_autofs(&window, &self.pool, &active.indices, &self.autofs_cfg, seed) {
            Ok(outcome) => {
                let new_version = active.model.version() + 1;
                let mut model = outcome.winner.model;
                model.set_version(new_version);
                let indices = outcome.winner.selected.clone();
                let baseline = match make_baseline(
                    &self.pool,
                    &indices,
                    derive_seed(self.seed, "brain-baseline"),
                ) {
                    Ok(b) => b,
                    Err(e) => {
                        return TriggerOutcome::NoAction {
                            reason: format!("{breach}; baseline reprojection failed: {e}"),
                        }
                    }
                };
                self.autofs_runs += 1;
                let report = TriggerReport {
                    winner_method: outcome.winner.method,
                    winner_indices: indices.clone(),
                    winner_recall: outcome.winner.recall,
                    new_version,
                    candidates: outcome.candidates,
                    failures: outcome.failures,
                    labeling_alignment_flagged: outcome.labeled.alignment_flagged,
                };
                self.active = Some(ActiveModel { indices, model, baseline });
                TriggerOutcome::Triggered(report)
            }
            Err(FsError::AutoFsFailed(detail)) => {
                tracing::warn!(twin = %self.twin_id, %detail, "feature selection failed; keeping current model");
                TriggerOutcome::NoAction { reason: format!("{breach}; selection failed: {detail}") }
            }
            Err(e) => {
                tracing::warn!(twin = %self.twin_id, error = %e, "feature selection errored; keeping current model");
                TriggerOutcome::NoAction { reason: format!("{breach}; selection errored: {e}") }
            }
        }
    }
}
