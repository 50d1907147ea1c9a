//! Automated feature selection: five methods each pick the 10 best of 92
//! sensors, a candidate model is trained per method on the ensemble-labeled
//! sample federated with the baseline, and the winner maximizes recall with
//! detection time as the tie-breaker.

use crate::data::ClassLabel;
use crate::labeling::{
    make_baseline, run_labeling, BaselinePool, LabeledDataset, LabelingError, SELECTED_FEATURES,
    WINDOW_ROWS,
};
use crate::matrix::{Matrix, Standardizer};
use crate::mlp::{self, MlpError, MlpModel, TrainConfig};
use crate::seed::derive_seed;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Declaration order is the final tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FsMethod {
    AnovaF,
    ChiSquare,
    Bfe,
    FisherScore,
    Rfe,
}

impl FsMethod {
    pub const ALL: [FsMethod; 5] =
        [FsMethod::AnovaF, FsMethod::ChiSquare, FsMethod::Bfe, FsMethod::FisherScore, FsMethod::Rfe];

    pub fn as_str(self) -> &'static str {
        match self {
            FsMethod::AnovaF => "anova_f",
            FsMethod::ChiSquare => "chi_square",
            FsMethod::Bfe => "bfe",
            FsMethod::FisherScore => "fisher_score",
            FsMethod::Rfe => "rfe",
        }
    }
}

impl std::fmt::Display for FsMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum FsError {
    #[error("only one class present in the labels")]
    SingleClass,
    #[error("shape {rows}x{cols} cannot support selecting {k} features")]
    DegenerateShape { rows: usize, cols: usize, k: usize },
    #[error("linear scorer diverged")]
    NonConvergence,
    #[error("no candidates to select from")]
    EmptyCandidates,
    #[error("window has {have} rows, selection needs {need}")]
    WindowTooSmall { have: usize, need: usize },
    #[error("every feature-selection candidate failed: {0}")]
    AutoFsFailed(String),
    #[error(transparent)]
    Labeling(#[from] LabelingError),
}

/// Ranked output of one selection method.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// The k chosen features, best first.
    pub indices: Vec<usize>,
    /// Score per input feature (length d).
    pub scores: Vec<f64>,
    /// Set when RFE had to substitute a Fisher ranking for a diverged loop.
    pub fallback_used: bool,
}

fn check_shape(x: &Matrix, y: &[ClassLabel], k: usize) -> Result<(), FsError> {
    if x.rows() < 4 || x.cols() < k || k == 0 || x.rows() != y.len() {
        return Err(FsError::DegenerateShape { rows: x.rows(), cols: x.cols(), k });
    }
    let ddos = y.iter().filter(|l| **l == ClassLabel::Ddos).count();
    if ddos == 0 || ddos == y.len() {
        return Err(FsError::SingleClass);
    }
    Ok(())
}

/// Indices of the k largest scores, descending, ties to the lower index.
fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

fn class_mask(y: &[ClassLabel]) -> (Vec<bool>, usize, usize) {
    let mask: Vec<bool> = y.iter().map(|l| *l == ClassLabel::Ddos).collect();
    let n1 = mask.iter().filter(|m| **m).count();
    (mask.clone(), y.len() - n1, n1)
}

/// One-way ANOVA F statistic per feature: between-group mean square over
/// within-group mean square. Zero within-variance with separated means ranks
/// first via the infinity sentinel.
pub fn anova_f_select(x: &Matrix, y: &[ClassLabel], k: usize) -> Result<Selection, FsError> {
    check_shape(x, y, k)?;
    let (mask, n0, n1) = class_mask(y);
    let n = x.rows() as f64;
    let mut scores = vec![0.0; x.cols()];
    for j in 0..x.cols() {
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        for (i, row) in x.iter_rows().enumerate() {
            if mask[i] {
                s1 += row[j];
            } else {
                s0 += row[j];
            }
        }
        let (m0, m1) = (s0 / n0 as f64, s1 / n1 as f64);
        let grand = (s0 + s1) / n;
        let mut ssw = 0.0;
        for (i, row) in x.iter_rows().enumerate() {
            let d = row[j] - if mask[i] { m1 } else { m0 };
            ssw += d * d;
        }
        let ssb = n0 as f64 * (m0 - grand) * (m0 - grand) + n1 as f64 * (m1 - grand) * (m1 - grand);
        scores[j] = if ssb == 0.0 {
            0.0
        } else if ssw == 0.0 {
            f64::INFINITY
        } else {
            (ssb / 1.0) / (ssw / (n - 2.0))
        };
    }
    Ok(Selection { indices: top_k(&scores, k), scores, fallback_used: false })
}

/// Chi-square on min-max scaled features: class-wise sums against the
/// class-prior expectation. Constant features score 0.
pub fn chi_square_select(x: &Matrix, y: &[ClassLabel], k: usize) -> Result<Selection, FsError> {
    check_shape(x, y, k)?;
    let (mask, n0, n1) = class_mask(y);
    let n = x.rows() as f64;
    let priors = [n0 as f64 / n, n1 as f64 / n];
    let mut scores = vec![0.0; x.cols()];
    for j in 0..x.cols() {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for row in x.iter_rows() {
            lo = lo.min(row[j]);
            hi = hi.max(row[j]);
        }
        if hi <= lo {
            continue;
        }
        let scale = hi - lo;
        let mut obs = [0.0, 0.0];
        for (i, row) in x.iter_rows().enumerate() {
            obs[mask[i] as usize] += (row[j] - lo) / scale;
        }
        let total = obs[0] + obs[1];
        if total == 0.0 {
            continue;
        }
        let mut chi2 = 0.0;
        for c in 0..2 {
            let expected = total * priors[c];
            let d = obs[c] - expected;
            chi2 += d * d / expected;
        }
        scores[j] = chi2;
    }
    Ok(Selection { indices: top_k(&scores, k), scores, fallback_used: false })
}

/// Fisher score per feature: between-class scatter over summed within-class
/// variance (population), with the infinity sentinel for perfect separators.
pub fn fisher_score_select(x: &Matrix, y: &[ClassLabel], k: usize) -> Result<Selection, FsError> {
    check_shape(x, y, k)?;
    let (mask, n0, n1) = class_mask(y);
    let n = x.rows() as f64;
    let mut scores = vec![0.0; x.cols()];
    for j in 0..x.cols() {
        let mut s = [0.0, 0.0];
        for (i, row) in x.iter_rows().enumerate() {
            s[mask[i] as usize] += row[j];
        }
        let means = [s[0] / n0 as f64, s[1] / n1 as f64];
        let grand = (s[0] + s[1]) / n;
        let mut sq = [0.0, 0.0];
        for (i, row) in x.iter_rows().enumerate() {
            let c = mask[i] as usize;
            let d = row[j] - means[c];
            sq[c] += d * d;
        }
        let numer = n0 as f64 * (means[0] - grand) * (means[0] - grand)
            + n1 as f64 * (means[1] - grand) * (means[1] - grand);
        let denom = sq[0] + sq[1];
        scores[j] = if numer == 0.0 {
            0.0
        } else if denom == 0.0 {
            f64::INFINITY
        } else {
            numer / denom
        };
    }
    Ok(Selection { indices: top_k(&scores, k), scores, fallback_used: false })
}

/// Base estimator for the wrapper methods: logistic classifier trained by
/// full-batch gradient descent from a zero start on standardized inputs.
/// Convex objective, so the fit is deterministic without a seed.
pub struct LinearScorer {
    pub weights: Vec<f64>,
    pub bias: f64,
    std: Standardizer,
}

pub const SCORER_EPOCHS: usize = 200;
pub const SCORER_LR: f64 = 0.1;
/// Gradient infinity-norm at which descent stops early; at learning rate 0.1
/// the boundary then moves by under 1e-5 per epoch, far below what a recall
/// evaluation can resolve.
const SCORER_GRAD_STOP: f64 = 1e-4;
/// Epoch budget for a warm-started refit. The start point is the parent's
/// fit with one coordinate dropped, so a short rebalance is enough, and every
/// candidate gets the same budget.
const WARM_EPOCHS: usize = 25;

impl LinearScorer {
    fn fit(
        x: &Matrix,
        y: &[ClassLabel],
        warm: Option<(Vec<f64>, f64)>,
    ) -> Result<LinearScorer, FsError> {
        let n = x.rows();
        let d = x.cols();
        let epochs = if warm.is_some() { WARM_EPOCHS } else { SCORER_EPOCHS };
        let std = Standardizer::fit(x);
        let xs = std.apply(x);
        let targets: Vec<f64> =
            y.iter().map(|l| if *l == ClassLabel::Ddos { 1.0 } else { 0.0 }).collect();
        let (mut w, mut b) = warm.unwrap_or_else(|| (vec![0.0; d], 0.0));
        let mut gw = vec![0.0; d];
        for _ in 0..epochs {
            gw.iter_mut().for_each(|g| *g = 0.0);
            let mut gb = 0.0;
            for (i, row) in xs.iter_rows().enumerate() {
                let z = b + w.iter().zip(row).map(|(a, v)| a * v).sum::<f64>();
                let dz = 1.0 / (1.0 + (-z).exp()) - targets[i];
                for (g, v) in gw.iter_mut().zip(row) {
                    *g += dz * v;
                }
                gb += dz;
            }
            let inv = SCORER_LR / n as f64;
            for (wj, g) in w.iter_mut().zip(&gw) {
                *wj -= inv * g;
            }
            b -= inv * gb;
            if !b.is_finite() || w.iter().any(|v| !v.is_finite()) {
                return Err(FsError::NonConvergence);
            }
            let gmax = gw.iter().fold(gb.abs(), |m, g| m.max(g.abs())) / n as f64;
            if gmax < SCORER_GRAD_STOP {
                break;
            }
        }
        Ok(LinearScorer { weights: w, bias: b, std })
    }

    fn is_ddos(&self, raw: &[f64]) -> bool {
        let mut buf = vec![0.0; raw.len()];
        self.std.apply_row(raw, &mut buf);
        let z = self.bias + self.weights.iter().zip(&buf).map(|(a, v)| a * v).sum::<f64>();
        z >= 0.0
    }
}

/// Fold id per row, stratified by class. Fixed internal seed keeps the
/// seedless wrapper signatures deterministic.
fn stratified_assignment(y: &[ClassLabel], k: usize) -> Result<Vec<usize>, FsError> {
    let mut assignment = vec![0usize; y.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(0x42);
    for class in [ClassLabel::Ddos, ClassLabel::NotDdos] {
        let mut idx: Vec<usize> =
            (0..y.len()).filter(|&i| y[i] == class).collect();
        if idx.len() < k {
            return Err(FsError::SingleClass);
        }
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            assignment[i] = pos % k;
        }
    }
    Ok(assignment)
}

/// Pooled 3-fold DDoS recall of the linear scorer; returns the per-fold
/// models for warm starts.
fn cv_recall(
    x: &Matrix,
    y: &[ClassLabel],
    assignment: &[usize],
    warm: Option<&[LinearScorer]>,
) -> Result<(f64, Vec<LinearScorer>), FsError> {
    let k = 3;
    let mut tp = 0usize;
    let mut fne = 0usize;
    let mut models = Vec::with_capacity(k);
    for fold in 0..k {
        let train: Vec<usize> = (0..x.rows()).filter(|&i| assignment[i] != fold).collect();
        let xt = x.select_rows(&train);
        let yt: Vec<ClassLabel> = train.iter().map(|&i| y[i]).collect();
        let start = warm.map(|m| (m[fold].weights.clone(), m[fold].bias));
        let model = LinearScorer::fit(&xt, &yt, start)?;
        for (i, row) in x.iter_rows().enumerate() {
            if assignment[i] == fold && y[i] == ClassLabel::Ddos {
                if model.is_ddos(row) {
                    tp += 1;
                } else {
                    fne += 1;
                }
            }
        }
        models.push(model);
    }
    Ok((tp as f64 / (tp + fne) as f64, models))
}

/// Recursive feature elimination: repeatedly fit the linear scorer and drop
/// the smallest-magnitude weight until k features remain. A diverged fit
/// falls back to Fisher ranking for that loop.
pub fn rfe_select(x: &Matrix, y: &[ClassLabel], k: usize) -> Result<Selection, FsError> {
    check_shape(x, y, k)?;
    let d = x.cols();
    let fisher = fisher_score_select(x, y, k.min(d))?.scores;
    let mut remaining: Vec<usize> = (0..d).collect();
    let mut scores = vec![(d - k + 1) as f64; d];
    let mut fallback_used = false;
    let mut step = 1usize;
    while remaining.len() > k {
        let sub = x.select_columns(&remaining);
        let drop_pos = match LinearScorer::fit(&sub, y, None) {
            Ok(m) => (0..remaining.len())
                .min_by(|&a, &b| {
                    m.weights[a].abs().total_cmp(&m.weights[b].abs()).then(remaining[a].cmp(&remaining[b]))
                })
                .unwrap(),
            Err(FsError::NonConvergence) => {
                fallback_used = true;
                (0..remaining.len())
                    .min_by(|&a, &b| {
                        fisher[remaining[a]]
                            .total_cmp(&fisher[remaining[b]])
                            .then(remaining[a].cmp(&remaining[b]))
                    })
                    .unwrap()
            }
            Err(e) => return Err(e),
        };
        scores[remaining[drop_pos]] = step as f64;
        remaining.remove(drop_pos);
        step += 1;
    }
    // Order the survivors by final fitted weight magnitude.
    let sub = x.select_columns(&remaining);
    let mut order: Vec<usize> = (0..remaining.len()).collect();
    match LinearScorer::fit(&sub, y, None) {
        Ok(m) => order.sort_by(|&a, &b| {
            m.weights[b].abs().total_cmp(&m.weights[a].abs()).then(remaining[a].cmp(&remaining[b]))
        }),
        Err(FsError::NonConvergence) => {
            fallback_used = true;
            order.sort_by(|&a, &b| {
                fisher[remaining[b]]
                    .total_cmp(&fisher[remaining[a]])
                    .then(remaining[a].cmp(&remaining[b]))
            });
        }
        Err(e) => return Err(e),
    }
    let indices: Vec<usize> = order.into_iter().map(|p| remaining[p]).collect();
    Ok(Selection { indices, scores, fallback_used })
}

/// Backward elimination wrapped around 3-fold recall: at each step remove the
/// feature whose removal maximizes recall (ties to the lower index).
pub fn bfe_select(x: &Matrix, y: &[ClassLabel], k: usize) -> Result<Selection, FsError> {
    check_shape(x, y, k)?;
    let d = x.cols();
    let assignment = stratified_assignment(y, 3)?;
    let mut remaining: Vec<usize> = (0..d).collect();
    let mut scores = vec![0.0; d];
    let mut parents: Option<Vec<LinearScorer>> = None;
    while remaining.len() > k {
        let mut best: Option<(f64, usize, Vec<LinearScorer>)> = None;
        for pos in 0..remaining.len() {
            let mut cand = remaining.clone();
            cand.remove(pos);
            let sub = x.select_columns(&cand);
            // Warm start from the parent fit with the dropped coordinate
            // removed; the objective is convex so this only skips epochs.
            let warm: Option<Vec<LinearScorer>> = parents.as_ref().map(|ms| {
                ms.iter()
                    .map(|m| {
                        let mut w = m.weights.clone();
                        w.remove(pos);
                        LinearScorer { weights: w, bias: m.bias, std: m.std.clone() }
                    })
                    .collect()
            });
            let (recall, models) = cv_recall(&sub, y, &assignment, warm.as_deref())?;
            if best.as_ref().map_or(true, |(r, _, _)| recall > *r) {
                best = Some((recall, pos, models));
            }
        }
        let (recall, pos, models) = best.unwrap();
        scores[remaining[pos]] = recall;
        remaining.remove(pos);
        parents = Some(models);
    }
    let sub = x.select_columns(&remaining);
    let (final_recall, _) = cv_recall(&sub, y, &assignment, None)?;
    for &j in &remaining {
        scores[j] = final_recall;
    }
    Ok(Selection { indices: remaining, scores, fallback_used: false })
}

pub fn select(method: FsMethod, x: &Matrix, y: &[ClassLabel], k: usize) -> Result<Selection, FsError> {
    match method {
        FsMethod::AnovaF => anova_f_select(x, y, k),
        FsMethod::ChiSquare => chi_square_select(x, y, k),
        FsMethod::Bfe => bfe_select(x, y, k),
        FsMethod::FisherScore => fisher_score_select(x, y, k),
        FsMethod::Rfe => rfe_select(x, y, k),
    }
}

/// One evaluated (method, model) pair.
pub struct FsCandidate {
    pub method: FsMethod,
    pub selected: Vec<usize>,
    pub scores: Vec<f64>,
    pub recall: f64,
    pub detection_time: f64,
    pub model: MlpModel,
    pub fallback_used: bool,
}

/// Report view of a candidate, minus the model weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub method: FsMethod,
    pub selected: Vec<usize>,
    pub recall: f64,
    pub detection_time: f64,
    pub fallback_used: bool,
}

impl FsCandidate {
    pub fn summary(&self) -> CandidateSummary {
        CandidateSummary {
            method: self.method,
            selected: self.selected.clone(),
            recall: self.recall,
            detection_time: self.detection_time,
            fallback_used: self.fallback_used,
        }
    }
}

pub struct AutoFsOutcome {
    pub winner: FsCandidate,
    /// The window rows that were sampled for labeling and selection.
    pub sample_indices: Vec<usize>,
    /// Ensemble labeling output in the previously active feature space.
    pub labeled: LabeledDataset,
    pub candidates: Vec<CandidateSummary>,
    pub failures: Vec<(FsMethod, String)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoFsConfig {
    /// Epoch cap for candidate model training; early stopping usually ends
    /// the run far sooner.
    pub candidate_epochs: usize,
    pub candidate_patience: usize,
    /// Row cap for the backward-elimination wrapper, a desk-scale budget
    /// control. The wrapper retrains its scorer thousands of times, so it
    /// sees a seeded subsample while every other method sees all rows.
    pub bfe_rows: Option<usize>,
}

impl Default for AutoFsConfig {
    fn default() -> Self {
        AutoFsConfig { candidate_epochs: 300, candidate_patience: 20, bfe_rows: Some(400) }
    }
}

/// Deterministic stand-in for wall-clock detection time: training cost plus
/// a thousand single-row inferences, in simulated seconds at one gigaop per
/// second. Monotone in epochs, rows, and parameter count.
pub fn detection_time_seconds(epochs_run: usize, train_rows: usize, params: usize) -> f64 {
    let train_ops = epochs_run as f64 * train_rows as f64 * (6.0 * params as f64 + 20.0);
    let infer_ops = 2.0 * params as f64;
    (train_ops + 1000.0 * infer_ops) / 1e9
}

/// Maximum recall wins; within `EPS_RECALL` of the maximum the fastest
/// detection time wins; remaining ties resolve in method declaration order.
pub const EPS_RECALL: f64 = 0.01;

pub fn final_fs_select(mut candidates: Vec<FsCandidate>) -> Result<FsCandidate, FsError> {
    if candidates.is_empty() {
        return Err(FsError::EmptyCandidates);
    }
    candidates.sort_by_key(|c| c.method);
    let rmax = candidates.iter().map(|c| c.recall).fold(f64::NEG_INFINITY, f64::max);
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        if c.recall < rmax - EPS_RECALL {
            continue;
        }
        match best {
            None => best = Some(i),
            Some(b) if c.detection_time < candidates[b].detection_time => best = Some(i),
            _ => {}
        }
    }
    Ok(candidates.swap_remove(best.expect("non-empty candidate list")))
}

/// Stratified 70/30 row split, seeded.
fn split_70_30(y: &[ClassLabel], seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [ClassLabel::Ddos, ClassLabel::NotDdos] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng);
        let cut = (idx.len() as f64 * 0.7).round() as usize;
        train.extend_from_slice(&idx[..cut]);
        test.extend_from_slice(&idx[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Full selection pass over an unlabeled window of raw sensor vectors.
///
/// The sampled rows are pseudo-labeled in the currently active feature space,
/// then each method selects from the full sensor space and its candidate
/// model trains on the method's own federated view of the same rows.
pub fn run_autofs(
    window: &Matrix,
    pool: &BaselinePool,
    active: &[usize],
    cfg: &AutoFsConfig,
    seed: u64,
) -> Result<AutoFsOutcome, FsError> {
    if window.rows() < WINDOW_ROWS {
        return Err(FsError::WindowTooSmall { have: window.rows(), need: WINDOW_ROWS });
    }
    let mut sample_indices: Vec<usize> = (0..window.rows()).collect();
    sample_indices.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, "autofs-sample")));
    sample_indices.truncate(WINDOW_ROWS);
    let sample = window.select_rows(&sample_indices);

    let baseline_seed = derive_seed(seed, "autofs-baseline");
    let map_labeling = |e: LabelingError| FsError::AutoFsFailed(format!("labeling: {e}"));
    let active_baseline = make_baseline(pool, active, baseline_seed).map_err(map_labeling)?;
    let labeled = run_labeling(
        &sample.select_columns(active),
        &active_baseline,
        derive_seed(seed, "autofs-labeling"),
    )
    .map_err(map_labeling)?;
    let labels: Vec<ClassLabel> = labeled.labels[..WINDOW_ROWS].to_vec();

    let (train_idx, test_idx) = split_70_30(
        &labels.iter().copied().chain(pool_baseline_labels()).collect::<Vec<_>>(),
        derive_seed(seed, "autofs-split"),
    );
    let mlp_cfg = TrainConfig {
        epochs: cfg.candidate_epochs,
        patience: cfg.candidate_patience,
        seed: derive_seed(seed, "autofs-mlp"),
        ..TrainConfig::default()
    };

    let bfe_sample: Option<(Matrix, Vec<ClassLabel>)> = cfg.bfe_rows.map(|cap| {
        let mut idx: Vec<usize> = (0..sample.rows()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, "autofs-bfe-rows")));
        idx.truncate(cap);
        idx.sort_unstable();
        (sample.select_rows(&idx), idx.iter().map(|&i| labels[i]).collect())
    });

    let mut candidates = Vec::new();
    let mut failures = Vec::new();
    for method in FsMethod::ALL {
        let result = (|| -> Result<FsCandidate, FsError> {
            let sel = match (method, &bfe_sample) {
                (FsMethod::Bfe, Some((bx, by))) => bfe_select(bx, by, SELECTED_FEATURES)?,
                _ => select(method, &sample, &labels, SELECTED_FEATURES)?,
            };
            let method_baseline =
                make_baseline(pool, &sel.indices, baseline_seed).map_err(FsError::Labeling)?;
            let x = sample.select_columns(&sel.indices).vstack(method_baseline.features());
            let mut y = labels.clone();
            y.extend_from_slice(method_baseline.labels());

            let xt = x.select_rows(&train_idx);
            let yt: Vec<ClassLabel> = train_idx.iter().map(|&i| y[i]).collect();
            let (model, history) =
                mlp::train(&MlpModel::init(mlp_cfg.seed), &xt, &yt, &mlp_cfg).map_err(map_mlp)?;
            let (mut tp, mut fne) = (0usize, 0usize);
            for &i in &test_idx {
                if y[i] == ClassLabel::Ddos {
                    let p = model.predict(x.row(i)).map_err(map_mlp)?;
                    if p.class == ClassLabel::Ddos {
                        tp += 1;
                    } else {
                        fne += 1;
                    }
                }
            }
            if tp + fne == 0 {
                return Err(FsError::SingleClass);
            }
            let recall = tp as f64 / (tp + fne) as f64;
            let detection_time =
                detection_time_seconds(history.epochs_run, history.train_rows, model.param_count());
            Ok(FsCandidate {
                method,
                selected: sel.indices,
                scores: sel.scores,
                recall,
                detection_time,
                model,
                fallback_used: sel.fallback_used,
            })
        })();
        match result {
            Ok(c) => candidates.push(c),
            Err(e) => failures.push((method, e.to_string())),
        }
    }

    if candidates.is_empty() {
        let detail = failures
            .iter()
            .map(|(m, e)| format!("{m}: {e}"))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(FsError::AutoFsFailed(detail));
    }
    let summaries: Vec<CandidateSummary> = candidates.iter().map(|c| c.summary()).collect();
    let winner = final_fs_select(candidates)?;
    Ok(AutoFsOutcome { winner, sample_indices, labeled, candidates: summaries, failures })
}

fn map_mlp(e: MlpError) -> FsError {
    FsError::AutoFsFailed(format!("candidate training: {e}"))
}

/// Label layout of the federated set's baseline half: 650 DDoS then 350
/// NotDDoS, the construction order of `make_baseline`.
fn pool_baseline_labels() -> impl Iterator<Item = ClassLabel> {
    std::iter::repeat(ClassLabel::Ddos)
        .take(crate::labeling::BASELINE_DDOS)
        .chain(std::iter::repeat(ClassLabel::NotDdos).take(crate::labeling::BASELINE_NOT_DDOS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{regime_dataset, two_gaussians, SIGNAL_CHANNELS};

    fn labels(pattern: &[u8]) -> Vec<ClassLabel> {
        pattern
            .iter()
            .map(|&b| if b == 1 { ClassLabel::Ddos } else { ClassLabel::NotDdos })
            .collect()
    }

    // Textbook-formula oracles, written independently of the production code:
    // explicit per-group partitions instead of one-pass accumulation.

    fn oracle_anova(col: &[f64], y: &[ClassLabel]) -> f64 {
        let g0: Vec<f64> = col
            .iter()
            .zip(y)
            .filter(|(_, l)| **l == ClassLabel::NotDdos)
            .map(|(v, _)| *v)
            .collect();
        let g1: Vec<f64> =
            col.iter().zip(y).filter(|(_, l)| **l == ClassLabel::Ddos).map(|(v, _)| *v).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (m0, m1) = (mean(&g0), mean(&g1));
        let grand = mean(col);
        let ssb = g0.len() as f64 * (m0 - grand).powi(2) + g1.len() as f64 * (m1 - grand).powi(2);
        let ssw: f64 = g0.iter().map(|v| (v - m0).powi(2)).sum::<f64>()
            + g1.iter().map(|v| (v - m1).powi(2)).sum::<f64>();
        if ssb == 0.0 {
            0.0
        } else if ssw == 0.0 {
            f64::INFINITY
        } else {
            ssb / (ssw / (col.len() as f64 - 2.0))
        }
    }

    fn oracle_chi(col: &[f64], y: &[ClassLabel]) -> f64 {
        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi <= lo {
            return 0.0;
        }
        let scaled: Vec<f64> = col.iter().map(|v| (v - lo) / (hi - lo)).collect();
        let n = col.len() as f64;
        let n1 = y.iter().filter(|l| **l == ClassLabel::Ddos).count() as f64;
        let obs1: f64 = scaled
            .iter()
            .zip(y)
            .filter(|(_, l)| **l == ClassLabel::Ddos)
            .map(|(v, _)| *v)
            .sum();
        let total: f64 = scaled.iter().sum();
        if total == 0.0 {
            return 0.0;
        }
        let obs0 = total - obs1;
        let e1 = total * n1 / n;
        let e0 = total * (n - n1) / n;
        (obs0 - e0).powi(2) / e0 + (obs1 - e1).powi(2) / e1
    }

    fn oracle_fisher(col: &[f64], y: &[ClassLabel]) -> f64 {
        let g0: Vec<f64> = col
            .iter()
            .zip(y)
            .filter(|(_, l)| **l == ClassLabel::NotDdos)
            .map(|(v, _)| *v)
            .collect();
        let g1: Vec<f64> =
            col.iter().zip(y).filter(|(_, l)| **l == ClassLabel::Ddos).map(|(v, _)| *v).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let var = |v: &[f64], m: f64| v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
        let (m0, m1) = (mean(&g0), mean(&g1));
        let grand = mean(col);
        let numer = g0.len() as f64 * (m0 - grand).powi(2) + g1.len() as f64 * (m1 - grand).powi(2);
        let denom = g0.len() as f64 * var(&g0, m0) + g1.len() as f64 * var(&g1, m1);
        if numer == 0.0 {
            0.0
        } else if denom == 0.0 {
            f64::INFINITY
        } else {
            numer / denom
        }
    }

    fn column(x: &Matrix, j: usize) -> Vec<f64> {
        x.iter_rows().map(|r| r[j]).collect()
    }

    #[test]
    fn univariate_scores_match_oracles() {
        for seed in 0..5u64 {
            let (x, y) = two_gaussians(20, 6, 0.5, 1.0, seed);
            let a = anova_f_select(&x, &y, 3).unwrap();
            let c = chi_square_select(&x, &y, 3).unwrap();
            let f = fisher_score_select(&x, &y, 3).unwrap();
            for j in 0..6 {
                let col = column(&x, j);
                let rel = |got: f64, want: f64| (got - want).abs() / want.abs().max(1e-300);
                assert!(rel(a.scores[j], oracle_anova(&col, &y)) < 1e-9);
                assert!(rel(c.scores[j], oracle_chi(&col, &y)) < 1e-9);
                assert!(rel(f.scores[j], oracle_fisher(&col, &y)) < 1e-9);
            }
        }
    }

    #[test]
    fn anova_constant_feature_ranks_last() {
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|i| vec![5.0, if i < 4 { 0.0 } else { 1.0 } + 0.01 * i as f64])
            .collect();
        let x = Matrix::from_rows(&rows);
        let y = labels(&[0, 0, 0, 0, 1, 1, 1, 1]);
        let s = anova_f_select(&x, &y, 2).unwrap();
        assert_eq!(s.scores[0], 0.0);
        assert_eq!(s.indices, vec![1, 0]);
    }

    #[test]
    fn anova_zero_within_variance_is_infinite() {
        let rows: Vec<Vec<f64>> = [1.0, 1.0, 1.0, 3.0, 3.0, 3.0]
            .iter()
            .enumerate()
            .map(|(i, &v)| vec![v, i as f64 * 0.7])
            .collect();
        let x = Matrix::from_rows(&rows);
        let y = labels(&[0, 0, 0, 1, 1, 1]);
        let s = anova_f_select(&x, &y, 2).unwrap();
        assert_eq!(s.scores[0], f64::INFINITY);
        assert_eq!(s.indices[0], 0);
    }

    #[test]
    fn chi_square_hand_fixture() {
        // Feature 0 nonzero only in DDoS rows: observed (2, 0) against
        // expected (1, 1) gives chi-square 2. Feature 1 is class-balanced.
        let x = Matrix::from_rows(&[
            vec![1.0, 1.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 0.0],
        ]);
        let y = labels(&[1, 1, 0, 0]);
        let s = chi_square_select(&x, &y, 2).unwrap();
        assert_eq!(s.scores[0], 2.0);
        assert_eq!(s.scores[1], 0.0);
        assert_eq!(s.indices[0], 0);
    }

    #[test]
    fn chi_square_constant_feature_scores_zero() {
        let x = Matrix::from_rows(&[vec![4.0, 0.1], vec![4.0, 0.9], vec![4.0, 0.2], vec![4.0, 0.8]]);
        let y = labels(&[0, 1, 0, 1]);
        let s = chi_square_select(&x, &y, 1).unwrap();
        assert_eq!(s.scores[0], 0.0);
    }

    #[test]
    fn fisher_sentinels() {
        let x = Matrix::from_rows(&[
            vec![7.0, 0.0],
            vec![7.0, 0.0],
            vec![7.0, 1.0],
            vec![7.0, 1.0],
        ]);
        let y = labels(&[0, 0, 1, 1]);
        let s = fisher_score_select(&x, &y, 2).unwrap();
        assert_eq!(s.scores[0], 0.0);
        assert_eq!(s.scores[1], f64::INFINITY);
        assert_eq!(s.indices[0], 1);
    }

    #[test]
    fn univariate_selection_is_row_permutation_invariant() {
        let (x, y) = two_gaussians(30, 6, 0.4, 1.5, 7);
        let perm: Vec<usize> = {
            let mut p: Vec<usize> = (0..30).collect();
            p.shuffle(&mut ChaCha8Rng::seed_from_u64(99));
            p
        };
        let xp = x.select_rows(&perm);
        let yp: Vec<ClassLabel> = perm.iter().map(|&i| y[i]).collect();
        for method in [FsMethod::AnovaF, FsMethod::ChiSquare, FsMethod::FisherScore] {
            let a = select(method, &x, &y, 4).unwrap();
            let b = select(method, &xp, &yp, 4).unwrap();
            assert_eq!(a.indices, b.indices, "{method}");
            for (u, v) in a.scores.iter().zip(&b.scores) {
                assert!((u - v).abs() <= 1e-9 * u.abs().max(1.0));
            }
        }
    }

    #[test]
    fn single_class_rejected() {
        let (x, _) = two_gaussians(10, 4, 0.5, 1.0, 1);
        let y = vec![ClassLabel::Ddos; 10];
        for method in FsMethod::ALL {
            assert!(matches!(select(method, &x, &y, 2), Err(FsError::SingleClass)));
        }
    }

    #[test]
    fn rfe_identity_when_d_equals_k() {
        let (x, y) = two_gaussians(20, 5, 0.5, 2.0, 3);
        let s = rfe_select(&x, &y, 5).unwrap();
        let mut sorted = s.indices.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
        assert!(s.scores.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn rfe_keeps_the_label_feature() {
        for seed in 0..20u64 {
            let (noise, _) = two_gaussians(50, 9, 0.5, 0.0, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let y: Vec<ClassLabel> = (0..50)
                .map(|_| if rng.gen_bool(0.5) { ClassLabel::Ddos } else { ClassLabel::NotDdos })
                .collect();
            if y.iter().filter(|l| **l == ClassLabel::Ddos).count() < 3
                || y.iter().filter(|l| **l == ClassLabel::NotDdos).count() < 3
            {
                continue;
            }
            let rows: Vec<Vec<f64>> = (0..50)
                .map(|i| {
                    let mut r = noise.row(i).to_vec();
                    r.insert(4, if y[i] == ClassLabel::Ddos { 1.0 } else { 0.0 });
                    r
                })
                .collect();
            let x = Matrix::from_rows(&rows);
            let s = rfe_select(&x, &y, 3).unwrap();
            assert!(s.indices.contains(&4), "seed {seed}: {:?}", s.indices);
        }
    }

    #[test]
    fn rfe_is_repeatable() {
        let (x, y) = two_gaussians(40, 8, 0.5, 1.0, 5);
        let a = rfe_select(&x, &y, 3).unwrap();
        let b = rfe_select(&x, &y, 3).unwrap();
        assert_eq!(a.indices, b.indices);
        assert_eq!(a.scores, b.scores);
    }

    #[test]
    fn bfe_identity_when_d_equals_k() {
        let (x, y) = two_gaussians(24, 4, 0.5, 2.0, 6);
        let s = bfe_select(&x, &y, 4).unwrap();
        assert_eq!(s.indices, vec![0, 1, 2, 3]);
    }

    #[test]
    fn bfe_drops_a_duplicated_column_first() {
        // Columns 0 and 1 are identical copies of the separating signal;
        // removing one of them cannot hurt recall, and the lower index goes
        // first on ties.
        let (base, y) = two_gaussians(60, 2, 0.5, 6.0, 8);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|i| {
                let r = base.row(i);
                vec![r[0], r[0], r[1] * 0.01, (i as f64).sin()]
            })
            .collect();
        let x = Matrix::from_rows(&rows);
        let s = bfe_select(&x, &y, 3).unwrap();
        let removed: Vec<usize> = (0..4).filter(|j| !s.indices.contains(j)).collect();
        assert_eq!(removed.len(), 1);
        let kept_signal = s.indices.contains(&0) || s.indices.contains(&1);
        assert!(kept_signal, "removed {removed:?}");
        assert_eq!(s.scores[removed[0]], 1.0, "removal cost recall");
    }

    fn dummy_candidate(method: FsMethod, recall: f64, detection_time: f64) -> FsCandidate {
        FsCandidate {
            method,
            selected: (0..10).collect(),
            scores: vec![0.0; 92],
            recall,
            detection_time,
            model: MlpModel::with_layer_sizes(&[1, 2], 0),
            fallback_used: false,
        }
    }

    #[test]
    fn final_select_prefers_recall_then_time_then_order() {
        let recalls = [0.99, 0.95, 0.90, 0.85, 0.80];
        let cands: Vec<FsCandidate> = FsMethod::ALL
            .iter()
            .zip(recalls)
            .map(|(&m, r)| dummy_candidate(m, r, 1.0))
            .collect();
        assert_eq!(final_fs_select(cands).unwrap().method, FsMethod::AnovaF);

        let close = vec![
            dummy_candidate(FsMethod::AnovaF, 0.990, 10.0),
            dummy_candidate(FsMethod::ChiSquare, 0.985, 2.0),
        ];
        assert_eq!(final_fs_select(close).unwrap().method, FsMethod::ChiSquare);

        let single = vec![dummy_candidate(FsMethod::Rfe, 0.5, 3.0)];
        assert_eq!(final_fs_select(single).unwrap().method, FsMethod::Rfe);

        assert!(matches!(final_fs_select(Vec::new()), Err(FsError::EmptyCandidates)));
    }

    #[test]
    fn final_select_ties_resolve_in_method_order() {
        let cands = vec![
            dummy_candidate(FsMethod::Rfe, 0.9, 1.0),
            dummy_candidate(FsMethod::ChiSquare, 0.9, 1.0),
        ];
        assert_eq!(final_fs_select(cands).unwrap().method, FsMethod::ChiSquare);
    }

    fn signal_pool_and_window(seed: u64) -> (BaselinePool, Matrix, Vec<ClassLabel>) {
        let signal: Vec<usize> = SIGNAL_CHANNELS.collect();
        let pool_ds = regime_dataset(900, 700, &signal, derive_seed(seed, "pool"));
        let pool = BaselinePool::new(
            pool_ds.features().clone(),
            pool_ds.labels().iter().map(|l| l.unwrap()).collect(),
        );
        let win_ds = regime_dataset(600, 600, &signal, derive_seed(seed, "window"));
        let truth: Vec<ClassLabel> = win_ds.labels().iter().map(|l| l.unwrap()).collect();
        (pool, win_ds.features().clone(), truth)
    }

    #[test]
    fn autofs_finds_signal_and_is_deterministic() {
        let (pool, window, _) = signal_pool_and_window(0xfeed);
        let active: Vec<usize> = SIGNAL_CHANNELS.collect();
        let cfg = AutoFsConfig { candidate_epochs: 60, ..AutoFsConfig::default() };
        let out = run_autofs(&window, &pool, &active, &cfg, 77).unwrap();

        assert_eq!(out.sample_indices.len(), WINDOW_ROWS);
        assert_eq!(out.winner.selected.len(), SELECTED_FEATURES);
        let mut uniq = out.winner.selected.clone();
        uniq.sort_unstable();
        uniq.dedup();
        assert_eq!(uniq.len(), SELECTED_FEATURES);
        assert!(out.winner.selected.iter().all(|&j| j < 92));

        assert!(out.failures.is_empty(), "{:?}", out.failures);
        let rmax = out.candidates.iter().map(|c| c.recall).fold(0.0, f64::max);
        for c in &out.candidates {
            assert!(c.recall >= 0.9, "{} recall {}", c.method, c.recall);
            assert!(c.detection_time > 0.0);
        }
        assert!(out.winner.recall >= rmax - EPS_RECALL);

        let again = run_autofs(&window, &pool, &active, &cfg, 77).unwrap();
        assert_eq!(out.winner.selected, again.winner.selected);
        assert_eq!(out.winner.method, again.winner.method);
        assert_eq!(out.winner.recall, again.winner.recall);
    }


    #[test]
    fn autofs_rejects_short_window() {
        let (pool, window, _) = signal_pool_and_window(0xc0de);
        let short = window.select_rows(&(0..999).collect::<Vec<_>>());
        let active: Vec<usize> = SIGNAL_CHANNELS.collect();
        let err = run_autofs(&short, &pool, &active, &AutoFsConfig::default(), 1);
        assert!(matches!(err, Err(FsError::WindowTooSmall { have: 999, need: 1000 })));
    }

    #[test]
    fn autofs_degenerate_window_fails_closed() {
        let (pool, _, _) = signal_pool_and_window(0xdead);
        let window = Matrix::from_rows(&vec![vec![1.0; 92]; 1200]);
        let active: Vec<usize> = SIGNAL_CHANNELS.collect();
        let err = run_autofs(&window, &pool, &active, &AutoFsConfig::default(), 2);
        assert!(matches!(err, Err(FsError::AutoFsFailed(_))));
    }
}
