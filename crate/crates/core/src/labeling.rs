//! Pseudo-labeling ensemble: K-Means (K=2) seeds a diagonal-GMM EM on the
//! unlabeled window, a second EM runs on window plus baseline, and the fused
//! responsibilities label the window. The window is then federated with the
//! baseline into a fixed-size training set.
//!
//! All inference runs in a space standardized over window ∪ baseline; emitted
//! rows keep their original values.

use crate::data::ClassLabel;
use crate::matrix::{Matrix, Standardizer};
use crate::seed::derive_seed;
use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Width of every selected feature set and of the MLP input layer.
pub const SELECTED_FEATURES: usize = 10;
/// Rows in one labeling window.
pub const WINDOW_ROWS: usize = 1000;
/// Baseline composition: 65% attack anchors.
pub const BASELINE_DDOS: usize = 650;
pub const BASELINE_NOT_DDOS: usize = 350;
pub const BASELINE_ROWS: usize = BASELINE_DDOS + BASELINE_NOT_DDOS;

/// Variance floor for mixture components, in standardized units.
pub const EPS_VAR: f64 = 1e-6;

pub const KMEANS_MAX_ITER: usize = 100;
pub const EM_MAX_ITER: usize = 200;
pub const EM_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum LabelingError {
    #[error("all rows identical; cannot cluster")]
    DegenerateData,
    #[error("cluster {0} is empty")]
    EmptyCluster(usize),
    #[error("mixture component collapsed twice; data cannot support two components")]
    NumericalCollapse,
    #[error("baseline pool has {have} {class} rows, need {need}")]
    InsufficientPool { class: ClassLabel, have: usize, need: usize },
    #[error("expected {expected} rows x {cols} features, got {rows}x{got_cols}")]
    ShapeMismatch { expected: usize, cols: usize, rows: usize, got_cols: usize },
}

/// Two-component diagonal Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    /// Mixing weights; sum to 1.
    pub weights: [f64; 2],
    pub means: [Vec<f64>; 2],
    /// Per-dimension variances, each >= EPS_VAR.
    pub vars: [Vec<f64>; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Window,
    Baseline,
}

/// Labeled anchor set: exactly 650 DDoS and 350 NotDDoS rows in the currently
/// selected feature space. Regenerated whenever the feature set changes.
#[derive(Debug, Clone)]
pub struct BaselineDataset {
    features: Matrix,
    labels: Vec<ClassLabel>,
}

impl BaselineDataset {
    pub fn new(features: Matrix, labels: Vec<ClassLabel>) -> Result<Self, LabelingError> {
        let ddos = labels.iter().filter(|l| **l == ClassLabel::Ddos).count();
        if features.rows() != BASELINE_ROWS
            || labels.len() != BASELINE_ROWS
            || ddos != BASELINE_DDOS
        {
            return Err(LabelingError::ShapeMismatch {
                expected: BASELINE_ROWS,
                cols: features.cols(),
                rows: features.rows(),
                got_cols: features.cols(),
            });
        }
        Ok(BaselineDataset { features, labels })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[ClassLabel] {
        &self.labels
    }

    pub fn class_mean(&self, class: ClassLabel, x: &Matrix) -> Vec<f64> {
        let mut mean = vec![0.0; x.cols()];
        let mut n = 0usize;
        for (i, l) in self.labels.iter().enumerate() {
            if *l == class {
                for (m, v) in mean.iter_mut().zip(x.row(i)) {
                    *m += v;
                }
                n += 1;
            }
        }
        for m in mean.iter_mut() {
            *m /= n as f64;
        }
        mean
    }
}

/// Raw labeled rows in the full sensor space, sampled down and re-projected
/// into [`BaselineDataset`]s as the selected feature set changes.
#[derive(Debug, Clone)]
pub struct BaselinePool {
    features: Matrix,
    labels: Vec<ClassLabel>,
}

impl BaselinePool {
    pub fn new(features: Matrix, labels: Vec<ClassLabel>) -> Self {
        assert_eq!(features.rows(), labels.len());
        BaselinePool { features, labels }
    }

    pub fn n_rows(&self) -> usize {
        self.features.rows()
    }

    pub fn n_cols(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[ClassLabel] {
        &self.labels
    }
}

/// Federated training set: the labeled window stacked on the baseline.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub features: Matrix,
    pub labels: Vec<ClassLabel>,
    pub provenance: Vec<Provenance>,
    /// Set when component/class alignment had to fall back to mixing weight.
    pub alignment_flagged: bool,
}

impl LabeledDataset {
    /// Audit export: feature columns, canonical label, provenance.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for j in 0..self.features.cols() {
            out.push_str(&format!("f{j},"));
        }
        out.push_str("label,provenance\n");
        for i in 0..self.features.rows() {
            for v in self.features.row(i) {
                out.push_str(&format!("{v},"));
            }
            let prov = match self.provenance[i] {
                Provenance::Window => "window",
                Provenance::Baseline => "baseline",
            };
            out.push_str(&format!("{},{prov}\n", self.labels[i].as_str()));
        }
        out
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with k-means++ seeding, K fixed at 2. An emptied cluster
/// is reseeded to the point farthest from its surviving peer.
pub fn kmeans2(
    x: &Matrix,
    seed: u64,
    max_iter: usize,
) -> Result<(Vec<usize>, [Vec<f64>; 2]), LabelingError> {
    let n = x.rows();
    let first = x.row(0);
    if !x.iter_rows().any(|r| r != first) {
        return Err(LabelingError::DegenerateData);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let c0_idx = rng.gen_range(0..n);
    let c0 = x.row(c0_idx).to_vec();
    let weights: Vec<f64> = x.iter_rows().map(|r| sq_dist(r, &c0)).collect();
    let dist = WeightedIndex::new(&weights).expect("a distinct row guarantees positive weight");
    let c1 = x.row(dist.sample(&mut rng)).to_vec();
    let mut centroids = [c0, c1];

    let mut assignments = vec![0usize; n];
    for _ in 0..max_iter {
        let mut changed = false;
        for (i, row) in x.iter_rows().enumerate() {
            let a = if sq_dist(row, &centroids[0]) <= sq_dist(row, &centroids[1]) { 0 } else { 1 };
            if assignments[i] != a {
                assignments[i] = a;
                changed = true;
            }
        }
        let mut counts = [0usize; 2];
        let mut sums = [vec![0.0; x.cols()], vec![0.0; x.cols()]];
        for (i, row) in x.iter_rows().enumerate() {
            counts[assignments[i]] += 1;
            for (s, v) in sums[assignments[i]].iter_mut().zip(row) {
                *s += v;
            }
        }
        let mut reseeded = false;
        for c in 0..2 {
            if counts[c] == 0 {
                let other = &centroids[1 - c];
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(x.row(a), other).total_cmp(&sq_dist(x.row(b), other))
                    })
                    .unwrap();
                centroids[c] = x.row(far).to_vec();
                reseeded = true;
            } else {
                for (j, s) in sums[c].iter().enumerate() {
                    centroids[c][j] = s / counts[c] as f64;
                }
            }
        }
        if !changed && !reseeded {
            break;
        }
    }
    Ok((assignments, centroids))
}

/// Moment-matched mixture init from a 2-cluster partition.
pub fn init_from_kmeans(
    assignments: &[usize],
    centroids: &[Vec<f64>; 2],
    x: &Matrix,
) -> Result<GmmParams, LabelingError> {
    let d = x.cols();
    let n = x.rows();
    let mut counts = [0usize; 2];
    for &a in assignments {
        counts[a] += 1;
    }
    for c in 0..2 {
        if counts[c] == 0 {
            return Err(LabelingError::EmptyCluster(c));
        }
    }
    let mut vars = [vec![0.0; d], vec![0.0; d]];
    for (i, row) in x.iter_rows().enumerate() {
        let c = assignments[i];
        for (j, v) in row.iter().enumerate() {
            let dm = v - centroids[c][j];
            vars[c][j] += dm * dm;
        }
    }
    for c in 0..2 {
        for v in vars[c].iter_mut() {
            *v = (*v / counts[c] as f64).max(EPS_VAR);
        }
    }
    Ok(GmmParams {
        weights: [counts[0] as f64 / n as f64, counts[1] as f64 / n as f64],
        means: [centroids[0].clone(), centroids[1].clone()],
        vars,
    })
}

pub struct EmOutcome {
    pub params: GmmParams,
    /// n x 2; rows sum to 1.
    pub responsibilities: Matrix,
    /// Objective after each E-step; non-decreasing within 1e-9.
    pub log_likelihood: Vec<f64>,
    pub reinitialized: bool,
}

fn log_pdf(row: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    const LN_2PI: f64 = 1.8378770664093453;
    let mut acc = 0.0;
    for ((x, m), v) in row.iter().zip(mean).zip(var) {
        let d = x - m;
        acc += (LN_2PI + v.ln()) + d * d / v;
    }
    -0.5 * acc
}

/// E-step. Writes responsibilities, returns the log-likelihood.
fn e_step(x: &Matrix, p: &GmmParams, resp: &mut Matrix) -> f64 {
    let lw = [p.weights[0].ln(), p.weights[1].ln()];
    let mut ll = 0.0;
    for (i, row) in x.iter_rows().enumerate() {
        let l0 = lw[0] + log_pdf(row, &p.means[0], &p.vars[0]);
        let l1 = lw[1] + log_pdf(row, &p.means[1], &p.vars[1]);
        let m = l0.max(l1);
        let lse = m + ((l0 - m).exp() + (l1 - m).exp()).ln();
        resp.set(i, 0, (l0 - lse).exp());
        resp.set(i, 1, (l1 - lse).exp());
        ll += lse;
    }
    ll
}

fn m_step(x: &Matrix, resp: &Matrix, p: &mut GmmParams) {
    let n = x.rows();
    let d = x.cols();
    for c in 0..2 {
        let nc: f64 = (0..n).map(|i| resp.get(i, c)).sum();
        p.weights[c] = nc / n as f64;
        let mut mean = vec![0.0; d];
        for (i, row) in x.iter_rows().enumerate() {
            let r = resp.get(i, c);
            for (m, v) in mean.iter_mut().zip(row) {
                *m += r * v;
            }
        }
        for m in mean.iter_mut() {
            *m /= nc;
        }
        let mut var = vec![0.0; d];
        for (i, row) in x.iter_rows().enumerate() {
            let r = resp.get(i, c);
            for (j, v) in row.iter().enumerate() {
                let dm = v - mean[j];
                var[j] += r * dm * dm;
            }
        }
        for v in var.iter_mut() {
            *v = (*v / nc).max(EPS_VAR);
        }
        p.means[c] = mean;
        p.vars[c] = var;
    }
}

/// A component is considered collapsed when its weight has vanished and every
/// dimension sits on the variance floor.
fn collapsed(p: &GmmParams, c: usize) -> bool {
    p.weights[c] < 1e-8 && p.vars[c].iter().all(|&v| v <= EPS_VAR)
}

/// Deterministic rescue: move the component to the row farthest from its
/// peer's mean, widen it to the global variance, and rebalance the weights.
fn reinit_component(x: &Matrix, p: &mut GmmParams, c: usize) {
    let other_mean = p.means[1 - c].clone();
    let far = (0..x.rows())
        .max_by(|&a, &b| sq_dist(x.row(a), &other_mean).total_cmp(&sq_dist(x.row(b), &other_mean)))
        .unwrap();
    p.means[c] = x.row(far).to_vec();
    p.vars[c] = (0..x.cols()).map(|j| x.column_var(j).max(EPS_VAR)).collect();
    p.weights = [0.5, 0.5];
}

/// Diagonal-GMM EM. Stops when the log-likelihood gain drops below `tol` or
/// after `max_iter` iterations. The returned responsibilities are consistent
/// with the returned parameters.
pub fn em_fit(
    x: &Matrix,
    init: GmmParams,
    max_iter: usize,
    tol: f64,
) -> Result<EmOutcome, LabelingError> {
    let n = x.rows();
    let mut params = init;
    let mut resp = Matrix::zeros(n, 2);
    let mut trace = Vec::new();
    let mut reinitialized = false;
    for _ in 0..max_iter {
        let ll = e_step(x, &params, &mut resp);
        if let Some(&prev) = trace.last() {
            if ll - prev < tol {
                trace.push(ll);
                return Ok(EmOutcome { params, responsibilities: resp, log_likelihood: trace, reinitialized });
            }
        }
        trace.push(ll);
        m_step(x, &resp, &mut params);
        for c in 0..2 {
            if collapsed(&params, c) {
                if reinitialized {
                    return Err(LabelingError::NumericalCollapse);
                }
                reinit_component(x, &mut params, c);
                reinitialized = true;
            }
        }
    }
    e_step(x, &params, &mut resp);
    Ok(EmOutcome { params, responsibilities: resp, log_likelihood: trace, reinitialized })
}

/// Mixture init from labeled class statistics, component 0 = DDoS.
fn init_from_classes(x: &Matrix, labels: &[ClassLabel]) -> GmmParams {
    let d = x.cols();
    let mut counts = [0usize; 2];
    let mut means = [vec![0.0; d], vec![0.0; d]];
    for (i, l) in labels.iter().enumerate() {
        let c = if *l == ClassLabel::Ddos { 0 } else { 1 };
        counts[c] += 1;
        for (m, v) in means[c].iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    for c in 0..2 {
        for m in means[c].iter_mut() {
            *m /= counts[c] as f64;
        }
    }
    let mut vars = [vec![0.0; d], vec![0.0; d]];
    for (i, l) in labels.iter().enumerate() {
        let c = if *l == ClassLabel::Ddos { 0 } else { 1 };
        for (j, v) in x.row(i).iter().enumerate() {
            let dm = v - means[c][j];
            vars[c][j] += dm * dm;
        }
    }
    for c in 0..2 {
        for v in vars[c].iter_mut() {
            *v = (*v / counts[c] as f64).max(EPS_VAR);
        }
    }
    let n = labels.len() as f64;
    GmmParams {
        weights: [counts[0] as f64 / n, counts[1] as f64 / n],
        means,
        vars,
    }
}

/// Index of the component nearest the DDoS anchor mean; `true` when the tie
/// had to be broken by mixing weight.
fn ddos_component(params: &GmmParams, ddos_mean: &[f64]) -> (usize, bool) {
    let d0 = sq_dist(&params.means[0], ddos_mean);
    let d1 = sq_dist(&params.means[1], ddos_mean);
    if d0 == d1 {
        (if params.weights[0] >= params.weights[1] { 0 } else { 1 }, true)
    } else {
        (if d0 < d1 { 0 } else { 1 }, false)
    }
}

/// Arithmetic-mean fusion; the boundary favors the attack class. Monotone in
/// both inputs.
pub(crate) fn fuse_label(r1_ddos: f64, r2_ddos: f64) -> ClassLabel {
    if (r1_ddos + r2_ddos) / 2.0 >= 0.5 {
        ClassLabel::Ddos
    } else {
        ClassLabel::NotDdos
    }
}

/// Label a window with the dual-EM ensemble and federate it with the baseline.
///
/// A zero-variance window cannot seed k-means; the ensemble then degrades to
/// the union EM alone.
pub fn run_labeling(
    window: &Matrix,
    baseline: &BaselineDataset,
    seed: u64,
) -> Result<LabeledDataset, LabelingError> {
    if window.rows() != WINDOW_ROWS || window.cols() != baseline.features().cols() {
        return Err(LabelingError::ShapeMismatch {
            expected: WINDOW_ROWS,
            cols: baseline.features().cols(),
            rows: window.rows(),
            got_cols: window.cols(),
        });
    }
    let union_raw = window.vstack(baseline.features());
    let std = Standardizer::fit(&union_raw);
    let union = std.apply(&union_raw);
    let win = union.select_rows(&(0..WINDOW_ROWS).collect::<Vec<_>>());
    let ddos_mean = baseline.class_mean(
        ClassLabel::Ddos,
        &union.select_rows(&(WINDOW_ROWS..WINDOW_ROWS + BASELINE_ROWS).collect::<Vec<_>>()),
    );

    let em1 = match kmeans2(&win, derive_seed(seed, "kmeans"), KMEANS_MAX_ITER) {
        Ok((assignments, centroids)) => {
            let init = init_from_kmeans(&assignments, &centroids, &win)?;
            Some(em_fit(&win, init, EM_MAX_ITER, EM_TOL)?)
        }
        Err(LabelingError::DegenerateData) => None,
        Err(e) => return Err(e),
    };

    let mut union_labels = vec![ClassLabel::NotDdos; WINDOW_ROWS];
    union_labels.extend_from_slice(baseline.labels());
    let baseline_rows = union.select_rows(&(WINDOW_ROWS..union.rows()).collect::<Vec<_>>());
    let init2 = init_from_classes(&baseline_rows, baseline.labels());
    let em2 = em_fit(&union, init2, EM_MAX_ITER, EM_TOL)?;

    let (c2, amb2) = ddos_component(&em2.params, &ddos_mean);
    let (r1, amb1) = match &em1 {
        Some(em) => {
            let (c1, amb) = ddos_component(&em.params, &ddos_mean);
            let r: Vec<f64> = (0..WINDOW_ROWS).map(|i| em.responsibilities.get(i, c1)).collect();
            (r, amb)
        }
        None => ((0..WINDOW_ROWS).map(|i| em2.responsibilities.get(i, c2)).collect(), false),
    };

    let mut labels = Vec::with_capacity(2 * WINDOW_ROWS);
    let mut provenance = Vec::with_capacity(2 * WINDOW_ROWS);
    for (i, r1d) in r1.iter().enumerate() {
        labels.push(fuse_label(*r1d, em2.responsibilities.get(i, c2)));
        provenance.push(Provenance::Window);
    }
    labels.extend_from_slice(baseline.labels());
    provenance.extend(std::iter::repeat(Provenance::Baseline).take(BASELINE_ROWS));

    Ok(LabeledDataset {
        features: union_raw,
        labels,
        provenance,
        alignment_flagged: amb1 || amb2,
    })
}

/// Seeded 650/350 class-stratified sample from the pool, projected onto the
/// selected features. DDoS rows precede NotDDoS rows.
pub fn make_baseline(
    pool: &BaselinePool,
    selected_features: &[usize],
    seed: u64,
) -> Result<BaselineDataset, LabelingError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |class: ClassLabel, need: usize, rng: &mut ChaCha8Rng| {
        let mut idx: Vec<usize> = pool
            .labels()
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == class)
            .map(|(i, _)| i)
            .collect();
        if idx.len() < need {
            return Err(LabelingError::InsufficientPool { class, have: idx.len(), need });
        }
        idx.shuffle(rng);
        idx.truncate(need);
        Ok(idx)
    };
    let mut rows = pick(ClassLabel::Ddos, BASELINE_DDOS, &mut rng)?;
    rows.extend(pick(ClassLabel::NotDdos, BASELINE_NOT_DDOS, &mut rng)?);
    let features = pool.features().select_rows(&rows).select_columns(selected_features);
    let mut labels = vec![ClassLabel::Ddos; BASELINE_DDOS];
    labels.extend(std::iter::repeat(ClassLabel::NotDdos).take(BASELINE_NOT_DDOS));
    BaselineDataset::new(features, labels)
}
