//! Dataset handling: CSV loading with median imputation, class rebalancing
//! (undersampling, SMOTE, near-miss), and stratified fold planning.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    Ddos,
    NotDdos,
}

impl ClassLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Ddos => "ddos",
            ClassLabel::NotDdos => "not_ddos",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("failed to read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv parse error in `{path}`: {reason}")]
    Csv { path: String, reason: String },
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("row {row}: label `{value}` has no mapping")]
    UnmappableLabel { row: usize, value: String },
    #[error("class {0} absent from dataset")]
    ClassAbsent(ClassLabel),
    #[error("need at least 2 {class} rows for interpolation, have {have}")]
    TooFewSamples { class: ClassLabel, have: usize },
    #[error("target count {target} exceeds {class} count {have}")]
    TargetTooLarge { target: usize, class: ClassLabel, have: usize },
    #[error("stratum `{stratum}` has {have} rows, fewer than k={k}")]
    ClassTooSmall { stratum: String, have: usize, k: usize },
    #[error("fold count must be at least 2, got {0}")]
    BadFoldCount(usize),
}

/// Maps raw label strings to classes. A string may also map to "unlabeled".
#[derive(Debug, Clone, Default)]
pub struct LabelMapping {
    map: HashMap<String, Option<ClassLabel>>,
}

impl LabelMapping {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, raw: &str, label: Option<ClassLabel>) -> Self {
        self.map.insert(raw.to_string(), label);
        self
    }

    /// Mapping for datasets already written in canonical form.
    pub fn canonical() -> Self {
        Self::new()
            .with("ddos", Some(ClassLabel::Ddos))
            .with("not_ddos", Some(ClassLabel::NotDdos))
            .with("", None)
    }

    pub fn resolve(&self, raw: &str) -> Option<&Option<ClassLabel>> {
        self.map.get(raw)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub column_names: Vec<String>,
    features: Matrix,
    pub labels: Vec<Option<ClassLabel>>,
}

impl Dataset {
    pub fn new(column_names: Vec<String>, features: Matrix, labels: Vec<Option<ClassLabel>>) -> Self {
        assert_eq!(features.rows(), labels.len(), "one label per row");
        assert_eq!(features.cols(), column_names.len(), "one name per column");
        Dataset { column_names, features, labels }
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

    pub fn labels(&self) -> &[Option<ClassLabel>] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn class_count(&self, class: ClassLabel) -> usize {
        self.labels.iter().filter(|l| **l == Some(class)).count()
    }

    pub fn class_indices(&self, class: ClassLabel) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Some(class))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            column_names: self.column_names.clone(),
            features: self.features.select_rows(rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }

    pub fn truncate_rows(&mut self, cap: usize) {
        if cap == 0 || self.n_rows() <= cap {
            return;
        }
        let keep: Vec<usize> = (0..cap).collect();
        self.features = self.features.select_rows(&keep);
        self.labels.truncate(cap);
    }

    /// Writes the dataset as CSV with a trailing canonical `label` column.
    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| DataError::Csv {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let mut header = self.column_names.clone();
        header.push("label".to_string());
        let io_err = |e: csv::Error| DataError::Csv {
            path: path.display().to_string(),
            reason: e.to_string(),
        };
        w.write_record(&header).map_err(io_err)?;
        for i in 0..self.n_rows() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| format!("{v}")).collect();
            rec.push(self.labels[i].map(|l| l.as_str().to_string()).unwrap_or_default());
            w.write_record(&rec).map_err(io_err)?;
        }
        w.flush().map_err(|e| DataError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Ok(())
    }
}

/// Median of the finite values in `vals`; 0 when none are finite.
fn finite_median(vals: &[f64]) -> f64 {
    let mut finite: Vec<f64> = vals.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return 0.0;
    }
    finite.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = finite.len();
    if n % 2 == 1 {
        finite[n / 2]
    } else {
        0.5 * (finite[n / 2 - 1] + finite[n / 2])
    }
}

/// Replaces every non-finite cell with its column's finite median.
pub fn impute_column_medians(features: &mut Matrix) {
    let (rows, cols) = (features.rows(), features.cols());
    for j in 0..cols {
        let col: Vec<f64> = (0..rows).map(|i| features.get(i, j)).collect();
        if col.iter().all(|v| v.is_finite()) {
            continue;
        }
        let med = finite_median(&col);
        for i in 0..rows {
            if !features.get(i, j).is_finite() {
                features.set(i, j, med);
            }
        }
    }
}

/// Loads a CSV with one label column. Non-numeric and non-finite feature
/// cells become their column's median; label strings go through `mapping`.
pub fn load_csv(path: &Path, label_column: &str, mapping: &LabelMapping) -> Result<Dataset, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    load_csv_str(&text, label_column, mapping).map_err(|e| match e {
        DataError::Csv { reason, .. } => DataError::Csv { path: path.display().to_string(), reason },
        other => other,
    })
}

/// Same as [`load_csv`] but over an in-memory string.
pub fn load_csv_str(text: &str, label_column: &str, mapping: &LabelMapping) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| DataError::Csv { path: String::new(), reason: e.to_string() })?
        .clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| DataError::MissingColumn(label_column.to_string()))?;
    let column_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut features = Matrix::with_capacity(0, column_names.len());
    let mut labels = Vec::new();
    let mut buf = vec![0.0; column_names.len()];
    for (row_no, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DataError::Csv { path: String::new(), reason: e.to_string() })?;
        let mut k = 0;
        for (i, cell) in record.iter().enumerate() {
            if i == label_idx {
                let label = mapping.resolve(cell.trim()).ok_or_else(|| DataError::UnmappableLabel {
                    row: row_no + 1,
                    value: cell.to_string(),
                })?;
                labels.push(*label);
                continue;
            }
            // Unparseable text is treated like a missing cell.
            buf[k] = cell.trim().parse::<f64>().unwrap_or(f64::NAN);
            k += 1;
        }
        features.push_row(&buf);
    }
    if features.rows() == 0 {
        return Err(DataError::EmptyDataset);
    }
    impute_column_medians(&mut features);
    Ok(Dataset::new(column_names, features, labels))
}

/// Keeps `keep` seeded-random rows of `class`; everything else survives.
/// Surviving rows stay in their original order.
fn undersample_to_count(ds: &Dataset, class: ClassLabel, keep: usize, seed: u64) -> Dataset {
    let members = ds.class_indices(class);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = members.clone();
    chosen.shuffle(&mut rng);
    chosen.truncate(keep);
    chosen.sort_unstable();
    let mut chosen_iter = chosen.iter().peekable();
    let keep_rows: Vec<usize> = (0..ds.n_rows())
        .filter(|i| {
            if ds.labels[*i] == Some(class) {
                if chosen_iter.peek() == Some(&i) {
                    chosen_iter.next();
                    true
                } else {
                    false
                }
            } else {
                true
            }
        })
        .collect();
    ds.select_rows(&keep_rows)
}

/// Keeps `round(count * keep_fraction)` rows of `target_class`, chosen with a
/// seeded draw; other rows are untouched and order is preserved.
pub fn random_undersample(
    ds: &Dataset,
    target_class: ClassLabel,
    keep_fraction: f64,
    seed: u64,
) -> Result<Dataset, DataError> {
    let count = ds.class_count(target_class);
    if count == 0 {
        return Err(DataError::ClassAbsent(target_class));
    }
    let keep = (count as f64 * keep_fraction).round() as usize;
    Ok(undersample_to_count(ds, target_class, keep.min(count), seed))
}

/// Synthesizes minority rows by interpolation until the minority class has
/// `target_count` rows: `x_new = x_i + u * (x_nn - x_i)` with `x_i` a seeded
/// choice of minority row, `x_nn` one of its `min(k, count-1)` nearest
/// same-class neighbours, and `u ~ U(0,1)`.
pub fn smote(
    ds: &Dataset,
    minority_class: ClassLabel,
    k_neighbors: usize,
    target_count: usize,
    seed: u64,
) -> Result<Dataset, DataError> {
    let members = ds.class_indices(minority_class);
    if members.is_empty() {
        return Err(DataError::ClassAbsent(minority_class));
    }
    if members.len() < 2 {
        return Err(DataError::TooFewSamples { class: minority_class, have: members.len() });
    }
    let m = members.len();
    let k = k_neighbors.min(m - 1);

    // Neighbour lists among minority rows, ties broken by row index.
    let mut neighbors: Vec<Vec<usize>> = Vec::with_capacity(m);
    for (a, &ra) in members.iter().enumerate() {
        let mut dists: Vec<(f64, usize)> = members
            .iter()
            .enumerate()
            .filter(|(b, _)| *b != a)
            .map(|(_, &rb)| (euclidean(ds.row(ra), ds.row(rb)), rb))
            .collect();
        dists.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then(x.1.cmp(&y.1)));
        neighbors.push(dists.into_iter().take(k).map(|(_, r)| r).collect());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = ds.features().clone();
    let mut labels = ds.labels.clone();
    let mut have = m;
    let mut buf = vec![0.0; ds.n_cols()];
    while have < target_count {
        let pick = rng.gen_range(0..m);
        let base_row = members[pick];
        let nn_row = neighbors[pick][rng.gen_range(0..k)];
        let u: f64 = rng.gen();
        let (base, nn) = (ds.row(base_row), ds.row(nn_row));
        for j in 0..buf.len() {
            buf[j] = base[j] + u * (nn[j] - base[j]);
        }
        features.push_row(&buf);
        labels.push(Some(minority_class));
        have += 1;
    }
    Ok(Dataset::new(ds.column_names.clone(), features, labels))
}

/// Near-miss-1 undersampling: keeps the `target_count` majority rows with the
/// smallest mean distance to their 3 nearest minority rows. Deterministic;
/// ties broken by row index. Kept rows stay in original order.
pub fn near_miss(ds: &Dataset, majority_class: ClassLabel, target_count: usize) -> Result<Dataset, DataError> {
    let majority = ds.class_indices(majority_class);
    if majority.is_empty() {
        return Err(DataError::ClassAbsent(majority_class));
    }
    if target_count > majority.len() {
        return Err(DataError::TargetTooLarge {
            target: target_count,
            class: majority_class,
            have: majority.len(),
        });
    }
    let minority: Vec<usize> = ds
        .labels
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_some() && **l != Some(majority_class))
        .map(|(i, _)| i)
        .collect();
    if minority.is_empty() {
        return Err(DataError::ClassAbsent(match majority_class {
            ClassLabel::Ddos => ClassLabel::NotDdos,
            ClassLabel::NotDdos => ClassLabel::Ddos,
        }));
    }
    let take = 3.min(minority.len());
    let mut scored: Vec<(f64, usize)> = majority
        .iter()
        .map(|&r| {
            let mut d: Vec<f64> = minority.iter().map(|&mr| euclidean(ds.row(r), ds.row(mr))).collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mean = d.iter().take(take).sum::<f64>() / take as f64;
            (mean, r)
        })
        .collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut kept: Vec<usize> = scored.into_iter().take(target_count).map(|(_, r)| r).collect();
    kept.sort_unstable();
    let mut kept_iter = kept.iter().peekable();
    let keep_rows: Vec<usize> = (0..ds.n_rows())
        .filter(|i| {
            if ds.labels[*i] == Some(majority_class) {
                if kept_iter.peek() == Some(&i) {
                    kept_iter.next();
                    true
                } else {
                    false
                }
            } else {
                true
            }
        })
        .collect();
    Ok(ds.select_rows(&keep_rows))
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for j in 0..a.len() {
        let d = a[j] - b[j];
        s += d * d;
    }
    s.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    /// `assignments[i]` is the fold of row `i`.
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, f)| **f == fold)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, f)| **f != fold)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Stratified k-fold plan: every row is assigned exactly one fold and each
/// stratum (class, or "unlabeled") is spread so per-fold counts differ by at
/// most one.
pub fn stratified_kfold(ds: &Dataset, k: usize, seed: u64) -> Result<FoldPlan, DataError> {
    if k < 2 {
        return Err(DataError::BadFoldCount(k));
    }
    let mut strata: Vec<(String, Vec<usize>)> = Vec::new();
    for (name, label) in [
        ("ddos".to_string(), Some(ClassLabel::Ddos)),
        ("not_ddos".to_string(), Some(ClassLabel::NotDdos)),
        ("unlabeled".to_string(), None),
    ] {
        let idx: Vec<usize> = ds
            .labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == label)
            .map(|(i, _)| i)
            .collect();
        if !idx.is_empty() {
            strata.push((name, idx));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![0usize; ds.n_rows()];
    for (name, mut idx) in strata {
        if idx.len() < k {
            return Err(DataError::ClassTooSmall { stratum: name, have: idx.len(), k });
        }
        idx.shuffle(&mut rng);
        for (pos, row) in idx.into_iter().enumerate() {
            assignments[row] = pos % k;
        }
    }
    Ok(FoldPlan { k, assignments })
}

/// Merges datasets by column-name union (first-seen order). Cells absent
/// from a source dataset are imputed with the merged column's median.
pub fn merge_union(parts: &[&Dataset]) -> Result<Dataset, DataError> {
    let mut columns: Vec<String> = Vec::new();
    for p in parts {
        for c in &p.column_names {
            if !columns.contains(c) {
                columns.push(c.clone());
            }
        }
    }
    let total_rows: usize = parts.iter().map(|p| p.n_rows()).sum();
    if total_rows == 0 {
        return Err(DataError::EmptyDataset);
    }
    let mut features = Matrix::with_capacity(total_rows, columns.len());
    let mut labels = Vec::with_capacity(total_rows);
    let mut buf = vec![f64::NAN; columns.len()];
    for p in parts {
        let map: Vec<Option<usize>> = columns.iter().map(|c| p.column_index(c)).collect();
        for i in 0..p.n_rows() {
            let row = p.row(i);
            for (j, m) in map.iter().enumerate() {
                buf[j] = match m {
                    Some(src) => row[*src],
                    None => f64::NAN,
                };
            }
            features.push_row(&buf);
            labels.push(p.labels[i]);
        }
    }
    impute_column_medians(&mut features);
    Ok(Dataset::new(columns, features, labels))
}

/// Undersamples whichever class is over-represented so the DDoS share of
/// labeled rows is as close to `ddos_fraction` as rounding allows.
pub fn rebalance_to_fraction(ds: &Dataset, ddos_fraction: f64, seed: u64) -> Result<Dataset, DataError> {
    let d = ds.class_count(ClassLabel::Ddos);
    let n = ds.class_count(ClassLabel::NotDdos);
    if d == 0 {
        return Err(DataError::ClassAbsent(ClassLabel::Ddos));
    }
    if n == 0 {
        return Err(DataError::ClassAbsent(ClassLabel::NotDdos));
    }
    let current = d as f64 / (d + n) as f64;
    if current > ddos_fraction {
        let target = (ddos_fraction / (1.0 - ddos_fraction) * n as f64).round() as usize;
        Ok(undersample_to_count(ds, ClassLabel::Ddos, target.min(d).max(1), seed))
    } else {
        let target = ((1.0 - ddos_fraction) / ddos_fraction * d as f64).round() as usize;
        Ok(undersample_to_count(ds, ClassLabel::NotDdos, target.min(n).max(1), seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_mapping() -> LabelMapping {
        LabelMapping::new()
            .with("DDoS", Some(ClassLabel::Ddos))
            .with("BENIGN", Some(ClassLabel::NotDdos))
    }

    #[test]
    fn load_imputes_infinity_and_blank_with_column_median() {
        let csv = "a,b,label\n1.0,5.0,DDoS\nInfinity,7.0,BENIGN\n3.0,,DDoS\n5.0,9.0,BENIGN\n";
        let ds = load_csv_str(csv, "label", &raw_mapping()).unwrap();
        // Column a finite values {1,3,5} -> median 3; column b {5,7,9} -> 7.
        assert_eq!(ds.row(1)[0], 3.0);
        assert_eq!(ds.row(2)[1], 7.0);
        assert_eq!(ds.row(0), &[1.0, 5.0]);
        assert_eq!(ds.labels[0], Some(ClassLabel::Ddos));
        assert_eq!(ds.labels[1], Some(ClassLabel::NotDdos));
    }

    #[test]
    fn load_even_count_median_averages_middles() {
        let csv = "a,label\n1.0,DDoS\n2.0,DDoS\n10.0,DDoS\n20.0,DDoS\nNaN,DDoS\n";
        let ds = load_csv_str(csv, "label", &raw_mapping()).unwrap();
        // Finite {1,2,10,20} -> median 6.
        assert_eq!(ds.row(4)[0], 6.0);
    }

    #[test]
    fn load_rejects_unmapped_labels_and_missing_column() {
        let csv = "a,label\n1.0,weird\n";
        match load_csv_str(csv, "label", &raw_mapping()) {
            Err(DataError::UnmappableLabel { row, value }) => {
                assert_eq!(row, 1);
                assert_eq!(value, "weird");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            load_csv_str("a,b\n1,2\n", "label", &raw_mapping()),
            Err(DataError::MissingColumn(_))
        ));
    }

    fn toy_dataset(ddos: usize, benign: usize) -> Dataset {
        let mut features = Matrix::with_capacity(ddos + benign, 2);
        let mut labels = Vec::new();
        for i in 0..ddos {
            features.push_row(&[i as f64, 100.0]);
            labels.push(Some(ClassLabel::Ddos));
        }
        for i in 0..benign {
            features.push_row(&[i as f64, -100.0]);
            labels.push(Some(ClassLabel::NotDdos));
        }
        Dataset::new(vec!["x".into(), "y".into()], features, labels)
    }

    #[test]
    fn undersample_keeps_rounded_count_and_order() {
        let ds = toy_dataset(600, 50);
        let out = random_undersample(&ds, ClassLabel::Ddos, 0.2, 7).unwrap();
        assert_eq!(out.class_count(ClassLabel::Ddos), 120);
        assert_eq!(out.class_count(ClassLabel::NotDdos), 50);
        // Row order is preserved: x values of surviving DDoS rows ascend.
        let xs: Vec<f64> = out
            .labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Some(ClassLabel::Ddos))
            .map(|(i, _)| out.row(i)[0])
            .collect();
        let mut sorted = xs.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(xs, sorted);
        // Same seed, same result.
        let again = random_undersample(&ds, ClassLabel::Ddos, 0.2, 7).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn smote_appends_convex_combinations() {
        let ds = toy_dataset(5, 40);
        let out = smote(&ds, ClassLabel::Ddos, 5, 100, 3).unwrap();
        assert_eq!(out.class_count(ClassLabel::Ddos), 100);
        assert_eq!(out.n_rows(), 140);
        // Originals untouched.
        for i in 0..45 {
            assert_eq!(out.row(i), ds.row(i));
        }
        // Synthetics lie inside the minority bounding box [0,4] x {100}.
        for i in 45..out.n_rows() {
            assert_eq!(out.labels[i], Some(ClassLabel::Ddos));
            let r = out.row(i);
            assert!(r[0] >= 0.0 && r[0] <= 4.0, "x out of hull: {}", r[0]);
            assert_eq!(r[1], 100.0);
        }
    }

    #[test]
    fn smote_needs_two_minority_rows() {
        let ds = toy_dataset(1, 10);
        assert!(matches!(
            smote(&ds, ClassLabel::Ddos, 5, 10, 3),
            Err(DataError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn near_miss_keeps_rows_closest_to_minority() {
        // Majority DDoS at x = 0..9 with y=0; minority cluster at x=20, y=0.
        let mut features = Matrix::with_capacity(13, 2);
        let mut labels = Vec::new();
        for i in 0..10 {
            features.push_row(&[i as f64, 0.0]);
            labels.push(Some(ClassLabel::Ddos));
        }
        for i in 0..3 {
            features.push_row(&[20.0 + i as f64, 0.0]);
            labels.push(Some(ClassLabel::NotDdos));
        }
        let ds = Dataset::new(vec!["x".into(), "y".into()], features, labels);
        let out = near_miss(&ds, ClassLabel::Ddos, 4).unwrap();
        assert_eq!(out.class_count(ClassLabel::Ddos), 4);
        assert_eq!(out.class_count(ClassLabel::NotDdos), 3);
        // The four closest to the minority cluster are x = 6..9.
        let xs: Vec<f64> = out
            .labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Some(ClassLabel::Ddos))
            .map(|(i, _)| out.row(i)[0])
            .collect();
        assert_eq!(xs, vec![6.0, 7.0, 8.0, 9.0]);
    }

    #[test]
    fn near_miss_rejects_oversized_target() {
        let ds = toy_dataset(5, 3);
        assert!(matches!(
            near_miss(&ds, ClassLabel::Ddos, 6),
            Err(DataError::TargetTooLarge { .. })
        ));
    }

    #[test]
    fn kfold_is_a_partition_with_balanced_strata() {
        let ds = toy_dataset(650, 350);
        let plan = stratified_kfold(&ds, 10, 11).unwrap();
        assert_eq!(plan.assignments.len(), 1000);
        for fold in 0..10 {
            let test = plan.test_indices(fold);
            let ddos = test.iter().filter(|&&i| ds.labels[i] == Some(ClassLabel::Ddos)).count();
            assert_eq!(ddos, 65);
            assert_eq!(test.len(), 100);
            let train = plan.train_indices(fold);
            assert_eq!(train.len() + test.len(), 1000);
            let mut all: Vec<usize> = train.into_iter().chain(test).collect();
            all.sort_unstable();
            assert_eq!(all, (0..1000).collect::<Vec<_>>());
        }
    }

    #[test]
    fn kfold_rejects_small_classes() {
        let ds = toy_dataset(7, 100);
        assert!(matches!(
            stratified_kfold(&ds, 10, 1),
            Err(DataError::ClassTooSmall { have: 7, .. })
        ));
    }

    #[test]
    fn merge_union_imputes_missing_columns() {
        let a = Dataset::new(
            vec!["a".into(), "b".into()],
            Matrix::from_rows(&[vec![1.0, 10.0], vec![3.0, 30.0]]),
            vec![Some(ClassLabel::Ddos), Some(ClassLabel::Ddos)],
        );
        let b = Dataset::new(
            vec!["b".into(), "c".into()],
            Matrix::from_rows(&[vec![50.0, 7.0]]),
            vec![Some(ClassLabel::NotDdos)],
        );
        let merged = merge_union(&[&a, &b]).unwrap();
        assert_eq!(merged.column_names, vec!["a", "b", "c"]);
        assert_eq!(merged.n_rows(), 3);
        // Row 2 has no `a`: median of {1,3} = 2. Rows 0/1 have no `c`: median 7.
        assert_eq!(merged.row(2)[0], 2.0);
        assert_eq!(merged.row(0)[2], 7.0);
        assert_eq!(merged.row(2)[1], 50.0);
    }

    #[test]
    fn rebalance_hits_requested_fraction() {
        let ds = toy_dataset(900, 200);
        let out = rebalance_to_fraction(&ds, 0.6, 5).unwrap();
        assert_eq!(out.class_count(ClassLabel::Ddos), 300);
        assert_eq!(out.class_count(ClassLabel::NotDdos), 200);
    }
}
