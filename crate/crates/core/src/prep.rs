//! Dataset preparation recipes: per-source rebalancing, column-union merge,
//! and projection onto the manifest's source columns so prepared rows line up
//! with the sensor layout the twins replay.

use crate::data::{
    merge_union, near_miss, random_undersample, rebalance_to_fraction, smote, ClassLabel,
    DataError, Dataset,
};
use crate::matrix::Matrix;
use crate::yang::KpiManifest;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Share of the over-represented DDoS class kept by the first recipe.
pub const D1_KEEP_FRACTION: f64 = 0.2;
pub const SMOTE_NEIGHBORS: usize = 5;

#[derive(Debug, Error)]
pub enum PrepError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("prepared sources lack manifest column {0:?}")]
    MissingSourceColumn(String),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ClassCounts {
    pub rows: usize,
    pub ddos: usize,
    pub not_ddos: usize,
}

impl ClassCounts {
    pub fn of(ds: &Dataset) -> ClassCounts {
        ClassCounts {
            rows: ds.n_rows(),
            ddos: ds.class_count(ClassLabel::Ddos),
            not_ddos: ds.class_count(ClassLabel::NotDdos),
        }
    }

    /// Majority-over-minority count; infinite when a class is absent.
    pub fn imbalance_ratio(&self) -> f64 {
        let hi = self.ddos.max(self.not_ddos) as f64;
        let lo = self.ddos.min(self.not_ddos) as f64;
        hi / lo
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SourceStats {
    pub loaded: ClassCounts,
    pub prepared: ClassCounts,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrepStats {
    pub d1: SourceStats,
    pub d2: SourceStats,
    pub merged: ClassCounts,
    pub imbalance_ratio: f64,
    pub columns: usize,
}

#[derive(Debug, Clone)]
pub struct PrepOptions {
    /// Seeded per-source row cap applied before any recipe.
    pub row_cap: Option<usize>,
    /// Final DDoS share of the merged set; `None` keeps the recipes' balance.
    pub ddos_fraction: Option<f64>,
    pub seed: u64,
}

impl Default for PrepOptions {
    fn default() -> Self {
        PrepOptions { row_cap: None, ddos_fraction: Some(0.6), seed: 0 }
    }
}

/// Uniform seeded subsample without replacement; a cap at or above the row
/// count is a no-op.
pub fn cap_rows(ds: &Dataset, cap: usize, seed: u64) -> Dataset {
    if ds.n_rows() <= cap {
        return ds.clone();
    }
    let mut idx: Vec<usize> = (0..ds.n_rows()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(cap);
    idx.sort_unstable();
    ds.select_rows(&idx)
}

/// First capture: the DDoS class dwarfs the benign one, so keep a fifth of
/// it and synthesize benign rows up to parity.
pub fn prepare_d1(ds: &Dataset, seed: u64) -> Result<Dataset, DataError> {
    let thinned = random_undersample(ds, ClassLabel::Ddos, D1_KEEP_FRACTION, seed)?;
    let ddos_after = thinned.class_count(ClassLabel::Ddos);
    let target = ddos_after.max(thinned.class_count(ClassLabel::NotDdos));
    smote(&thinned, ClassLabel::NotDdos, SMOTE_NEIGHBORS, target, seed)
}

/// Second capture: near-miss keeps the DDoS rows closest to the benign
/// frontier. Already-balanced input passes through untouched.
pub fn prepare_d2(ds: &Dataset) -> Result<Dataset, DataError> {
    let ddos = ds.class_count(ClassLabel::Ddos);
    let benign = ds.class_count(ClassLabel::NotDdos);
    if ddos <= benign {
        return Ok(ds.clone());
    }
    near_miss(ds, ClassLabel::Ddos, benign)
}

/// Both recipes, a column-union merge, and projection onto the manifest's
/// source columns in sensor order.
pub fn prepare_merged(
    d1_raw: &Dataset,
    d2_raw: &Dataset,
    manifest: &KpiManifest,
    opts: &PrepOptions,
) -> Result<(Dataset, PrepStats), PrepError> {
    let (d1_raw, d2_raw) = match opts.row_cap {
        Some(cap) => (cap_rows(d1_raw, cap, opts.seed), cap_rows(d2_raw, cap, opts.seed ^ 1)),
        None => (d1_raw.clone(), d2_raw.clone()),
    };
    let d1 = prepare_d1(&d1_raw, opts.seed)?;
    let d2 = prepare_d2(&d2_raw)?;
    let merged = merge_union(&[&d1, &d2])?;
    let merged = match opts.ddos_fraction {
        Some(f) => rebalance_to_fraction(&merged, f, opts.seed)?,
        None => merged,
    };

    let cols = manifest
        .sensors()
        .iter()
        .map(|s| {
            merged
                .column_index(&s.source_column)
                .ok_or_else(|| PrepError::MissingSourceColumn(s.source_column.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let names: Vec<String> = manifest.sensors().iter().map(|s| s.source_column.clone()).collect();
    let mut features = Matrix::with_capacity(merged.n_rows(), cols.len());
    let mut buf = vec![0.0; cols.len()];
    for i in 0..merged.n_rows() {
        let row = merged.row(i);
        for (b, &c) in buf.iter_mut().zip(&cols) {
            *b = row[c];
        }
        features.push_row(&buf);
    }
    let projected = Dataset::new(names, features, merged.labels().to_vec());

    let stats = PrepStats {
        d1: SourceStats { loaded: ClassCounts::of(&d1_raw), prepared: ClassCounts::of(&d1) },
        d2: SourceStats { loaded: ClassCounts::of(&d2_raw), prepared: ClassCounts::of(&d2) },
        merged: ClassCounts::of(&projected),
        imbalance_ratio: ClassCounts::of(&projected).imbalance_ratio(),
        columns: projected.n_cols(),
    };
    Ok((projected, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{load_csv_str, LabelMapping};
    use crate::synth::{mini_d1_csv, mini_d2_csv};
    use crate::yang::{default_manifest, TOTAL_SENSORS};

    fn d1_fixture(n_ddos: usize, n_benign: usize) -> Dataset {
        let mapping = LabelMapping::new()
            .with("DDoS", Some(ClassLabel::Ddos))
            .with("BENIGN", Some(ClassLabel::NotDdos));
        load_csv_str(&mini_d1_csv(n_ddos, n_benign, 9), "Label", &mapping).unwrap()
    }

    fn d2_fixture(n_ddos: usize, n_benign: usize) -> Dataset {
        let mapping = LabelMapping::new()
            .with("ddos", Some(ClassLabel::Ddos))
            .with("normal", Some(ClassLabel::NotDdos));
        load_csv_str(&mini_d2_csv(n_ddos, n_benign, 11), "type", &mapping).unwrap()
    }

    #[test]
    fn d1_recipe_balances_a_ddos_heavy_capture() {
        let out = prepare_d1(&d1_fixture(1000, 60), 3).unwrap();
        assert_eq!(out.class_count(ClassLabel::Ddos), 200);
        assert_eq!(out.class_count(ClassLabel::NotDdos), 200);
        // Originals survive resampling untouched; only synthetic rows append.
        assert_eq!(out.n_rows(), 400);
    }

    #[test]
    fn d2_recipe_keeps_frontier_ddos_rows() {
        let out = prepare_d2(&d2_fixture(300, 100)).unwrap();
        assert_eq!(out.class_count(ClassLabel::Ddos), 100);
        assert_eq!(out.class_count(ClassLabel::NotDdos), 100);

        let balanced = d2_fixture(80, 100);
        let untouched = prepare_d2(&balanced).unwrap();
        assert_eq!(untouched.n_rows(), balanced.n_rows());
    }

    #[test]
    fn merged_set_covers_the_manifest_and_stays_balanced() {
        let manifest = default_manifest();
        let opts = PrepOptions { seed: 5, ..PrepOptions::default() };
        let (merged, stats) =
            prepare_merged(&d1_fixture(1000, 60), &d2_fixture(300, 100), &manifest, &opts).unwrap();
        assert_eq!(merged.n_cols(), TOTAL_SENSORS);
        assert_eq!(stats.columns, TOTAL_SENSORS);
        for (i, s) in manifest.sensors().iter().enumerate() {
            assert_eq!(merged.column_names[i], s.source_column);
        }
        assert!(stats.imbalance_ratio <= 1.5, "ratio {}", stats.imbalance_ratio);
        // The 60/40 target: DDoS share within one row of 0.6.
        let share = stats.merged.ddos as f64 / stats.merged.rows as f64;
        assert!((share - 0.6).abs() < 0.01, "ddos share {share}");
        assert!(merged.features().data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn row_cap_limits_each_source() {
        let opts = PrepOptions { row_cap: Some(150), ddos_fraction: None, seed: 2 };
        let (_, stats) = prepare_merged(
            &d1_fixture(1000, 60),
            &d2_fixture(300, 100),
            &default_manifest(),
            &opts,
        )
        .unwrap();
        assert!(stats.d1.loaded.rows <= 150);
        assert!(stats.d2.loaded.rows <= 150);
    }

    #[test]
    fn preparation_is_deterministic() {
        let opts = PrepOptions { seed: 7, ..PrepOptions::default() };
        let run = || {
            let (ds, _) = prepare_merged(
                &d1_fixture(400, 50),
                &d2_fixture(200, 80),
                &default_manifest(),
                &opts,
            )
            .unwrap();
            ds
        };
        let a = run();
        let b = run();
        assert_eq!(a.features(), b.features());
        assert_eq!(a.labels(), b.labels());
    }
}
