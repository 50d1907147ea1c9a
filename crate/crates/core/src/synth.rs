//! Seeded synthetic traffic generators for tests, benches, and demo runs.
//!
//! Two dataset families mimic the shape of real capture exports: `mini_d1`
//! (85 columns, DDoS-heavy, messy cells) and `mini_d2` (43 columns, different
//! label vocabulary). They overlap on channels ch075..ch084, which carry all
//! of the class signal, so a merged dataset keeps its informative columns.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{ClassLabel, Dataset};
use crate::matrix::Matrix;

/// Channel column naming shared by generators and fixtures: `ch000`, `ch001`, ...
pub fn chan_name(i: usize) -> String {
    format!("ch{i:03}")
}

/// Global channel indices that carry class signal in the mini datasets.
pub const SIGNAL_CHANNELS: std::ops::Range<usize> = 75..85;

/// Mean shift applied to signal channels for DDoS rows.
pub const SIGNAL_SEPARATION: f64 = 2.5;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Two diagonal Gaussians in `d` dims: NotDDoS at 0, DDoS at `separation` on
/// every axis, unit variance, seeded row order.
pub fn two_gaussians(
    n: usize,
    d: usize,
    ddos_fraction: f64,
    separation: f64,
    seed: u64,
) -> (Matrix, Vec<ClassLabel>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_ddos = (n as f64 * ddos_fraction).round() as usize;
    let mut x = Matrix::with_capacity(n, d);
    let mut y = Vec::with_capacity(n);
    let mut buf = vec![0.0; d];
    for i in 0..n {
        let is_ddos = i < n_ddos;
        let mean = if is_ddos { separation } else { 0.0 };
        for v in buf.iter_mut() {
            *v = mean + normal(&mut rng);
        }
        x.push_row(&buf);
        y.push(if is_ddos { ClassLabel::Ddos } else { ClassLabel::NotDdos });
    }
    shuffle_rows(&mut x, &mut y, &mut rng);
    (x, y)
}

fn shuffle_rows(x: &mut Matrix, y: &mut Vec<ClassLabel>, rng: &mut ChaCha8Rng) {
    let n = x.rows();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        if i != j {
            y.swap(i, j);
            for c in 0..x.cols() {
                let (a, b) = (x.get(i, c), x.get(j, c));
                x.set(i, c, b);
                x.set(j, c, a);
            }
        }
    }
}

/// Labeled dataset where only `informative` columns separate the classes.
/// Noise columns are N(base_j, 1) with a per-column base offset so columns
/// are not interchangeable.
pub fn signal_dataset(
    n_ddos: usize,
    n_benign: usize,
    n_cols: usize,
    informative: &[usize],
    separation: f64,
    seed: u64,
) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_ddos + n_benign;
    let mut x = Matrix::with_capacity(n, n_cols);
    let mut y = Vec::with_capacity(n);
    let mut buf = vec![0.0; n_cols];
    for i in 0..n {
        let is_ddos = i < n_ddos;
        for (j, v) in buf.iter_mut().enumerate() {
            let base = (j % 7) as f64 * 3.0;
            let shift = if is_ddos && informative.contains(&j) { separation } else { 0.0 };
            *v = base + shift + normal(&mut rng);
        }
        x.push_row(&buf);
        y.push(if is_ddos { ClassLabel::Ddos } else { ClassLabel::NotDdos });
    }
    let mut labels: Vec<ClassLabel> = y;
    shuffle_rows(&mut x, &mut labels, &mut rng);
    let names = (0..n_cols).map(chan_name).collect();
    Dataset::new(names, x, labels.into_iter().map(Some).collect())
}

/// Dataset over the 92 replay channels with signal in the given channels.
/// Used for regime-shift fixtures: phase A and phase B use disjoint signal
/// channel sets so a model fit on one regime is blind to the other.
pub fn regime_dataset(n_ddos: usize, n_benign: usize, signal: &[usize], seed: u64) -> Dataset {
    signal_dataset(n_ddos, n_benign, 92, signal, SIGNAL_SEPARATION, seed)
}

fn push_cell(out: &mut String, rng: &mut ChaCha8Rng, value: f64, messy: bool) {
    if messy {
        let roll: f64 = rng.gen();
        if roll < 0.004 {
            out.push_str("Infinity");
            return;
        } else if roll < 0.008 {
            // Blank cell; loader imputes the column median.
            return;
        }
    }
    out.push_str(&format!("{value:.6}"));
}

fn capture_csv(
    cols: std::ops::Range<usize>,
    n_ddos: usize,
    n_benign: usize,
    ddos_label: &str,
    benign_label: &str,
    label_column: &str,
    messy: bool,
    seed: u64,
) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = cols.end - cols.start;
    let mut rows: Vec<(bool, Vec<usize>)> = Vec::new();
    for i in 0..(n_ddos + n_benign) {
        rows.push((i < n_ddos, Vec::new()));
    }
    // Seeded interleave so class blocks don't survive into the file.
    for i in (1..rows.len()).rev() {
        let j = rng.gen_range(0..=i);
        rows.swap(i, j);
    }
    let mut out = String::new();
    for c in cols.clone() {
        out.push_str(&chan_name(c));
        out.push(',');
    }
    out.push_str(label_column);
    out.push('\n');
    let mut buf = vec![0.0; width];
    for (is_ddos, _) in rows {
        for (k, c) in cols.clone().enumerate() {
            let base = (c % 7) as f64 * 3.0;
            let shift = if is_ddos && SIGNAL_CHANNELS.contains(&c) { SIGNAL_SEPARATION } else { 0.0 };
            buf[k] = base + shift + normal(&mut rng);
        }
        for v in &buf {
            push_cell(&mut out, &mut rng, *v, messy);
            out.push(',');
        }
        out.push_str(if is_ddos { ddos_label } else { benign_label });
        out.push('\n');
    }
    out
}

/// Synthetic capture export #1: channels ch000..ch084, labels `DDoS`/`BENIGN`,
/// with occasional `Infinity` and blank cells like real capture dumps.
pub fn mini_d1_csv(n_ddos: usize, n_benign: usize, seed: u64) -> String {
    capture_csv(0..85, n_ddos, n_benign, "DDoS", "BENIGN", "Label", true, seed)
}

/// Synthetic capture export #2: channels ch075..ch117, labels `ddos`/`normal`.
pub fn mini_d2_csv(n_ddos: usize, n_benign: usize, seed: u64) -> String {
    capture_csv(75..118, n_ddos, n_benign, "ddos", "normal", "type", false, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{load_csv_str, LabelMapping};

    #[test]
    fn two_gaussians_is_deterministic_and_balanced() {
        let (x, y) = two_gaussians(100, 10, 0.65, 3.0, 42);
        let (x2, y2) = two_gaussians(100, 10, 0.65, 3.0, 42);
        assert_eq!(x, x2);
        assert_eq!(y, y2);
        assert_eq!(y.iter().filter(|l| **l == ClassLabel::Ddos).count(), 65);
        assert_eq!(x.rows(), 100);
        assert_eq!(x.cols(), 10);
    }

    #[test]
    fn mini_d1_loads_with_messy_cells() {
        let csv = mini_d1_csv(120, 80, 9);
        let mapping = LabelMapping::new()
            .with("DDoS", Some(ClassLabel::Ddos))
            .with("BENIGN", Some(ClassLabel::NotDdos));
        let ds = load_csv_str(&csv, "Label", &mapping).unwrap();
        assert_eq!(ds.n_rows(), 200);
        assert_eq!(ds.n_cols(), 85);
        assert_eq!(ds.class_count(ClassLabel::Ddos), 120);
        // Imputation leaves no non-finite cells behind.
        assert!(ds.features().data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn d1_and_d2_overlap_on_signal_channels() {
        let csv = mini_d2_csv(50, 50, 9);
        let mapping = LabelMapping::new()
            .with("ddos", Some(ClassLabel::Ddos))
            .with("normal", Some(ClassLabel::NotDdos));
        let ds = load_csv_str(&csv, "type", &mapping).unwrap();
        for c in SIGNAL_CHANNELS {
            assert!(ds.column_index(&chan_name(c)).is_some(), "missing {}", chan_name(c));
        }
    }

    #[test]
    fn signal_dataset_separates_only_informative_columns() {
        let ds = signal_dataset(400, 400, 20, &[3, 7], 2.5, 5);
        let split_mean = |col: usize, class: ClassLabel| {
            let idx = ds.class_indices(class);
            idx.iter().map(|&i| ds.row(i)[col]).sum::<f64>() / idx.len() as f64
        };
        let gap_sig = split_mean(3, ClassLabel::Ddos) - split_mean(3, ClassLabel::NotDdos);
        let gap_noise = split_mean(5, ClassLabel::Ddos) - split_mean(5, ClassLabel::NotDdos);
        assert!(gap_sig > 2.0, "signal gap {gap_sig}");
        assert!(gap_noise.abs() < 0.5, "noise gap {gap_noise}");
    }
}
