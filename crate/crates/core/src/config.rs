//! Layered run configuration: TOML file, then `TWINGUARD_*` environment
//! overrides, then whatever flags the front end applies on top. Every table
//! key can be overridden; `__` separates path segments in variable names
//! (`TWINGUARD_RUN__ROWS_PER_TICK=4`).

use crate::autofs::AutoFsConfig;
use crate::data::{ClassLabel, LabelMapping};
use crate::detector::ThresholdConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const ENV_PREFIX: &str = "TWINGUARD_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
    #[error("referenced file does not exist: {0}")]
    MissingFile(PathBuf),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    /// Master seed; every stage derives its own stream from it.
    pub seed: u64,
    /// All artifacts land under this directory with stable names.
    pub out: PathBuf,
    pub prepare: PrepareSection,
    pub run: RunSection,
    pub bench: BenchSection,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            seed: 7,
            out: PathBuf::from("out"),
            prepare: PrepareSection::default(),
            run: RunSection::default(),
            bench: BenchSection::default(),
        }
    }
}

/// How one source CSV maps its label strings onto classes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelSpec {
    pub column: String,
    pub ddos: Vec<String>,
    pub not_ddos: Vec<String>,
    /// Values mapped to "row has no class" instead of an error.
    pub unlabeled: Vec<String>,
}

impl Default for LabelSpec {
    fn default() -> Self {
        LabelSpec {
            column: "Label".into(),
            ddos: vec!["DDoS".into()],
            not_ddos: vec!["BENIGN".into()],
            unlabeled: Vec::new(),
        }
    }
}

impl LabelSpec {
    pub fn mapping(&self) -> LabelMapping {
        let mut m = LabelMapping::new();
        for v in &self.ddos {
            m = m.with(v, Some(ClassLabel::Ddos));
        }
        for v in &self.not_ddos {
            m = m.with(v, Some(ClassLabel::NotDdos));
        }
        for v in &self.unlabeled {
            m = m.with(v, None);
        }
        m
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepareSection {
    pub d1: PathBuf,
    pub d2: PathBuf,
    pub d1_labels: LabelSpec,
    pub d2_labels: LabelSpec,
    /// Per-source row cap before the recipes run.
    pub row_cap: Option<usize>,
    /// Final DDoS share of the merged file.
    pub ddos_fraction: Option<f64>,
}

impl Default for PrepareSection {
    fn default() -> Self {
        PrepareSection {
            d1: PathBuf::from("d1.csv"),
            d2: PathBuf::from("d2.csv"),
            d1_labels: LabelSpec::default(),
            d2_labels: LabelSpec {
                column: "type".into(),
                ddos: vec!["ddos".into()],
                not_ddos: vec!["normal".into()],
                unlabeled: Vec::new(),
            },
            row_cap: None,
            ddos_fraction: Some(0.6),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Prepared dataset (manifest source columns + label). Relative paths
    /// resolve against the output directory.
    pub dataset: PathBuf,
    pub router: String,
    pub ticks: u64,
    pub rows_per_tick: usize,
    /// Simulated-minute definition: 1 minute = this many ticks.
    pub ticks_per_minute: u64,
    /// Attack intervals in ticks, half-open.
    pub schedule: Vec<(u64, u64)>,
    /// Unlabeled rows sampled for the bootstrap selection window.
    pub bootstrap_rows: usize,
    /// Verdicts between metric evaluations.
    pub eval_every: usize,
    /// Score against replay ground truth instead of ensemble pseudo-labels.
    pub ground_truth_metrics: bool,
    /// Switch the stream to this dataset at `drift_at_tick`.
    pub drift_dataset: Option<PathBuf>,
    pub drift_at_tick: Option<u64>,
    pub thresholds: ThresholdConfig,
    pub autofs: AutoFsConfig,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            dataset: PathBuf::from("prepared.csv"),
            router: "core-rtr-1".into(),
            ticks: 700,
            rows_per_tick: 2,
            ticks_per_minute: 2,
            schedule: vec![(120, 580)],
            bootstrap_rows: 1000,
            eval_every: 200,
            ground_truth_metrics: false,
            drift_dataset: None,
            drift_at_tick: None,
            thresholds: ThresholdConfig::default(),
            autofs: AutoFsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    /// Labeled dataset supplying both the pool and the selection windows.
    /// Relative paths resolve against the output directory.
    pub dataset: PathBuf,
    pub seeds: usize,
    pub autofs: AutoFsConfig,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection { dataset: PathBuf::from("prepared.csv"), seeds: 5, autofs: AutoFsConfig::default() }
    }
}

impl AppConfig {
    /// Parses `path` (or starts from defaults) and applies environment
    /// overrides from the process environment.
    pub fn load(path: Option<&Path>) -> Result<AppConfig, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|source| ConfigError::Unreadable { path: p.to_path_buf(), source })?,
            None => String::new(),
        };
        AppConfig::from_toml_with_env(&text, std::env::vars())
    }

    pub fn from_toml_with_env(
        text: &str,
        vars: impl Iterator<Item = (String, String)>,
    ) -> Result<AppConfig, ConfigError> {
        let mut value: toml::Value = text.parse().map_err(ConfigError::Parse)?;
        apply_env_overrides(&mut value, vars);
        let cfg: AppConfig = value.try_into().map_err(ConfigError::Parse)?;
        cfg.validate_shape()?;
        Ok(cfg)
    }

    /// Structural checks that hold for every command. File existence is
    /// checked per command by the runner.
    fn validate_shape(&self) -> Result<(), ConfigError> {
        self.run.thresholds.validate().map_err(ConfigError::Invalid)?;
        if self.run.rows_per_tick == 0 || self.run.ticks == 0 {
            return Err(ConfigError::Invalid("run needs ticks >= 1 and rows_per_tick >= 1".into()));
        }
        if self.run.ticks_per_minute == 0 {
            return Err(ConfigError::Invalid("ticks_per_minute must be >= 1".into()));
        }
        if self.run.eval_every == 0 {
            return Err(ConfigError::Invalid("eval_every must be >= 1".into()));
        }
        if self.run.drift_dataset.is_some() != self.run.drift_at_tick.is_some() {
            return Err(ConfigError::Invalid(
                "drift_dataset and drift_at_tick must be set together".into(),
            ));
        }
        if self.bench.seeds == 0 {
            return Err(ConfigError::Invalid("bench.seeds must be >= 1".into()));
        }
        Ok(())
    }

    pub fn require_file(path: &Path) -> Result<(), ConfigError> {
        if path.is_file() {
            Ok(())
        } else {
            Err(ConfigError::MissingFile(path.to_path_buf()))
        }
    }
}

/// `TWINGUARD_A__B_C=v` sets key `b_c` in table `a`. Segment names are
/// lowercased; values parse as TOML scalars and fall back to strings.
pub fn apply_env_overrides(root: &mut toml::Value, vars: impl Iterator<Item = (String, String)>) {
    let mut overrides: Vec<(String, String)> = vars
        .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|rest| (rest.to_string(), v)))
        .collect();
    overrides.sort();
    for (key, raw) in overrides {
        let path: Vec<String> = key.split("__").map(|s| s.to_ascii_lowercase()).collect();
        if path.iter().any(|s| s.is_empty()) {
            continue;
        }
        let mut node = &mut *root;
        for seg in &path[..path.len() - 1] {
            let table = match node {
                toml::Value::Table(t) => t,
                _ => return,
            };
            node = table
                .entry(seg.clone())
                .or_insert_with(|| toml::Value::Table(toml::map::Map::new()));
        }
        if let toml::Value::Table(t) = node {
            t.insert(path[path.len() - 1].clone(), parse_env_value(&raw));
        }
    }
}

fn parse_env_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    if let Ok(toml::Value::Table(mut t)) = doc.parse::<toml::Value>() {
        if let Some(v) = t.remove("v") {
            return v;
        }
    }
    toml::Value::String(raw.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_env() -> impl Iterator<Item = (String, String)> {
        std::iter::empty()
    }

    #[test]
    fn empty_config_is_all_defaults() {
        let cfg = AppConfig::from_toml_with_env("", no_env()).unwrap();
        assert_eq!(cfg.run.schedule, vec![(120, 580)]);
        assert_eq!(cfg.run.thresholds.window, 2000);
        assert_eq!(cfg.prepare.d2_labels.column, "type");
    }

    #[test]
    fn toml_sections_override_defaults() {
        let cfg = AppConfig::from_toml_with_env(
            "seed = 11\n[run]\nticks = 42\nschedule = [[5, 9]]\n[run.thresholds]\naccuracy = 0.8\n",
            no_env(),
        )
        .unwrap();
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.run.ticks, 42);
        assert_eq!(cfg.run.schedule, vec![(5, 9)]);
        assert_eq!(cfg.run.thresholds.accuracy, 0.8);
        assert_eq!(cfg.run.thresholds.precision, 0.9);
    }

    #[test]
    fn env_overrides_beat_the_file() {
        let vars = vec![
            ("TWINGUARD_SEED".to_string(), "99".to_string()),
            ("TWINGUARD_RUN__ROWS_PER_TICK".to_string(), "4".to_string()),
            ("TWINGUARD_RUN__THRESHOLDS__ACCURACY".to_string(), "0.75".to_string()),
            ("TWINGUARD_RUN__ROUTER".to_string(), "edge-rtr-9".to_string()),
            ("UNRELATED".to_string(), "ignored".to_string()),
        ];
        let cfg = AppConfig::from_toml_with_env("seed = 1\n", vars.into_iter()).unwrap();
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.run.rows_per_tick, 4);
        assert_eq!(cfg.run.thresholds.accuracy, 0.75);
        // Unquoted strings fall back to plain strings.
        assert_eq!(cfg.run.router, "edge-rtr-9");
    }

    #[test]
    fn bad_shapes_are_rejected() {
        assert!(AppConfig::from_toml_with_env("[run]\nticks = 0\n", no_env()).is_err());
        assert!(AppConfig::from_toml_with_env(
            "[run]\ndrift_at_tick = 5\n",
            no_env()
        )
        .is_err());
        assert!(AppConfig::from_toml_with_env("[run]\nmystery = 1\n", no_env()).is_err());
        assert!(AppConfig::from_toml_with_env(
            "[run.thresholds]\nwindow = 10\nmin_window = 50\n",
            no_env()
        )
        .is_err());
    }
}
