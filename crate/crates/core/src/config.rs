//! `key = value` settings file covering every tunable default.

use std::fmt::Write as _;
use std::path::Path;

use crate::cluster;
use crate::error::{Error, Result};
use crate::eval;
use crate::learn::{self, BatchMode, TuneConfig};
use crate::rules::{Defuzzifier, OutputMode};

/// Number of clusters to extract: chosen by the validity scan, or fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterCount {
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub seed: u64,

    pub corr_threshold: f64,
    pub label_column: String,
    pub positive_label: String,
    pub negative_label: String,

    pub clusters: ClusterCount,
    pub c_max: usize,
    pub fuzziness: f64,
    pub cluster_tolerance: f64,
    pub cluster_max_iter: usize,
    pub use_gk: bool,
    pub gk_regularization: f64,
    /// FCM restarts per candidate in the cluster-count scan.
    pub scan_restarts: usize,
    /// Rows sampled for the scan; 0 uses the whole training set.
    pub scan_sample: usize,

    pub learning_rate: f64,
    pub epochs: usize,
    pub batch: BatchMode,
    pub patience: usize,
    pub spread: f64,
    pub type1_only: bool,

    pub output_mode: OutputMode,
    pub aggregate_resolution: usize,

    pub train_ratio: f64,
    pub stratified: bool,
    pub knn_k: usize,
}

impl Default for Settings {
    fn default() -> Self {
        let pre = crate::data::PreprocessConfig::default();
        let tune = TuneConfig::default();
        Settings {
            seed: 0,
            corr_threshold: pre.corr_threshold,
            label_column: pre.label_column,
            positive_label: pre.positive_label,
            negative_label: pre.negative_label,
            clusters: ClusterCount::Auto,
            c_max: cluster::C_MAX,
            fuzziness: cluster::FUZZINESS,
            cluster_tolerance: cluster::TOLERANCE,
            cluster_max_iter: cluster::MAX_ITER,
            use_gk: true,
            gk_regularization: cluster::GK_REGULARIZATION,
            scan_restarts: 5,
            scan_sample: 5000,
            learning_rate: tune.learning_rate,
            epochs: tune.epochs,
            batch: tune.batch,
            patience: tune.patience,
            spread: learn::SPREAD,
            type1_only: false,
            output_mode: OutputMode::CenterOfSets,
            aggregate_resolution: 201,
            train_ratio: eval::TRAIN_RATIO,
            stratified: true,
            knn_k: eval::KNN_K,
        }
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

impl Settings {
    pub fn load(path: impl AsRef<Path>) -> Result<Settings> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Settings::parse(&text)
    }

    /// Defaults overridden by the lines of `text`.
    pub fn parse(text: &str) -> Result<Settings> {
        let mut s = Settings::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            s.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        s.validate()?;
        Ok(s)
    }

    /// Sets one field from its text form.
    pub fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("{key}: cannot parse {v:?}"))
        }
        let flag = |v: &str| parse_bool(v).ok_or_else(|| format!("{key}: expected true or false, got {v:?}"));
        match key {
            "seed" => self.seed = num(key, v)?,
            "corr_threshold" => self.corr_threshold = num(key, v)?,
            "label_column" => self.label_column = v.to_owned(),
            "positive_label" => self.positive_label = v.to_owned(),
            "negative_label" => self.negative_label = v.to_owned(),
            "clusters" => {
                self.clusters = if v == "auto" {
                    ClusterCount::Auto
                } else {
                    ClusterCount::Fixed(num(key, v)?)
                }
            }
            "c_max" => self.c_max = num(key, v)?,
            "fuzziness" => self.fuzziness = num(key, v)?,
            "cluster_tolerance" => self.cluster_tolerance = num(key, v)?,
            "cluster_max_iter" => self.cluster_max_iter = num(key, v)?,
            "use_gk" => self.use_gk = flag(v)?,
            "gk_regularization" => self.gk_regularization = num(key, v)?,
            "scan_restarts" => self.scan_restarts = num(key, v)?,
            "scan_sample" => self.scan_sample = num(key, v)?,
            "learning_rate" => self.learning_rate = num(key, v)?,
            "epochs" => self.epochs = num(key, v)?,
            "batch" => {
                self.batch = match v {
                    "full" => BatchMode::Full,
                    "per-sample" => BatchMode::PerSample,
                    _ => return Err(format!("batch: expected full or per-sample, got {v:?}")),
                }
            }
            "patience" => self.patience = num(key, v)?,
            "spread" => self.spread = num(key, v)?,
            "type1_only" => self.type1_only = flag(v)?,
            "output_mode" => {
                self.output_mode = if v == "center-of-sets" {
                    OutputMode::CenterOfSets
                } else {
                    v.strip_prefix("aggregate ")
                        .and_then(Defuzzifier::parse)
                        .map(OutputMode::Aggregate)
                        .ok_or_else(|| format!("output_mode: cannot parse {v:?}"))?
                }
            }
            "aggregate_resolution" => self.aggregate_resolution = num(key, v)?,
            "train_ratio" => self.train_ratio = num(key, v)?,
            "stratified" => self.stratified = flag(v)?,
            "knn_k" => self.knn_k = num(key, v)?,
            _ => return Err(format!("unknown setting {key:?}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.corr_threshold > 0.0 && self.corr_threshold <= 1.0) {
            return fail(format!("corr_threshold must lie in (0, 1], got {}", self.corr_threshold));
        }
        if !(self.fuzziness > 1.0) {
            return fail(format!("fuzziness must exceed 1, got {}", self.fuzziness));
        }
        if self.clusters == ClusterCount::Fixed(0) {
            return fail("clusters must be at least 1".into());
        }
        if self.clusters == ClusterCount::Auto && self.c_max < 2 {
            return fail(format!("c_max must be at least 2, got {}", self.c_max));
        }
        if self.scan_restarts == 0 {
            return fail("scan_restarts must be at least 1".into());
        }
        if !(self.learning_rate > 0.0) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.spread) {
            return fail(format!("spread must lie in [0, 1), got {}", self.spread));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return fail(format!("train_ratio must lie in (0, 1), got {}", self.train_ratio));
        }
        if self.knn_k == 0 {
            return fail("knn_k must be at least 1".into());
        }
        if self.aggregate_resolution < 2 {
            return fail("aggregate_resolution must be at least 2".into());
        }
        Ok(())
    }

    /// Every setting, one per line, in a form [`Settings::parse`] reads back.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("corr_threshold", self.corr_threshold.to_string());
        kv("label_column", self.label_column.clone());
        kv("positive_label", self.positive_label.clone());
        kv("negative_label", self.negative_label.clone());
        kv(
            "clusters",
            match self.clusters {
                ClusterCount::Auto => "auto".into(),
                ClusterCount::Fixed(c) => c.to_string(),
            },
        );
        kv("c_max", self.c_max.to_string());
        kv("fuzziness", self.fuzziness.to_string());
        kv("cluster_tolerance", self.cluster_tolerance.to_string());
        kv("cluster_max_iter", self.cluster_max_iter.to_string());
        kv("use_gk", self.use_gk.to_string());
        kv("gk_regularization", self.gk_regularization.to_string());
        kv("scan_restarts", self.scan_restarts.to_string());
        kv("scan_sample", self.scan_sample.to_string());
        kv("learning_rate", self.learning_rate.to_string());
        kv("epochs", self.epochs.to_string());
        kv(
            "batch",
            match self.batch {
                BatchMode::Full => "full".into(),
                BatchMode::PerSample => "per-sample".into(),
            },
        );
        kv("patience", self.patience.to_string());
        kv("spread", self.spread.to_string());
        kv("type1_only", self.type1_only.to_string());
        kv(
            "output_mode",
            match self.output_mode {
                OutputMode::CenterOfSets => "center-of-sets".into(),
                OutputMode::Aggregate(d) => format!("aggregate {d}"),
            },
        );
        kv("aggregate_resolution", self.aggregate_resolution.to_string());
        kv("train_ratio", self.train_ratio.to_string());
        kv("stratified", self.stratified.to_string());
        kv("knn_k", self.knn_k.to_string());
        s
    }

    pub fn preprocess_config(&self) -> crate::data::PreprocessConfig {
        crate::data::PreprocessConfig {
            corr_threshold: self.corr_threshold,
            label_column: self.label_column.clone(),
            positive_label: self.positive_label.clone(),
            negative_label: self.negative_label.clone(),
            ..Default::default()
        }
    }

    pub fn tune_config(&self) -> TuneConfig {
        TuneConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch: self.batch,
            patience: self.patience,
            seed: self.seed,
        }
    }
}
