//! End-to-end training: load, clean, split, choose the rule count, extract,
//! tune the type-1 base, widen, tune again and calibrate the threshold.

use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cluster::{self, ValidityScan};
use crate::config::{ClusterCount, Settings};
use crate::data::{self, Dataset, PreprocessReport};
use crate::error::Error;
use crate::eval::{self, Split};
use crate::learn::{self, ExtractConfig, TuneTrace};
use crate::model::ModelFile;
use crate::rules::RuleBase;

/// Error from one named training stage.
#[derive(Debug, Error)]
#[error("{stage}: {source}")]
pub struct StageError {
    pub stage: &'static str,
    #[source]
    pub source: Error,
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, StageError>;
}

impl<T> Stage<T> for crate::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelFile,
    pub split: Split,
    pub scan: Option<ValidityScan>,
    pub used_gk: bool,
    pub gk_fallback: Option<String>,
    pub t1_trace: TuneTrace,
    pub it2_trace: Option<TuneTrace>,
}

impl TrainOutcome {
    pub fn rule_base(&self) -> &RuleBase {
        &self.model.rule_base
    }

    /// Per-epoch errors and digests, one line each.
    pub fn trace_log(&self) -> String {
        let mut out = String::from("phase,epoch,error,digest\n");
        let phases = [("type-1", Some(&self.t1_trace)), ("interval-type-2", self.it2_trace.as_ref())];
        for (name, trace) in phases {
            let Some(t) = trace else { continue };
            for (e, (err, dig)) in t.errors.iter().zip(&t.digests).enumerate() {
                out.push_str(&format!("{name},{e},{err},{dig}\n"));
            }
        }
        out
    }
}

/// Loads and cleans a CSV file.
pub fn load_dataset(path: &Path, settings: &Settings) -> Result<(Dataset, PreprocessReport), StageError> {
    let raw = data::load_csv(path).stage("load_csv")?;
    data::preprocess(&raw, &settings.preprocess_config()).stage("preprocess")
}

pub fn train_file(path: &Path, settings: &Settings) -> Result<TrainOutcome, StageError> {
    let (dataset, _) = load_dataset(path, settings)?;
    train(&dataset, settings)
}

/// Trains on the training side of a seeded split of `dataset`.
pub fn train(dataset: &Dataset, settings: &Settings) -> Result<TrainOutcome, StageError> {
    settings.validate().stage("config")?;
    let split = eval::split(dataset, settings.train_ratio, settings.seed, settings.stratified).stage("split")?;
    let (train_set, _) = split.apply(dataset);

    let (clusters, scan) = match settings.clusters {
        ClusterCount::Fixed(c) => (c, None),
        ClusterCount::Auto => {
            let z = learn::joint_space(&train_set);
            let z = if settings.scan_sample > 0 && settings.scan_sample < z.rows() {
                let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
                let mut idx = sample(&mut rng, z.rows(), settings.scan_sample).into_vec();
                idx.sort_unstable();
                z.select_rows(&idx)
            } else {
                z
            };
            let seeds: Vec<u64> = (0..settings.scan_restarts as u64).map(|k| settings.seed + k).collect();
            let c_max = settings.c_max.min(z.rows());
            let scan = cluster::select_cluster_count(&z, c_max, settings.fuzziness, &seeds)
                .stage("select_cluster_count")?;
            (scan.selected, Some(scan))
        }
    };

    let extraction = learn::extract_rules_with(
        &train_set,
        &ExtractConfig {
            clusters,
            fuzziness: settings.fuzziness,
            seed: settings.seed,
            tol: settings.cluster_tolerance,
            max_iter: settings.cluster_max_iter,
            use_gk: settings.use_gk,
            gk_regularization: settings.gk_regularization,
        },
    )
    .stage("extract_rules")?;

    let tune = settings.tune_config();
    let (t1, t1_trace) = learn::tune_t1(&extraction.rule_base, &train_set, &tune).stage("tune_t1")?;
    let (mut rb, it2_trace) = if settings.type1_only {
        (t1, None)
    } else {
        let wide = learn::widen_to_it2(&t1, settings.spread).stage("widen_to_it2")?;
        let (it2, trace) = learn::tune_it2(&wide, &train_set, &tune).stage("tune_it2")?;
        (it2, Some(trace))
    };

    rb.config.output_mode = settings.output_mode;
    rb.config.aggregate_resolution = settings.aggregate_resolution;
    rb.config.fallback_label = eval::majority_class(train_set.labels());
    rb.config.threshold = eval::calibrate_threshold(&rb, &train_set).stage("calibrate_threshold")?;

    let model = ModelFile::new(rb)
        .with_provenance("seed", settings.seed)
        .with_provenance("split.ratio", settings.train_ratio)
        .with_provenance("split.stratified", settings.stratified)
        .with_provenance("train_rows", train_set.n_samples())
        .with_provenance("clusters", clusters)
        .with_provenance("cluster_method", if extraction.used_gk { "gustafson-kessel" } else { "fuzzy-c-means" })
        .with_provenance("fuzziness", settings.fuzziness)
        .with_provenance("learning_rate", settings.learning_rate)
        .with_provenance("epochs", settings.epochs)
        .with_provenance("spread", settings.spread)
        .with_provenance("data_digest", dataset_digest(dataset));
    Ok(TrainOutcome {
        model,
        split,
        scan,
        used_gk: extraction.used_gk,
        gk_fallback: extraction.gk_fallback,
        t1_trace,
        it2_trace,
    })
}

/// Short digest of a dataset's names, values and labels.
pub fn dataset_digest(d: &Dataset) -> String {
    let mut flat: Vec<f64> = d.features().as_slice().to_vec();
    flat.extend(d.labels().iter().map(|&l| l as f64));
    let names = d.feature_names().join("\u{1f}");
    flat.extend(names.bytes().map(f64::from));
    learn::parameter_digest(&flat)
}
