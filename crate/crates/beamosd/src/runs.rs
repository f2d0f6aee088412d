//! Training, evaluation and gradient-check runs with their on-disk artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use beamosd_core::array::ArrayGeometry;
use beamosd_core::features::{FeatureConfig, FeatureExtractor};
use beamosd_core::metrics::Metrics;
use beamosd_core::models::{Model, ModelConfig, ModelInput, ModelKind};
use beamosd_core::nn::gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
use beamosd_core::nn::{ParamSet, Tape, Tensor};
use beamosd_core::train::{feature_kinds, metrics_from_logits, train, Detector, EpochLog, Example, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ModelFile, MODEL_FILE};
use crate::dataset::{load_examples, segment_seconds};
use crate::manifest::{Manifest, SplitFilter};
use crate::parallel::Workers;
use crate::{btns, Error, Result};

pub const CHECKPOINT_FILE: &str = "checkpoint.btns";
pub const LOG_FILE: &str = "train_log.csv";

pub fn epoch_checkpoint(epoch: usize) -> String {
    format!("epoch{epoch:03}.btns")
}

/// Feature settings matching a model's filterbank size.
pub fn feature_config(model: &ModelConfig) -> FeatureConfig {
    FeatureConfig {
        fbank: model.fbank,
        ..FeatureConfig::default()
    }
}

pub fn extractor_for(model: &ModelConfig) -> Result<FeatureExtractor> {
    Ok(FeatureExtractor::new(feature_config(model), ArrayGeometry::default())?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub model: String,
    pub split: String,
    pub segment_seconds: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
    pub confusion: ConfusionCounts,
}

impl Report {
    pub fn new(kind: ModelKind, split: SplitFilter, segment_seconds: f64, m: &Metrics) -> Self {
        let c = m.confusion;
        Self {
            model: kind.as_str().to_string(),
            split: split.as_str().to_string(),
            segment_seconds,
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            fscore: m.fscore,
            confusion: ConfusionCounts {
                tp: c.tp,
                fp: c.fp,
                tn: c.tn,
                fn_: c.fn_,
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

pub fn log_header() -> &'static str {
    "epoch,train_loss,accuracy,precision,recall,fscore\n"
}

/// One CSV row; metric columns are empty without an evaluation split.
pub fn log_row(log: &EpochLog) -> String {
    let mut s = format!("{},{}", log.epoch, log.train_loss);
    match &log.eval {
        Some(m) => write!(s, ",{},{},{},{}", m.accuracy, m.precision, m.recall, m.fscore).unwrap(),
        None => s.push_str(",,,,"),
    }
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRun {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Split scored after every epoch, if any.
    pub eval_split: Option<SplitFilter>,
}

/// Trains on the manifest's train split, writing `model.json`, one
/// checkpoint per epoch, the final `checkpoint.btns` and `train_log.csv`
/// into `out`.
pub fn run_train(manifest: &Manifest, run: &TrainRun, out: &Path, workers: Workers) -> Result<Vec<EpochLog>> {
    run.model.validate()?;
    run.train.validate()?;
    let extractor = extractor_for(&run.model)?;
    let kinds = feature_kinds(run.model.kind);
    let (_, train_set) = load_examples(manifest, SplitFilter::Train, &extractor, &kinds, workers)?;
    let eval_set = match run.eval_split {
        Some(split) => Some(load_examples(manifest, split, &extractor, &kinds, workers)?.1),
        None => None,
    };
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_file(out.join(MODEL_FILE), &ModelFile::from(&run.model).to_json())?;
    let (det, logs) = train_in_memory(run, &train_set, eval_set.as_deref(), |log, det| {
        btns::save(out.join(epoch_checkpoint(log.epoch)), &det.to_tensors())
    })?;
    btns::save(out.join(CHECKPOINT_FILE), &det.to_tensors())?;
    let mut csv = String::from(log_header());
    logs.iter().for_each(|l| csv.push_str(&log_row(l)));
    write_file(out.join(LOG_FILE), &csv)?;
    Ok(logs)
}

/// Trains from in-memory examples; `on_epoch` may persist checkpoints.
pub fn train_in_memory(
    run: &TrainRun,
    train_set: &[Example],
    eval_set: Option<&[Example]>,
    mut on_epoch: impl FnMut(&EpochLog, &Detector) -> Result<()>,
) -> Result<(Detector, Vec<EpochLog>)> {
    let model = Model::new(run.model.clone())?;
    let mut failure = None;
    let result = train(model, train_set, eval_set, &run.train, |log, det| {
        on_epoch(log, det).map_err(|e| {
            let msg = e.to_string();
            failure = Some(e);
            beamosd_core::Error::Argument(msg)
        })
    });
    match (result, failure) {
        (Ok(v), _) => Ok(v),
        (Err(_), Some(e)) => Err(e),
        (Err(e), None) => Err(e.into()),
    }
}

/// Checkpoint next to `model.json` unless a model file is given.
pub fn load_detector(checkpoint: &Path, model_file: Option<&Path>) -> Result<Detector> {
    let model_path: PathBuf = match model_file {
        Some(p) => p.to_path_buf(),
        None => checkpoint.parent().unwrap_or(Path::new(".")).join(MODEL_FILE),
    };
    let cfg = ModelFile::load(&model_path)?.to_config()?;
    let tensors = btns::load(checkpoint)?;
    Ok(Detector::from_tensors(Model::new(cfg)?, tensors)?)
}

/// Logits of `det` over `set`, computed in parallel, in order.
pub fn logits(det: &Detector, set: &[Example], workers: Workers) -> Result<Vec<f32>> {
    workers.map(set, |ex| Ok(det.logit(&ex.features)?))
}

pub fn run_eval(
    manifest: &Manifest,
    det: &Detector,
    split: SplitFilter,
    threshold: f64,
    workers: Workers,
) -> Result<Report> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::usage(format!("threshold must lie in [0, 1], got {threshold}")));
    }
    let extractor = extractor_for(det.model.config())?;
    let kinds = feature_kinds(det.model.kind());
    let (entries, set) = load_examples(manifest, split, &extractor, &kinds, workers)?;
    let z = logits(det, &set, workers)?;
    let labels: Vec<u8> = set.iter().map(|e| e.label).collect();
    let m = metrics_from_logits(&z, &labels, threshold)?;
    Ok(Report::new(det.model.kind(), split, segment_seconds(&entries)?, &m))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckSummary {
    pub model: String,
    #[serde(rename = "F")]
    pub fbank: usize,
    #[serde(rename = "L")]
    pub length: usize,
    #[serde(rename = "D")]
    pub dim: usize,
    pub layers: usize,
    pub eps: f64,
    pub coords: usize,
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Uniform `[-1, 1)` inputs of every kind for a toy model.
pub fn toy_inputs(fbank: usize, len: usize, seed: u64) -> [Tensor; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |dims: Vec<usize>| Tensor::from_fn(dims, |_| rng.random_range(-1.0..1.0));
    [
        draw(vec![fbank, len, 8]),
        draw(vec![beamosd_core::models::SPATIAL_DIM, len]),
        draw(vec![fbank, len]),
    ]
}

/// Central-difference check of the BCE loss (label 1) on random inputs.
pub fn gradcheck_model(model: &ModelConfig, len: usize, cfg: GradCheckConfig) -> Result<GradCheckReport> {
    let m = Model::new(model.clone())?;
    let [beams, spatial, single] = toy_inputs(model.fbank, len, cfg.seed);
    let input = ModelInput {
        beams: Some(&beams),
        spatial: Some(&spatial),
        single: Some(&single),
    };
    let objective = |t: &mut Tape<f64>, p: &ParamSet| {
        let z = m.forward_with(t, p, &input, None)?;
        t.bce_with_logits(z, 1.0)
    };
    Ok(grad_check(&objective, &m.params, cfg)?)
}

pub fn write_file(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
