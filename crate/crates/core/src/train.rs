//! Mini-batch training and evaluation over in-memory segment features.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::features::{FeatureKind, SegmentFeatures};
use crate::metrics::{Confusion, Metrics};
use crate::models::{Model, ModelInput, ModelKind};
use crate::nn::optim::{Adam, AdamConfig};
use crate::nn::tape::sigmoid;
use crate::nn::{ParamSet, Real, Tape, Tensor};
use crate::{Error, Result};

/// Lower bound on per-feature standard deviations used for normalization.
pub const MIN_STD: f64 = 1e-5;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 16,
            epochs: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.adam.lr > 0.0) {
            return Err(Error::arg("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::arg("batch size must be positive"));
        }
        Ok(())
    }
}

/// One labeled segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: SegmentFeatures,
    pub label: u8,
}

/// Feature kinds a model consumes.
pub fn feature_kinds(kind: ModelKind) -> Vec<FeatureKind> {
    let mut out = Vec::new();
    if kind.uses_beams() {
        out.push(FeatureKind::Beams);
    }
    if kind.uses_spatial() {
        out.push(FeatureKind::Spatial);
    }
    if kind.uses_single() {
        out.push(FeatureKind::Single);
    }
    out
}

/// Per-row mean and standard deviation of one feature kind, pooled over
/// time (and beams).
#[derive(Debug, Clone, PartialEq)]
pub struct RowStats {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl RowStats {
    fn normalize(&self, x: &Tensor) -> Result<Tensor> {
        let rows = x.dims().first().copied().unwrap_or(0);
        if rows != self.mean.len() {
            return Err(Error::shape(format!(
                "features have {rows} rows, statistics cover {}",
                self.mean.len()
            )));
        }
        let per_row = x.len() / rows.max(1);
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let r = i / per_row;
                (v - self.mean[r]) / self.std[r]
            })
            .collect();
        Tensor::new(x.dims().to_vec(), data)
    }
}

/// Normalization statistics for each feature kind a model reads.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureStats {
    pub entries: Vec<(FeatureKind, RowStats)>,
}

impl FeatureStats {
    /// Statistics of `kinds` over `examples`.
    pub fn compute(examples: &[Example], kinds: &[FeatureKind]) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::arg("cannot compute statistics of an empty dataset"));
        }
        let mut entries = Vec::new();
        for &kind in kinds {
            let mut sum: Vec<f64> = Vec::new();
            let mut sq: Vec<f64> = Vec::new();
            let mut count = 0usize;
            for ex in examples {
                let x = ex
                    .features
                    .get(kind)
                    .ok_or_else(|| Error::arg(format!("example lacks {kind} features")))?;
                let rows = x.dims().first().copied().unwrap_or(0);
                if sum.is_empty() {
                    sum = vec![0.0; rows];
                    sq = vec![0.0; rows];
                } else if sum.len() != rows {
                    return Err(Error::shape(format!("{kind} features change row count")));
                }
                let per_row = x.len() / rows.max(1);
                for (r, chunk) in x.data().chunks_exact(per_row.max(1)).enumerate() {
                    for &v in chunk {
                        sum[r] += v as f64;
                        sq[r] += v as f64 * v as f64;
                    }
                }
                count += per_row;
            }
            let n = count as f64;
            let mean: Vec<f32> = sum.iter().map(|s| (s / n) as f32).collect();
            let std = sum
                .iter()
                .zip(&sq)
                .map(|(s, q)| {
                    let m = s / n;
                    Float::sqrt((q / n - m * m).max(0.0)).max(MIN_STD) as f32
                })
                .collect();
            entries.push((kind, RowStats { mean, std }));
        }
        Ok(Self { entries })
    }

    pub fn get(&self, kind: FeatureKind) -> Option<&RowStats> {
        self.entries.iter().find(|(k, _)| *k == kind).map(|(_, s)| s)
    }

    /// Normalized copies of the kinds covered by these statistics.
    pub fn apply(&self, features: &SegmentFeatures) -> Result<SegmentFeatures> {
        let mut out = SegmentFeatures::default();
        for (kind, stats) in &self.entries {
            let x = features
                .get(*kind)
                .ok_or_else(|| Error::arg(format!("segment lacks {kind} features")))?;
            out.set(*kind, stats.normalize(x)?);
        }
        Ok(out)
    }

    /// Tensors named `stats.<kind>.mean` and `stats.<kind>.std`.
    pub fn to_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (kind, s) in &self.entries {
            let n = s.mean.len();
            out.push((
                format!("stats.{kind}.mean"),
                Tensor::new(vec![n], s.mean.clone()).expect("length matches"),
            ));
            out.push((
                format!("stats.{kind}.std"),
                Tensor::new(vec![n], s.std.clone()).expect("length matches"),
            ));
        }
        out
    }

    /// Inverse of [`to_tensors`](Self::to_tensors) for the given kinds.
    pub fn from_tensors(tensors: &[(String, Tensor)], kinds: &[FeatureKind]) -> Result<Self> {
        let find = |name: String| {
            tensors
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, t)| t.data().to_vec())
                .ok_or_else(|| Error::arg(format!("missing tensor {name:?}")))
        };
        let mut entries = Vec::new();
        for &kind in kinds {
            let mean = find(format!("stats.{kind}.mean"))?;
            let std = find(format!("stats.{kind}.std"))?;
            if mean.len() != std.len() || std.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::arg(format!("invalid statistics for {kind} features")));
            }
            entries.push((kind, RowStats { mean, std }));
        }
        Ok(Self { entries })
    }
}

/// A model together with the normalization it was trained with.
#[derive(Debug, Clone)]
pub struct Detector {
    pub model: Model,
    pub stats: FeatureStats,
}

impl Detector {
    pub fn logit(&self, features: &SegmentFeatures) -> Result<f32> {
        let x = self.stats.apply(features)?;
        self.model.logit(&input_of(&x))
    }

    /// Checkpoint tensors: parameters followed by statistics.
    pub fn to_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out: Vec<(String, Tensor)> = self
            .model
            .params
            .iter()
            .map(|(n, t)| {
                let mut t = t.clone();
                t.grad = None;
                (String::from(n), t)
            })
            .collect();
        out.extend(self.stats.to_tensors());
        out
    }

    /// Rebuilds a detector for `model`'s architecture from checkpoint
    /// tensors.
    pub fn from_tensors(mut model: Model, tensors: Vec<(String, Tensor)>) -> Result<Self> {
        let kinds = feature_kinds(model.kind());
        let stats = FeatureStats::from_tensors(&tensors, &kinds)?;
        let params = tensors.into_iter().filter(|(n, _)| !n.starts_with("stats."));
        model.params.load(params)?;
        Ok(Self { model, stats })
    }
}

pub fn input_of(f: &SegmentFeatures) -> ModelInput<'_> {
    ModelInput {
        beams: f.beams.as_ref(),
        spatial: f.spatial.as_ref(),
        single: f.single.as_ref(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval: Option<Metrics>,
}

/// Loss and parameter gradients of one example, evaluated in `S`.
pub fn example_grads<S: Real>(
    model: &Model,
    params: &ParamSet,
    input: &ModelInput,
    label: u8,
) -> Result<(f64, Vec<Option<Vec<S>>>)> {
    let mut tape = Tape::<S>::new();
    let z = model.forward_with(&mut tape, params, input, None)?;
    let loss = tape.bce_with_logits(z, label as f64)?;
    let value = tape.scalar(loss).as_f64();
    let grads = tape.backward(loss)?;
    Ok((value, grads.into_param_grads()))
}

/// Trains `model` on `train`, normalizing with statistics of the
/// training set. `on_epoch` sees each epoch's log and the current detector.
/// Updates are serial, so identical inputs give identical results.
pub fn train(
    model: Model,
    train: &[Example],
    eval: Option<&[Example]>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog, &Detector) -> Result<()>,
) -> Result<(Detector, Vec<EpochLog>)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::arg("training set is empty"));
    }
    let kinds = feature_kinds(model.kind());
    let stats = FeatureStats::compute(train, &kinds)?;
    let normalized = train
        .iter()
        .map(|ex| stats.apply(&ex.features))
        .collect::<Result<Vec<_>>>()?;
    let mut det = Detector { model, stats };
    let mut opt = Adam::new(cfg.adam, &det.model.params)?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut logs = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            det.model.params.zero_grads();
            let scale = 1.0 / batch.len() as f32;
            for &i in batch {
                let input = input_of(&normalized[i]);
                let (loss, grads) =
                    example_grads::<f32>(&det.model, &det.model.params, &input, train[i].label)?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
                }
                total += loss;
                det.model.params.accumulate_grads(&grads, scale);
            }
            opt.step(&mut det.model.params)?;
        }
        let eval = match eval {
            Some(set) => Some(evaluate(&det, set, DEFAULT_THRESHOLD)?.0),
            None => None,
        };
        let log = EpochLog {
            epoch,
            train_loss: total / train.len() as f64,
            eval,
        };
        on_epoch(&log, &det)?;
        logs.push(log);
    }
    Ok((det, logs))
}

/// Mean loss of `det` over `set`.
pub fn mean_loss(det: &Detector, set: &[Example]) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::arg("evaluation set is empty"));
    }
    let mut total = 0.0;
    for ex in set {
        let z = det.logit(&ex.features)? as f64;
        total += crate::nn::loss::bce_loss(z, ex.label)?.0;
    }
    Ok(total / set.len() as f64)
}

/// Decision rule: overlap iff `sigmoid(logit) > threshold`.
pub fn decide(logit: f32, threshold: f64) -> u8 {
    (sigmoid(logit as f64) > threshold) as u8
}

/// Metrics from precomputed logits.
pub fn metrics_from_logits(logits: &[f32], labels: &[u8], threshold: f64) -> Result<Metrics> {
    if logits.len() != labels.len() {
        return Err(Error::arg("logit and label counts differ"));
    }
    let preds: Vec<u8> = logits.iter().map(|&z| decide(z, threshold)).collect();
    crate::metrics::compute_metrics(&preds, labels)
}

/// Metrics and logits of `det` over `set`, serially.
pub fn evaluate(det: &Detector, set: &[Example], threshold: f64) -> Result<(Metrics, Vec<f32>)> {
    if set.is_empty() {
        return Err(Error::arg("evaluation set is empty"));
    }
    let mut logits = Vec::with_capacity(set.len());
    let mut c = Confusion::default();
    for ex in set {
        let z = det.logit(&ex.features)?;
        c.add(decide(z, threshold) == 1, ex.label == 1);
        logits.push(z);
    }
    Ok((Metrics::from_confusion(c)?, logits))
}
