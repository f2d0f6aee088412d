//! Segment-level overlap detectors: single-channel baseline, BeamTransformer,
//! SpatialNet, and the fused BeamTransformer + SpatialNet.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nn::layers::{Encoder, Linear, ParamBuilder, PostNet, PreNet};
use crate::nn::{EncoderConfig, NodeId, ParamSet, Real, Tape, Tensor};
use crate::{Error, Result};

pub const NUM_BEAMS: usize = 8;
/// Opposite beams processed together, as 0-based beam indices.
pub const PAIR_MAP: [(usize, usize); 4] = [(0, 4), (1, 5), (2, 6), (3, 7)];
/// SRP values plus per-microphone log energies.
pub const SPATIAL_DIM: usize = 128;
/// SpatialNet frames averaged per BeamTransformer frame before fusion.
pub const ALIGN_FACTOR: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Baseline,
    BeamTransformer,
    SpatialNet,
    Combined,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Baseline,
        ModelKind::BeamTransformer,
        ModelKind::SpatialNet,
        ModelKind::Combined,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Baseline => "baseline",
            ModelKind::BeamTransformer => "bt",
            ModelKind::SpatialNet => "spatial",
            ModelKind::Combined => "combined",
        }
    }

    pub fn uses_beams(self) -> bool {
        matches!(self, ModelKind::BeamTransformer | ModelKind::Combined)
    }

    pub fn uses_spatial(self) -> bool {
        matches!(self, ModelKind::SpatialNet | ModelKind::Combined)
    }

    pub fn uses_single(self) -> bool {
        self == ModelKind::Baseline
    }

    /// Encoder depth used when none is configured: six layers for the
    /// baseline, two per encoder elsewhere.
    pub fn default_layers(self) -> usize {
        match self {
            ModelKind::Baseline => 6,
            _ => 2,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::arg(format!("unknown model {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Filterbank size `F` of beam or single-channel inputs.
    pub fbank: usize,
    /// Hidden size `D`.
    pub dim: usize,
    pub heads: usize,
    /// Layers per encoder.
    pub layers: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// `F = 40`, `D = 64`, four heads, and the kind's default depth.
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            fbank: 40,
            dim: 64,
            heads: 4,
            layers: kind.default_layers(),
            seed: 0,
        }
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig::new(self.dim, self.heads, self.layers)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fbank == 0 {
            return Err(Error::arg("filterbank size must be positive"));
        }
        if self.layers == 0 {
            return Err(Error::arg("encoders need at least one layer"));
        }
        self.encoder().validate()
    }
}

/// Feature tensors for one segment. Each model reads only the ones it needs:
/// `beams` is `[F × L × 8]`, `spatial` is `[128 × L]`, `single` is `[F × L]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ModelInput<'a> {
    pub beams: Option<&'a Tensor>,
    pub spatial: Option<&'a Tensor>,
    pub single: Option<&'a Tensor>,
}

/// Stages of a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Input,
    PreNet,
    Recombination,
    Encoders,
    PostNet,
    MeanPooling,
    Alignment,
    Fusion,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRow {
    /// `"bt"` or `"spatial"` for the fused model's branches, else the model
    /// name.
    pub branch: &'static str,
    pub stage: Stage,
    pub dims: Vec<usize>,
}

/// Tensor dimensions observed at each stage of one forward pass.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ShapeTrace {
    pub rows: Vec<TraceRow>,
}

impl ShapeTrace {
    fn push(&mut self, branch: &'static str, stage: Stage, dims: Vec<usize>) {
        self.rows.push(TraceRow { branch, stage, dims });
    }

    pub fn get(&self, branch: &str, stage: Stage) -> Option<&[usize]> {
        self.rows
            .iter()
            .find(|r| r.branch == branch && r.stage == stage)
            .map(|r| r.dims.as_slice())
    }
}

/// Splits `[D × T × 8]` per-beam sequences into the four opposite-beam
/// pairs, each joined along time as `[D × 2T]` with the lower beam first.
pub fn recombine_beams(beams: &Tensor) -> Result<[Tensor; 4]> {
    let &[d, t, nb] = beams.dims() else {
        return Err(Error::shape(format!("expected [D × T × 8], got {:?}", beams.dims())));
    };
    if nb != NUM_BEAMS {
        return Err(Error::arg(format!("expected {NUM_BEAMS} beams, got {nb}")));
    }
    let x = beams.data();
    let pair = |(a, b): (usize, usize)| {
        Tensor::from_fn(vec![d, 2 * t], |i| {
            let (row, col) = (i / (2 * t), i % (2 * t));
            let (beam, tt) = if col < t { (a, col) } else { (b, col - t) };
            x[(row * t + tt) * nb + beam]
        })
    };
    Ok(PAIR_MAP.map(pair))
}

#[derive(Debug, Clone)]
struct BtBranch {
    prenet: PreNet,
    encoders: Vec<Encoder>,
    postnet: PostNet,
}

#[derive(Debug, Clone)]
struct SpatialBranch {
    prenet: PreNet,
    encoder: Encoder,
    postnet: PostNet,
}

#[derive(Debug, Clone)]
enum Net {
    Baseline {
        prenet: PreNet,
        encoder: Encoder,
        postnet: PostNet,
        classifier: Linear,
    },
    Bt {
        branch: BtBranch,
        classifier: Linear,
    },
    Spatial {
        branch: SpatialBranch,
        classifier: Linear,
    },
    Combined {
        bt: BtBranch,
        spatial: SpatialBranch,
        classifier: Linear,
    },
}

/// Architecture plus its parameters.
#[derive(Debug, Clone)]
pub struct Model {
    cfg: ModelConfig,
    net: Net,
    pub params: ParamSet,
}

impl Model {
    /// Builds and initializes a model from `cfg.seed`.
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut b = ParamBuilder::new(&mut params, &mut rng);
        let (d, enc) = (cfg.dim, cfg.encoder());
        let net = match cfg.kind {
            ModelKind::Baseline => Net::Baseline {
                prenet: PreNet::new(&mut b.scope("prenet"), cfg.fbank, d, 2),
                encoder: Encoder::new(&mut b.scope("encoder"), enc)?,
                postnet: PostNet::new(&mut b.scope("postnet"), d, d),
                classifier: Linear::new(&mut b.scope("classifier"), d, 1),
            },
            ModelKind::BeamTransformer => Net::Bt {
                branch: BtBranch::new(&mut b.scope("bt"), &cfg)?,
                classifier: Linear::new(&mut b.scope("classifier"), d, 1),
            },
            ModelKind::SpatialNet => Net::Spatial {
                branch: SpatialBranch::new(&mut b.scope("spatial"), &cfg)?,
                classifier: Linear::new(&mut b.scope("classifier"), d, 1),
            },
            ModelKind::Combined => Net::Combined {
                bt: BtBranch::new(&mut b.scope("bt"), &cfg)?,
                spatial: SpatialBranch::new(&mut b.scope("spatial"), &cfg)?,
                classifier: Linear::new(&mut b.scope("classifier"), 2 * d, 1),
            },
        };
        Ok(Self { cfg, net, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn kind(&self) -> ModelKind {
        self.cfg.kind
    }

    /// Records the logit (`1 × 1`) using the model's own parameters.
    pub fn forward<S: Real>(&self, tape: &mut Tape<S>, input: &ModelInput) -> Result<NodeId> {
        self.forward_with(tape, &self.params, input, None)
    }

    /// Records the logit using `params`, which must have this model's layout.
    pub fn forward_with<S: Real>(
        &self,
        tape: &mut Tape<S>,
        params: &ParamSet,
        input: &ModelInput,
        mut trace: Option<&mut ShapeTrace>,
    ) -> Result<NodeId> {
        let d = self.cfg.dim;
        let name = self.cfg.kind.as_str();
        match &self.net {
            Net::Baseline {
                prenet,
                encoder,
                postnet,
                classifier,
            } => {
                let x = need(input.single, "single-channel")?;
                let (f, l) = dims2(x, "single-channel")?;
                self.check_fbank(f)?;
                check_len(l)?;
                record(&mut trace, name, Stage::Input, vec![f, l, 1]);
                let xn = tape.constant(f, l, x.data())?;
                let h = prenet.forward(tape, params, xn)?;
                let (hd, hl) = tape.shape(h);
                record(&mut trace, name, Stage::PreNet, vec![hd, hl, 1]);
                let h = encoder.forward(tape, params, h, None)?;
                record(&mut trace, name, Stage::Encoders, shape(tape, h));
                let h = postnet.forward(tape, params, h)?;
                record(&mut trace, name, Stage::PostNet, shape(tape, h));
                head(tape, params, h, classifier, name, &mut trace)
            }
            Net::Bt { branch, classifier } => {
                let h = branch.forward(tape, params, &self.cfg, input, name, &mut trace)?;
                head(tape, params, h, classifier, name, &mut trace)
            }
            Net::Spatial { branch, classifier } => {
                let h = branch.forward(tape, params, input, name, &mut trace)?;
                head(tape, params, h, classifier, name, &mut trace)
            }
            Net::Combined {
                bt,
                spatial,
                classifier,
            } => {
                let hb = bt.forward(tape, params, &self.cfg, input, "bt", &mut trace)?;
                let hs = spatial.forward(tape, params, input, "spatial", &mut trace)?;
                let (lb, ls) = (tape.shape(hb).1, tape.shape(hs).1);
                if ls != lb * ALIGN_FACTOR {
                    return Err(Error::arg(format!(
                        "cannot align SpatialNet length {ls} to BeamTransformer length {lb} \
                         with factor {ALIGN_FACTOR}"
                    )));
                }
                let hs = tape.avg_pool_cols(hs, ALIGN_FACTOR)?;
                record(&mut trace, name, Stage::Alignment, shape(tape, hs));
                let fused = tape.concat_rows(&[hb, hs])?;
                record(&mut trace, name, Stage::Fusion, shape(tape, fused));
                debug_assert_eq!(tape.shape(fused).0, 2 * d);
                head(tape, params, fused, classifier, name, &mut trace)
            }
        }
    }

    /// Forward pass that returns the stage shapes alongside the logit.
    pub fn trace<S: Real>(&self, input: &ModelInput) -> Result<(S, ShapeTrace)> {
        let mut tape = Tape::new();
        let mut trace = ShapeTrace::default();
        let z = self.forward_with(&mut tape, &self.params, input, Some(&mut trace))?;
        Ok((tape.scalar(z), trace))
    }

    /// Logit computed in `f32`.
    pub fn logit(&self, input: &ModelInput) -> Result<f32> {
        let mut tape = Tape::<f32>::new();
        let z = self.forward(&mut tape, input)?;
        Ok(tape.scalar(z))
    }

    fn check_fbank(&self, f: usize) -> Result<()> {
        if f != self.cfg.fbank {
            return Err(Error::arg(format!(
                "model expects {} filterbank channels, input has {f}",
                self.cfg.fbank
            )));
        }
        Ok(())
    }
}

impl BtBranch {
    fn new(b: &mut ParamBuilder, cfg: &ModelConfig) -> Result<Self> {
        let d = cfg.dim;
        let encoders = (0..PAIR_MAP.len())
            .map(|i| Encoder::new(&mut b.scope(&format!("encoder{i}")), cfg.encoder()))
            .collect::<Result<_>>()?;
        Ok(Self {
            prenet: PreNet::new(&mut b.scope("prenet"), cfg.fbank, d, 2),
            encoders,
            postnet: PostNet::new(&mut b.scope("postnet"), PAIR_MAP.len() * d, d),
        })
    }

    /// Returns the post-net output `[D × L/2]`.
    fn forward<S: Real>(
        &self,
        tape: &mut Tape<S>,
        params: &ParamSet,
        cfg: &ModelConfig,
        input: &ModelInput,
        name: &'static str,
        trace: &mut Option<&mut ShapeTrace>,
    ) -> Result<NodeId> {
        let x = need(input.beams, "beam")?;
        let &[f, l, nb] = x.dims() else {
            return Err(Error::shape(format!("beam features must be [F × L × 8], got {:?}", x.dims())));
        };
        if nb != NUM_BEAMS {
            return Err(Error::arg(format!("expected {NUM_BEAMS} beams, got {nb}")));
        }
        if f != cfg.fbank {
            return Err(Error::arg(format!(
                "model expects {} filterbank channels, input has {f}",
                cfg.fbank
            )));
        }
        check_len(l)?;
        record(trace, name, Stage::Input, vec![f, l, nb]);
        let data = x.data();
        let mut per_beam = Vec::with_capacity(nb);
        let mut buf = vec![0.0f32; f * l];
        for beam in 0..nb {
            for (i, v) in buf.iter_mut().enumerate() {
                *v = data[i * nb + beam];
            }
            let xb = tape.constant(f, l, &buf)?;
            per_beam.push(self.prenet.forward(tape, params, xb)?);
        }
        let (pd, pl) = tape.shape(per_beam[0]);
        record(trace, name, Stage::PreNet, vec![pd, pl, nb]);
        let mut pairs = Vec::with_capacity(PAIR_MAP.len());
        for (a, b) in PAIR_MAP {
            debug_assert_eq!(tape.shape(per_beam[a]), tape.shape(per_beam[b]));
            pairs.push(tape.concat_cols(&[per_beam[a], per_beam[b]])?);
        }
        record(trace, name, Stage::Recombination, vec![pd, pl, 2, PAIR_MAP.len()]);
        let mut encoded = Vec::with_capacity(pairs.len());
        for (enc, pair) in self.encoders.iter().zip(pairs) {
            encoded.push(enc.forward(tape, params, pair, None)?);
        }
        let stacked = tape.concat_rows(&encoded)?;
        record(trace, name, Stage::Encoders, shape(tape, stacked));
        let h = self.postnet.forward(tape, params, stacked)?;
        record(trace, name, Stage::PostNet, shape(tape, h));
        Ok(h)
    }
}

impl SpatialBranch {
    fn new(b: &mut ParamBuilder, cfg: &ModelConfig) -> Result<Self> {
        let d = cfg.dim;
        Ok(Self {
            prenet: PreNet::new(&mut b.scope("prenet"), SPATIAL_DIM, d, 1),
            encoder: Encoder::new(&mut b.scope("encoder"), cfg.encoder())?,
            postnet: PostNet::new(&mut b.scope("postnet"), d, d),
        })
    }

    /// Returns the post-net output `[D × L]`.
    fn forward<S: Real>(
        &self,
        tape: &mut Tape<S>,
        params: &ParamSet,
        input: &ModelInput,
        name: &'static str,
        trace: &mut Option<&mut ShapeTrace>,
    ) -> Result<NodeId> {
        let x = need(input.spatial, "spatial")?;
        let (c, l) = dims2(x, "spatial")?;
        if c != SPATIAL_DIM {
            return Err(Error::arg(format!(
                "spatial features must have {SPATIAL_DIM} rows, got {c}"
            )));
        }
        record(trace, name, Stage::Input, vec![c, l, 1]);
        let xn = tape.constant(c, l, x.data())?;
        let h = self.prenet.forward(tape, params, xn)?;
        let (hd, hl) = tape.shape(h);
        record(trace, name, Stage::PreNet, vec![hd, hl, 1]);
        // No pairing: the single sequence passes through unchanged.
        record(trace, name, Stage::Recombination, vec![hd, hl, 1]);
        let h = self.encoder.forward(tape, params, h, None)?;
        record(trace, name, Stage::Encoders, shape(tape, h));
        let h = self.postnet.forward(tape, params, h)?;
        record(trace, name, Stage::PostNet, shape(tape, h));
        Ok(h)
    }
}

fn head<S: Real>(
    tape: &mut Tape<S>,
    params: &ParamSet,
    h: NodeId,
    classifier: &Linear,
    name: &'static str,
    trace: &mut Option<&mut ShapeTrace>,
) -> Result<NodeId> {
    let pooled = tape.mean_cols(h)?;
    record(trace, name, Stage::MeanPooling, shape(tape, pooled));
    classifier.forward(tape, params, pooled)
}

fn record(trace: &mut Option<&mut ShapeTrace>, branch: &'static str, stage: Stage, dims: Vec<usize>) {
    if let Some(t) = trace.as_deref_mut() {
        t.push(branch, stage, dims);
    }
}

fn shape<S: Real>(tape: &Tape<S>, id: NodeId) -> Vec<usize> {
    let (r, c) = tape.shape(id);
    vec![r, c]
}

fn need<'a>(x: Option<&'a Tensor>, what: &str) -> Result<&'a Tensor> {
    x.ok_or_else(|| Error::arg(format!("model needs {what} features")))
}

fn dims2(x: &Tensor, what: &str) -> Result<(usize, usize)> {
    match x.dims() {
        &[r, c] => Ok((r, c)),
        other => Err(Error::shape(format!("{what} features must be 2-D, got {other:?}"))),
    }
}

fn check_len(l: usize) -> Result<()> {
    if l == 0 || l % 4 != 0 {
        return Err(Error::arg(format!("input length {l} must be a positive multiple of 4")));
    }
    Ok(())
}

