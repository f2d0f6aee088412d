//! Layers over `[features × time]` sequences.
//!
//! Layers hold [`ParamId`]s into a shared [`ParamSet`]; `forward` records
//! onto a [`Tape`].

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{NodeId, ParamId, ParamSet, Real, Tape, Tensor};
use crate::{Error, Result};

/// Registers parameters under a name prefix and initializes them from a
/// seeded generator: weights uniform in `±1/√fan_in`, biases zero, norm
/// gains one.
pub struct ParamBuilder<'a> {
    params: &'a mut ParamSet,
    rng: &'a mut ChaCha8Rng,
    prefix: String,
}

impl<'a> ParamBuilder<'a> {
    pub fn new(params: &'a mut ParamSet, rng: &'a mut ChaCha8Rng) -> Self {
        Self {
            params,
            rng,
            prefix: String::new(),
        }
    }

    /// Builder whose names are prefixed with `name.`.
    pub fn scope(&mut self, name: &str) -> ParamBuilder<'_> {
        let prefix = if self.prefix.is_empty() {
            String::from(name)
        } else {
            format!("{}.{}", self.prefix, name)
        };
        ParamBuilder {
            params: self.params,
            rng: self.rng,
            prefix,
        }
    }

    fn full(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            String::from(name)
        } else {
            format!("{}.{}", self.prefix, name)
        }
    }

    pub fn uniform(&mut self, name: &str, dims: Vec<usize>, fan_in: usize) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f32).sqrt();
        let rng = &mut *self.rng;
        let t = Tensor::from_fn(dims, |_| rng.random_range(-bound..bound));
        let full = self.full(name);
        self.params.add(full, t)
    }

    pub fn constant(&mut self, name: &str, dims: Vec<usize>, value: f32) -> ParamId {
        let t = Tensor::from_fn(dims, |_| value);
        let full = self.full(name);
        self.params.add(full, t)
    }
}

/// `y = W x + b` applied to every column of `x`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(b: &mut ParamBuilder, in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: b.uniform("weight", alloc::vec![out_dim, in_dim], in_dim),
            bias: b.constant("bias", alloc::vec![out_dim], 0.0),
            in_dim,
            out_dim,
        }
    }

    pub fn forward<S: Real>(&self, t: &mut Tape<S>, p: &ParamSet, x: NodeId) -> Result<NodeId> {
        if t.shape(x).0 != self.in_dim {
            return Err(Error::arg(format!(
                "linear layer expects {} input features, got {}",
                self.in_dim,
                t.shape(x).0
            )));
        }
        let w = t.param(p, self.weight);
        let b = t.param(p, self.bias);
        let y = t.matmul(w, false, x, false)?;
        t.add_bias(y, b)
    }
}

/// 1-D convolution along time with zero padding.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv1d {
    pub fn new(
        b: &mut ParamBuilder,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        Self {
            weight: b.uniform("weight", alloc::vec![out_ch, in_ch, kernel], in_ch * kernel),
            bias: b.constant("bias", alloc::vec![out_ch], 0.0),
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
        }
    }

    pub fn forward<S: Real>(&self, t: &mut Tape<S>, p: &ParamSet, x: NodeId) -> Result<NodeId> {
        if t.shape(x).0 != self.in_ch {
            return Err(Error::arg(format!(
                "convolution expects {} channels, got {}",
                self.in_ch,
                t.shape(x).0
            )));
        }
        let cols = t.im2col(x, self.kernel, self.stride, self.pad)?;
        let w = t.param(p, self.weight);
        let b = t.param(p, self.bias);
        let y = t.matmul(w, false, cols, false)?;
        t.add_bias(y, b)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(b: &mut ParamBuilder, dim: usize) -> Self {
        Self {
            gamma: b.constant("gamma", alloc::vec![dim], 1.0),
            beta: b.constant("beta", alloc::vec![dim], 0.0),
        }
    }

    pub fn forward<S: Real>(&self, t: &mut Tape<S>, p: &ParamSet, x: NodeId) -> Result<NodeId> {
        let g = t.param(p, self.gamma);
        let b = t.param(p, self.beta);
        t.layer_norm_cols(x, g, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    pub model_dim: usize,
    pub num_heads: usize,
    pub num_layers: usize,
    pub ffn_dim: usize,
    pub positional: bool,
}

impl EncoderConfig {
    /// Sinusoidal positions and a feed-forward width of `4·model_dim`.
    pub fn new(model_dim: usize, num_heads: usize, num_layers: usize) -> Self {
        Self {
            model_dim,
            num_heads,
            num_layers,
            ffn_dim: 4 * model_dim,
            positional: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.model_dim == 0 || self.num_heads == 0 || self.ffn_dim == 0 {
            return Err(Error::arg("encoder dimensions must be positive"));
        }
        if self.model_dim % self.num_heads != 0 {
            return Err(Error::arg(format!(
                "model dim {} is not divisible by {} heads",
                self.model_dim, self.num_heads
            )));
        }
        Ok(())
    }
}

/// Multi-head scaled dot-product self-attention.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub num_heads: usize,
}

impl MultiHeadAttention {
    pub fn new(b: &mut ParamBuilder, dim: usize, num_heads: usize) -> Self {
        Self {
            q: Linear::new(&mut b.scope("q"), dim, dim),
            k: Linear::new(&mut b.scope("k"), dim, dim),
            v: Linear::new(&mut b.scope("v"), dim, dim),
            out: Linear::new(&mut b.scope("out"), dim, dim),
            num_heads,
        }
    }

    /// Attention over the columns of `x`. Each head's `[query × key]`
    /// probability matrix is appended to `probs` when given.
    pub fn forward<S: Real>(
        &self,
        t: &mut Tape<S>,
        p: &ParamSet,
        x: NodeId,
        mut probs: Option<&mut Vec<NodeId>>,
    ) -> Result<NodeId> {
        let dim = self.q.out_dim;
        let dh = dim / self.num_heads;
        let q = self.q.forward(t, p, x)?;
        let k = self.k.forward(t, p, x)?;
        let v = self.v.forward(t, p, x)?;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut heads = Vec::with_capacity(self.num_heads);
        for h in 0..self.num_heads {
            let qh = t.slice_rows(q, h * dh, dh)?;
            let kh = t.slice_rows(k, h * dh, dh)?;
            let vh = t.slice_rows(v, h * dh, dh)?;
            let scores = t.matmul(qh, true, kh, false)?;
            let scores = t.scale(scores, scale);
            let pr = t.softmax_rows(scores);
            if let Some(list) = probs.as_deref_mut() {
                list.push(pr);
            }
            heads.push(t.matmul(vh, false, pr, true)?);
        }
        let cat = t.concat_rows(&heads)?;
        self.out.forward(t, p, cat)
    }
}

/// Pre-norm block: `x + attn(ln(x))`, then `x + ffn(ln(x))`.
#[derive(Debug, Clone)]
pub struct EncoderBlock {
    pub ln1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
}

impl EncoderBlock {
    pub fn new(b: &mut ParamBuilder, cfg: &EncoderConfig) -> Self {
        Self {
            ln1: LayerNorm::new(&mut b.scope("ln1"), cfg.model_dim),
            attn: MultiHeadAttention::new(&mut b.scope("attn"), cfg.model_dim, cfg.num_heads),
            ln2: LayerNorm::new(&mut b.scope("ln2"), cfg.model_dim),
            ff1: Linear::new(&mut b.scope("ff1"), cfg.model_dim, cfg.ffn_dim),
            ff2: Linear::new(&mut b.scope("ff2"), cfg.ffn_dim, cfg.model_dim),
        }
    }

    pub fn forward<S: Real>(
        &self,
        t: &mut Tape<S>,
        p: &ParamSet,
        x: NodeId,
        probs: Option<&mut Vec<NodeId>>,
    ) -> Result<NodeId> {
        let h = self.ln1.forward(t, p, x)?;
        let h = self.attn.forward(t, p, h, probs)?;
        let x = t.add(x, h)?;
        let h = self.ln2.forward(t, p, x)?;
        let h = self.ff1.forward(t, p, h)?;
        let h = t.relu(h);
        let h = self.ff2.forward(t, p, h)?;
        t.add(x, h)
    }
}

/// Sinusoidal position table, `[dim × len]`.
#[derive(Debug, Clone, Copy)]
pub struct PositionalEncoding;

impl PositionalEncoding {
    pub fn table<S: Real>(dim: usize, len: usize) -> Vec<S> {
        let mut out = alloc::vec![S::zero(); dim * len];
        for i in 0..dim {
            let pair = (i / 2) as f64;
            let rate = 1.0 / Float::powf(10000.0f64, 2.0 * pair / dim as f64);
            for pos in 0..len {
                let a = pos as f64 * rate;
                let v = if i % 2 == 0 { Float::sin(a) } else { Float::cos(a) };
                out[i * len + pos] = S::from_f64(v);
            }
        }
        out
    }
}

/// Stack of pre-norm blocks with a final layer norm.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub cfg: EncoderConfig,
    pub blocks: Vec<EncoderBlock>,
    pub norm: LayerNorm,
}

impl Encoder {
    pub fn new(b: &mut ParamBuilder, cfg: EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        let blocks = (0..cfg.num_layers)
            .map(|i| EncoderBlock::new(&mut b.scope(&format!("block{i}")), &cfg))
            .collect();
        Ok(Self {
            cfg,
            blocks,
            norm: LayerNorm::new(&mut b.scope("norm"), cfg.model_dim),
        })
    }

    pub fn forward<S: Real>(
        &self,
        t: &mut Tape<S>,
        p: &ParamSet,
        x: NodeId,
        mut probs: Option<&mut Vec<NodeId>>,
    ) -> Result<NodeId> {
        let (d, len) = t.shape(x);
        if d != self.cfg.model_dim {
            return Err(Error::arg(format!(
                "encoder configured for dim {}, input has {d}",
                self.cfg.model_dim
            )));
        }
        if len == 0 {
            return Err(Error::arg("encoder input has no time steps"));
        }
        let mut x = x;
        if self.cfg.positional {
            let pe = t.constant_s(d, len, PositionalEncoding::table(d, len))?;
            x = t.add(x, pe)?;
        }
        for block in &self.blocks {
            x = block.forward(t, p, x, probs.as_deref_mut())?;
        }
        self.norm.forward(t, p, x)
    }
}

/// Two kernel-5 convolutions with ReLU after each, channels `in → D → D`.
/// Stride 2 shortens `L` to `L/4`; stride 1 preserves it.
#[derive(Debug, Clone)]
pub struct PreNet {
    pub conv1: Conv1d,
    pub conv2: Conv1d,
}

impl PreNet {
    pub const KERNEL: usize = 5;

    pub fn new(b: &mut ParamBuilder, in_dim: usize, dim: usize, stride: usize) -> Self {
        let pad = Self::KERNEL / 2;
        Self {
            conv1: Conv1d::new(&mut b.scope("conv1"), in_dim, dim, Self::KERNEL, stride, pad),
            conv2: Conv1d::new(&mut b.scope("conv2"), dim, dim, Self::KERNEL, stride, pad),
        }
    }

    pub fn stride(&self) -> usize {
        self.conv1.stride
    }

    pub fn forward<S: Real>(&self, t: &mut Tape<S>, p: &ParamSet, x: NodeId) -> Result<NodeId> {
        let len = t.shape(x).1;
        let step = self.stride() * self.stride();
        if len == 0 || len % step != 0 {
            return Err(Error::arg(format!(
                "pre-net input length {len} must be a positive multiple of {step}"
            )));
        }
        let h = self.conv1.forward(t, p, x)?;
        let h = t.relu(h);
        let h = self.conv2.forward(t, p, h)?;
        Ok(t.relu(h))
    }
}

/// Per-timestep feed-forward `C → D → D` with ReLU between.
#[derive(Debug, Clone)]
pub struct PostNet {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl PostNet {
    pub fn new(b: &mut ParamBuilder, in_dim: usize, dim: usize) -> Self {
        Self {
            fc1: Linear::new(&mut b.scope("fc1"), in_dim, dim),
            fc2: Linear::new(&mut b.scope("fc2"), dim, dim),
        }
    }

    pub fn forward<S: Real>(&self, t: &mut Tape<S>, p: &ParamSet, x: NodeId) -> Result<NodeId> {
        let h = self.fc1.forward(t, p, x)?;
        let h = t.relu(h);
        self.fc2.forward(t, p, h)
    }
}
