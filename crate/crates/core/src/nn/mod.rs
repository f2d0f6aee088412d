//! Minimal tensors with tape-based reverse-mode differentiation, and the
//! layers the detection models are built from.
//!
//! Parameters are stored as `f32`. A [`Tape`] evaluates in any [`Real`]
//! scalar type: training runs in `f32`, gradient checks in `f64`.
//!
//! Sequence tensors are laid out `[features × time]`, row-major.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;
use core::iter::Sum;
use core::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;

use crate::{Error, Result};

pub mod gradcheck;
mod kernels;
pub mod layers;
pub mod loss;
pub mod optim;
pub mod tape;


pub use layers::{EncoderConfig, PositionalEncoding};
pub use tape::{NodeId, Tape};

/// Scalar type a tape can evaluate in.
pub trait Real:
    Float + AddAssign + SubAssign + MulAssign + DivAssign + Sum + Debug + Default + Send + Sync + 'static
{
    fn from_f32(v: f32) -> Self;
    fn from_f64(v: f64) -> Self;
    fn as_f32(self) -> f32;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f32(v: f32) -> Self {
        v
    }
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f32(self) -> f32 {
        self
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f32(v: f32) -> Self {
        v as f64
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f32(self) -> f32 {
        self as f32
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Dense `f32` tensor, row-major, with an optional gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
    pub grad: Option<Vec<f32>>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!(
                "dims {dims:?} hold {n} values, data has {}",
                data.len()
            )));
        }
        Ok(Self { dims, data, grad: None })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        Self {
            dims,
            data: vec![0.0; n],
            grad: None,
        }
    }

    pub fn from_fn(dims: Vec<usize>, mut f: impl FnMut(usize) -> f32) -> Self {
        let n = dims.iter().product();
        Self {
            dims,
            data: (0..n).map(&mut f).collect(),
            grad: None,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(mut self, dims: Vec<usize>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != self.data.len() {
            return Err(Error::shape(format!("cannot reshape {:?} to {dims:?}", self.dims)));
        }
        self.dims = dims;
        Ok(self)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Row-wise mean over the last axis of a `[rows × cols]` tensor.
pub fn mean_pool(x: &Tensor) -> Result<Tensor> {
    let [rows, cols] = x.dims() else {
        return Err(Error::shape(format!("mean_pool expects a 2-D tensor, got {:?}", x.dims())));
    };
    let (rows, cols) = (*rows, *cols);
    if cols == 0 {
        return Err(Error::shape("mean_pool over an empty time axis"));
    }
    let data = x
        .data()
        .chunks_exact(cols)
        .map(|r| r.iter().map(|&v| v as f64).sum::<f64>() as f32 / cols as f32)
        .collect();
    Tensor::new(vec![rows], data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameter tensors in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn zero_grads(&mut self) {
        for t in &mut self.tensors {
            match &mut t.grad {
                Some(g) => g.iter_mut().for_each(|v| *v = 0.0),
                None => t.grad = Some(vec![0.0; t.data.len()]),
            }
        }
    }

    /// Adds `scale · grads[id]` into each tensor's gradient buffer.
    pub fn accumulate_grads<S: Real>(&mut self, grads: &[Option<Vec<S>>], scale: f32) {
        for (t, g) in self.tensors.iter_mut().zip(grads) {
            let Some(g) = g else { continue };
            let buf = t.grad.get_or_insert_with(|| vec![0.0; t.data.len()]);
            for (b, v) in buf.iter_mut().zip(g) {
                *b += scale * v.as_f32();
            }
        }
    }

    /// Replaces parameter values by name; every name must already exist with
    /// matching dims.
    pub fn load(&mut self, entries: impl IntoIterator<Item = (String, Tensor)>) -> Result<usize> {
        let mut loaded = 0;
        for (name, tensor) in entries {
            let id = self
                .find(&name)
                .ok_or_else(|| Error::arg(format!("unknown parameter {name:?}")))?;
            let slot = &mut self.tensors[id.0];
            if slot.dims != tensor.dims {
                return Err(Error::shape(format!(
                    "parameter {name:?} has dims {:?}, checkpoint has {:?}",
                    slot.dims, tensor.dims
                )));
            }
            slot.data = tensor.data;
            loaded += 1;
        }
        if loaded != self.len() {
            return Err(Error::arg(format!("loaded {loaded} of {} parameters", self.len())));
        }
        Ok(loaded)
    }
}
