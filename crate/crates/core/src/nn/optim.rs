//! Adam optimizer over the gradient buffers of a [`ParamSet`].

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use super::ParamSet;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    step: u32,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &ParamSet) -> Result<Self> {
        if !(cfg.lr > 0.0) {
            return Err(Error::arg("learning rate must be positive"));
        }
        let zeros: Vec<Vec<f32>> = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Ok(Self {
            cfg,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        })
    }

    pub fn steps(&self) -> u32 {
        self.step
    }

    /// Applies one update from each tensor's gradient buffer. Tensors
    /// without a buffer are left unchanged.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::shape("optimizer state does not match parameters"));
        }
        self.step += 1;
        let c = self.cfg;
        let bc1 = 1.0 - Float::powi(c.beta1, self.step as i32);
        let bc2 = 1.0 - Float::powi(c.beta2, self.step as i32);
        for (i, id) in params.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let t = params.get_mut(id);
            let Some(grad) = t.grad.take() else { continue };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, w) in t.data_mut().iter_mut().enumerate() {
                let g = grad[j];
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                *w -= c.lr * mh / (Float::sqrt(vh) + c.eps);
            }
            t.grad = Some(grad);
        }
        Ok(())
    }
}
