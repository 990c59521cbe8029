//! Adam / AdamW, the cosine learning-rate schedule, and global-norm clipping.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// `true` for AdamW (decay applied to the weights), `false` for Adam with
    /// L2 decay folded into the gradient.
    pub decoupled: bool,
}

impl AdamConfig {
    pub fn adam() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0, decoupled: false }
    }

    pub fn adamw(weight_decay: f64) -> Self {
        Self { weight_decay, decoupled: true, ..Self::adam() }
    }
}

/// Moment estimates for every parameter of one store.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let m: Vec<Vec<f64>> = store.iter().map(|p| vec![0.0; p.value.len()]).collect();
        Self { config, v: m.clone(), m, step: 0 }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update with learning rate `lr` using the gradients held in the
    /// store. Fails without touching any weight if a gradient is not finite.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) -> Result<()> {
        if self.m.len() != store.len() {
            return Err(Error::InvalidArgument(format!(
                "optimizer tracks {} parameters, store has {}",
                self.m.len(),
                store.len()
            )));
        }
        for p in store.iter() {
            if p.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::InvalidArgument(format!("non-finite gradient in parameter '{}'", p.name)));
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as f64;
        let bc1 = 1.0 - libm::pow(c.beta1, t);
        let bc2 = 1.0 - libm::pow(c.beta2, t);
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let w = p.value.data_mut();
            for k in 0..w.len() {
                let mut g = p.grad[k];
                if c.decoupled {
                    w[k] -= lr * c.weight_decay * w[k];
                } else {
                    g += c.weight_decay * w[k];
                }
                m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g;
                v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g * g;
                let mh = m[k] / bc1;
                let vh = v[k] / bc2;
                w[k] -= lr * mh / (libm::sqrt(vh) + c.eps);
            }
        }
        Ok(())
    }
}

/// Cosine decay from `lr_max` at epoch 0 to `lr_min` at the final epoch.
pub fn cosine_lr(lr_max: f64, lr_min: f64, epoch: usize, epochs: usize) -> f64 {
    if epochs <= 1 {
        return lr_max;
    }
    let frac = epoch.min(epochs - 1) as f64 / (epochs - 1) as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + libm::cos(core::f64::consts::PI * frac))
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(store: &mut ParamStore, max_norm: f64) -> f64 {
    let sq: f64 = store.iter().flat_map(|p| p.grad.iter()).map(|g| g * g).sum();
    let norm = libm::sqrt(sq);
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for p in store.iter_mut() {
            p.grad.iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}
