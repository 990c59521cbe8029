//! Gradient-based evasion attacks (MI-FGSM, PGD, C&W) under white-box and
//! gray-box threat models, adversarial training and robustness evaluation.

mod methods;
mod robust;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use methods::{attack, cw_attack, mi_fgsm, pgd};
pub use robust::{
    adversarial_training, attack_grid, gray_box_attack, robustness_eval, AdvTrainConfig, RobustnessCell, RobustnessReport,
    Surrogate, Threat,
};

/// Voltage-magnitude channels of the default 3-bus `[P, Q, U]` layout.
pub const VOLTAGE_CHANNELS: [usize; 3] = [2, 5, 8];

/// Physically plausible voltage-magnitude range in p.u.
pub const VOLTAGE_RANGE: (f64, f64) = (0.0, 1.5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMethod {
    Mifgsm,
    Pgd,
    Cw,
}

impl AttackMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            AttackMethod::Mifgsm => "mifgsm",
            AttackMethod::Pgd => "pgd",
            AttackMethod::Cw => "cw",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CwConfig {
    /// Margin the attack tries to reach past the decision boundary.
    pub confidence: f64,
    pub lr: f64,
    /// Weight of the margin term against the squared perturbation norm.
    pub lambda: f64,
}

impl Default for CwConfig {
    fn default() -> Self {
        Self { confidence: 2.0, lr: 0.05, lambda: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub method: AttackMethod,
    /// l-inf budget for MI-FGSM/PGD. For C&W an RMS budget: the l2 norm of
    /// the perturbation is capped at `epsilon * sqrt(#perturbed entries)`;
    /// infinity leaves it unbounded.
    pub epsilon: f64,
    /// Iterations (C&W optimizer steps for `cw`).
    pub steps: usize,
    /// Defaults to `epsilon / steps` (MI-FGSM) or `epsilon / 4` (PGD).
    #[serde(default)]
    pub step_size: Option<f64>,
    pub momentum: f64,
    pub random_start: bool,
    #[serde(default)]
    pub cw: CwConfig,
    /// Feature channels the attacker may modify.
    pub channels: Vec<usize>,
    /// Range the perturbed channels are clamped to.
    pub clamp: Option<(f64, f64)>,
}

impl AttackConfig {
    pub fn mifgsm(epsilon: f64) -> Self {
        Self {
            method: AttackMethod::Mifgsm,
            epsilon,
            steps: 10,
            step_size: None,
            momentum: 1.0,
            random_start: false,
            cw: CwConfig::default(),
            channels: VOLTAGE_CHANNELS.to_vec(),
            clamp: Some(VOLTAGE_RANGE),
        }
    }

    pub fn pgd(epsilon: f64) -> Self {
        Self { method: AttackMethod::Pgd, momentum: 0.0, random_start: true, ..Self::mifgsm(epsilon) }
    }

    pub fn cw(epsilon: f64) -> Self {
        Self { method: AttackMethod::Cw, steps: 100, momentum: 0.0, ..Self::mifgsm(epsilon) }
    }

    pub fn for_method(method: AttackMethod, epsilon: f64) -> Self {
        match method {
            AttackMethod::Mifgsm => Self::mifgsm(epsilon),
            AttackMethod::Pgd => Self::pgd(epsilon),
            AttackMethod::Cw => Self::cw(epsilon),
        }
    }

    pub fn with_channels(mut self, channels: Vec<usize>) -> Self {
        self.channels = channels;
        self
    }

    pub fn with_clamp(mut self, clamp: Option<(f64, f64)>) -> Self {
        self.clamp = clamp;
        self
    }

    pub fn step_size(&self) -> f64 {
        match (self.step_size, self.method) {
            (Some(a), _) => a,
            (None, AttackMethod::Pgd) => self.epsilon / 4.0,
            (None, _) => self.epsilon / self.steps.max(1) as f64,
        }
    }

    pub fn validate(&self, feature_dim: usize) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::InvalidArgument(m));
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return bad(format!("attack epsilon must be >= 0, got {}", self.epsilon));
        }
        if self.method != AttackMethod::Cw && !self.epsilon.is_finite() {
            return bad(format!("{} needs a finite epsilon", self.method.as_str()));
        }
        if self.method != AttackMethod::Cw && self.steps == 0 {
            return bad(format!("{} needs at least one step", self.method.as_str()));
        }
        if self.steps > 0 && self.epsilon > 0.0 && self.method != AttackMethod::Cw && !(self.step_size() > 0.0) {
            return bad(format!("step size must be positive, got {}", self.step_size()));
        }
        if !(self.momentum >= 0.0) {
            return bad(format!("momentum must be >= 0, got {}", self.momentum));
        }
        if self.method == AttackMethod::Cw && !(self.cw.lr > 0.0 && self.cw.lambda >= 0.0 && self.cw.confidence >= 0.0) {
            return bad(format!("invalid C&W settings {:?}", self.cw));
        }
        if let Some(&c) = self.channels.iter().find(|&&c| c >= feature_dim) {
            return bad(format!("perturbed channel {} out of range for {} features", c, feature_dim));
        }
        if let Some((lo, hi)) = self.clamp {
            if !(lo <= hi) {
                return bad(format!("clamp range ({}, {}) is empty", lo, hi));
            }
        }
        Ok(())
    }

    /// Per-entry mask over one `[L, F]` sample.
    pub fn mask(&self, seq_len: usize, feature_dim: usize) -> Vec<bool> {
        let mut ch = vec![false; feature_dim];
        for &c in &self.channels {
            if c < feature_dim {
                ch[c] = true;
            }
        }
        (0..seq_len * feature_dim).map(|i| ch[i % feature_dim]).collect()
    }
}

/// One adversarial example.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvExample {
    pub x_clean: Vec<f64>,
    pub x_adv: Vec<f64>,
    pub label: usize,
    pub linf: f64,
    pub l2: f64,
    /// The model's prediction changed.
    pub success: bool,
}

/// Attack results for a batch of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvBatch {
    pub x_adv: Vec<f64>,
    pub labels: Vec<usize>,
    pub clean_pred: Vec<usize>,
    pub adv_pred: Vec<usize>,
    pub linf: Vec<f64>,
    pub l2: Vec<f64>,
    /// Mean attack objective over the batch before each step and after the
    /// last one (cross-entropy for MI-FGSM/PGD, the C&W objective otherwise).
    pub loss_trace: Vec<f64>,
}

impl AdvBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn success(&self, i: usize) -> bool {
        self.clean_pred[i] != self.adv_pred[i]
    }

    /// Fraction of initially correct samples whose prediction was flipped.
    pub fn success_rate(&self) -> f64 {
        let correct: Vec<usize> = (0..self.len()).filter(|&i| self.clean_pred[i] == self.labels[i]).collect();
        if correct.is_empty() {
            return 0.0;
        }
        correct.iter().filter(|&&i| self.success(i)).count() as f64 / correct.len() as f64
    }

    /// Accuracy of the adversarial predictions against the true labels.
    pub fn accuracy(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.adv_pred.iter().zip(&self.labels).filter(|(p, y)| p == y).count() as f64 / self.len() as f64
    }

    pub fn example(&self, i: usize, x_clean: &[f64]) -> AdvExample {
        let s = self.x_adv.len() / self.len();
        AdvExample {
            x_clean: x_clean[i * s..(i + 1) * s].to_vec(),
            x_adv: self.x_adv[i * s..(i + 1) * s].to_vec(),
            label: self.labels[i],
            linf: self.linf[i],
            l2: self.l2[i],
            success: self.success(i),
        }
    }

    pub(crate) fn extend(&mut self, other: AdvBatch, weight: f64, total: f64) {
        self.x_adv.extend(other.x_adv);
        self.labels.extend(other.labels);
        self.clean_pred.extend(other.clean_pred);
        self.adv_pred.extend(other.adv_pred);
        self.linf.extend(other.linf);
        self.l2.extend(other.l2);
        if self.loss_trace.is_empty() {
            self.loss_trace = vec![0.0; other.loss_trace.len()];
        }
        for (a, b) in self.loss_trace.iter_mut().zip(other.loss_trace) {
            *a += b * weight / total;
        }
    }
}
