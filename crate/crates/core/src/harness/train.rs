use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::metrics::Metrics;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{argmax_rows, Classifier, Model, Normalizer, ParamMode};
use crate::optim::{clip_grad_norm, cosine_lr, Adam, AdamConfig};
use crate::rng::SeededRng;
use crate::tensor::{Tape, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub weight_decay: f64,
    /// Global gradient-norm cap; 0 disables clipping.
    pub clip_norm: f64,
    /// Evaluate on the held-out set after every epoch.
    #[serde(default)]
    pub eval_each_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 55,
            batch_size: 32,
            lr_max: 1e-4,
            lr_min: 1e-5,
            weight_decay: 1e-2,
            clip_norm: 1.0,
            eval_each_epoch: false,
        }
    }
}

/// Per-batch hook: may rewrite the batch inputs in place before the update
/// (adversarial example mixing). Receives the current model, the batch
/// inputs and labels, and a batch-local RNG.
pub type BatchHook<'a> = dyn FnMut(&Model, &mut [f64], &[usize], &mut SeededRng) -> Result<()> + 'a;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub loss_trace: Vec<f64>,
    /// Held-out metrics per epoch when requested.
    pub epoch_metrics: Vec<Metrics>,
    pub final_metrics: Option<Metrics>,
}

/// Minibatch AdamW with a cosine learning-rate schedule. The model's
/// normalizer is refit on `train` when `fit_normalizer` is set.
pub fn train(
    model: &mut Model,
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    cfg: &TrainConfig,
    seed: u64,
    fit_normalizer: bool,
) -> Result<TrainReport> {
    train_with_hook(model, train_set, test_set, cfg, seed, fit_normalizer, None)
}

pub fn train_with_hook(
    model: &mut Model,
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    cfg: &TrainConfig,
    seed: u64,
    fit_normalizer: bool,
    mut hook: Option<&mut BatchHook<'_>>,
) -> Result<TrainReport> {
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    let (l, f) = (train_set.seq_len, train_set.feature_dim);
    if f != model.config.feature_dim {
        return Err(Error::Shape {
            op: "train",
            detail: format!("dataset has {} features, model expects {}", f, model.config.feature_dim),
        });
    }
    if fit_normalizer {
        model.normalizer = Normalizer::fit(&train_set.xs, f);
    }
    let mut opt = Adam::new(AdamConfig::adamw(cfg.weight_decay), &model.params);
    let mut rng = SeededRng::for_stage(seed, "train");
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let per = l * f;
    let c = model.config.n_classes;
    let mut report = TrainReport { loss_trace: Vec::with_capacity(cfg.epochs), epoch_metrics: Vec::new(), final_metrics: None };
    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(cfg.lr_max, cfg.lr_min, epoch, cfg.epochs);
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut n_batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let nb = batch.len();
            let mut xs = Vec::with_capacity(nb * per);
            for &i in batch {
                xs.extend_from_slice(train_set.sample(i));
            }
            let labels: Vec<usize> = batch.iter().map(|&i| train_set.labels[i]).collect();
            if let Some(h) = hook.as_deref_mut() {
                let mut brng = rng.fork("batch");
                h(model, &mut xs, &labels, &mut brng)?;
            }
            let mut tape = Tape::new();
            let x = tape.constant(Tensor::new(alloc::vec![nb, l, f], xs)?);
            let logits = model.forward(&mut tape, x, ParamMode::Train)?;
            let loss = match &train_set.soft {
                Some(soft) => {
                    let t: Vec<f64> = batch.iter().flat_map(|&i| soft[i * c..(i + 1) * c].iter().copied()).collect();
                    tape.soft_cross_entropy(logits, &t)?
                }
                None => tape.cross_entropy(logits, &labels)?,
            };
            let lv = tape.value(loss).data()[0];
            if !lv.is_finite() {
                return Err(Error::InvalidArgument(format!("training diverged: loss is {} at epoch {}", lv, epoch)));
            }
            tape.backward(loss)?;
            model.params.zero_grad();
            model.params.accumulate_grads(&tape);
            if cfg.clip_norm > 0.0 {
                clip_grad_norm(&mut model.params, cfg.clip_norm);
            }
            opt.step(&mut model.params, lr).map_err(|e| Error::InvalidArgument(format!("epoch {}: {}", epoch, e)))?;
            loss_sum += lv;
            n_batches += 1;
        }
        report.loss_trace.push(loss_sum / n_batches as f64);
        if cfg.eval_each_epoch {
            if let Some(t) = test_set {
                report.epoch_metrics.push(evaluate(model, t)?);
            }
        }
    }
    if let Some(t) = test_set {
        report.final_metrics = Some(evaluate(model, t)?);
    }
    Ok(report)
}

/// Accuracy / F1 / AUC of `model` on a labeled set.
pub fn evaluate(model: &dyn Classifier, data: &Dataset) -> Result<Metrics> {
    let c = model.n_classes();
    let logits = model.logits(&data.xs, data.len())?;
    let probs = crate::model::softmax_rows(&logits, c);
    let preds = argmax_rows(&logits, c);
    let scores: Vec<f64> = probs.chunks(c).map(|r| r[1]).collect();
    Ok(Metrics::compute(&data.labels, &preds, &scores))
}
