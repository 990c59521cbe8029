//! Task-level check of generated data: train on one source, test on the other.

use alloc::format;

use serde::{Deserialize, Serialize};

use super::dataset::{stratified_split, Dataset};
use crate::error::{Error, Result};
use crate::harness::{evaluate, train, Metrics, TrainConfig};
use crate::model::{Model, ModelConfig, Variant};
use crate::rng::derive_seed;

/// Share of each set held out for testing.
pub const TSTR_TEST_FRACTION: f64 = 0.2;

/// Absolute differences from the real-real baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricDeltas {
    pub accuracy: f64,
    pub f1: f64,
    pub auc: Option<f64>,
}

impl MetricDeltas {
    fn between(a: &Metrics, base: &Metrics) -> Self {
        Self {
            accuracy: (a.accuracy - base.accuracy).abs(),
            f1: (a.f1 - base.f1).abs(),
            auc: match (a.auc, base.auc) {
                (Some(x), Some(y)) => Some((x - y).abs()),
                _ => None,
            },
        }
    }

    pub fn max(&self) -> f64 {
        self.accuracy.max(self.f1).max(self.auc.unwrap_or(0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TstrReport {
    /// Train on real, test on real.
    pub rr: Metrics,
    /// Train on real, test on synthetic.
    pub tstr: Metrics,
    /// Train on synthetic, test on real.
    pub trts: Metrics,
    pub tstr_delta: MetricDeltas,
    pub trts_delta: MetricDeltas,
}

impl TstrReport {
    pub fn max_delta(&self) -> f64 {
        self.tstr_delta.max().max(self.trts_delta.max())
    }
}

/// Classifier used for the check unless the caller picks another.
pub fn default_tstr_model() -> ModelConfig {
    ModelConfig::default().with_variant(Variant::Lstm)
}

/// Both sets are split 80/20 (stratified, same seed). One model trained on the
/// real training part is scored on both test parts; a second model with the
/// same initialization and schedule is trained on the synthetic training part
/// and scored on the real test part.
pub fn tstr_trts_eval(
    real: &Dataset,
    synthetic: &Dataset,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<TstrReport> {
    if (real.seq_len, real.feature_dim) != (synthetic.seq_len, synthetic.feature_dim) {
        return Err(Error::Shape {
            op: "tstr_trts_eval",
            detail: format!(
                "real windows are {}x{}, synthetic {}x{}",
                real.seq_len, real.feature_dim, synthetic.seq_len, synthetic.feature_dim
            ),
        });
    }
    for (name, d) in [("real", real), ("synthetic", synthetic)] {
        if d.class_counts(model_cfg.n_classes).iter().filter(|&&c| c > 0).count() < 2 {
            return Err(Error::InvalidArgument(format!("{} set holds a single class", name)));
        }
    }
    let split = |d: &Dataset| {
        let (tr, te) = stratified_split(&d.labels, TSTR_TEST_FRACTION, derive_seed(seed, "tstr-split"));
        (d.subset(&tr), d.subset(&te))
    };
    let (real_tr, real_te) = split(real);
    let (syn_tr, syn_te) = split(synthetic);
    let model_seed = derive_seed(seed, "tstr-model");
    let fit = |data: &Dataset| -> Result<Model> {
        let mut m = Model::new(model_cfg.clone(), model_seed)?;
        train(&mut m, data, None, train_cfg, model_seed, true)?;
        Ok(m)
    };
    let on_real = fit(&real_tr)?;
    let rr = evaluate(&on_real, &real_te)?;
    let tstr = evaluate(&on_real, &syn_te)?;
    let trts = evaluate(&fit(&syn_tr)?, &real_te)?;
    Ok(TstrReport {
        tstr_delta: MetricDeltas::between(&tstr, &rr),
        trts_delta: MetricDeltas::between(&trts, &rr),
        rr,
        tstr,
        trts,
    })
}
