use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{attack, AdvBatch, AttackConfig, AttackMethod};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::harness::{train, train_with_hook, TrainConfig, TrainReport};
use crate::model::{argmax_rows, softmax_rows, Classifier, Model, ModelConfig, Variant};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threat {
    WhiteBox,
    GrayBox,
}

impl Threat {
    pub fn as_str(&self) -> &'static str {
        match self {
            Threat::WhiteBox => "white_box",
            Threat::GrayBox => "gray_box",
        }
    }
}

/// Gray-box stand-in: a model fitted only to the target's output
/// probabilities on attacker-held inputs.
#[derive(Debug, Clone)]
pub struct Surrogate {
    pub model: Model,
    trained: bool,
}

impl Surrogate {
    /// Distills `target` into a fresh model of `config`: the target is queried
    /// on `queries` (`n` samples) and its probabilities become soft labels.
    pub fn distill(
        target: &dyn Classifier,
        queries: &[f64],
        n: usize,
        config: ModelConfig,
        train_cfg: &TrainConfig,
        seed: u64,
    ) -> Result<Self> {
        let (l, f) = target.sample_dims();
        if n == 0 {
            return Err(Error::InvalidArgument("surrogate needs at least one query".into()));
        }
        let c = target.n_classes();
        let probs = softmax_rows(&target.logits(queries, n)?, c);
        let labels = argmax_rows(&probs, c);
        let data = Dataset::new(l, f, queries.to_vec(), labels)?.with_soft(probs, c)?;
        let mut model = Model::new(config, crate::rng::derive_seed(seed, "surrogate"))?;
        train(&mut model, &data, None, train_cfg, seed, true)?;
        Ok(Self { model, trained: train_cfg.epochs > 0 })
    }

    /// Transformer baseline with the target's dimensions, 20 epochs.
    pub fn distill_default(target: &Model, queries: &[f64], n: usize, seed: u64) -> Result<Self> {
        let cfg = TrainConfig { epochs: 20, ..TrainConfig::default() };
        Self::distill(target, queries, n, target.config.with_variant(Variant::Transformer), &cfg, seed)
    }

    /// Uses an already trained model as the surrogate.
    pub fn from_model(model: Model) -> Self {
        Self { model, trained: true }
    }

    /// A surrogate that has seen no queries; attacks refuse it.
    pub fn untrained(config: ModelConfig, seed: u64) -> Result<Self> {
        Ok(Self { model: Model::new(config, seed)?, trained: false })
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }
}

/// Crafts examples on the surrogate and scores them on the target.
pub fn gray_box_attack(
    target: &dyn Classifier,
    surrogate: &Surrogate,
    xs: &[f64],
    labels: &[usize],
    cfg: &AttackConfig,
    seed: u64,
) -> Result<AdvBatch> {
    if !surrogate.trained {
        return Err(Error::InvalidArgument("gray-box attack needs a trained surrogate".into()));
    }
    if surrogate.model.sample_dims() != target.sample_dims() || surrogate.model.n_classes() != target.n_classes() {
        return Err(Error::Shape { op: "gray_box_attack", detail: "surrogate and target disagree on input/output shape".into() });
    }
    let mut b = attack(&surrogate.model, xs, labels, cfg, seed)?;
    b.clean_pred = target.predict(xs, labels.len())?;
    b.adv_pred = target.predict(&b.x_adv, labels.len())?;
    Ok(b)
}

/// The cartesian product `methods x threats x epsilons`.
pub fn attack_grid(methods: &[AttackMethod], threats: &[Threat], epsilons: &[f64]) -> Vec<(AttackConfig, Threat)> {
    let mut out = Vec::new();
    for &m in methods {
        for &t in threats {
            for &e in epsilons {
                out.push((AttackConfig::for_method(m, e), t));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessCell {
    pub method: AttackMethod,
    pub threat: Threat,
    pub epsilon: f64,
    pub accuracy: f64,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub clean_accuracy: f64,
    pub cells: Vec<RobustnessCell>,
    pub mean_robust_accuracy: f64,
    /// `clean_accuracy - mean_robust_accuracy`.
    pub robustness_drop: f64,
}

/// Accuracy of `target` under every `(attack, threat)` cell on `data`.
pub fn robustness_eval(
    target: &dyn Classifier,
    surrogate: Option<&Surrogate>,
    data: &Dataset,
    grid: &[(AttackConfig, Threat)],
    seed: u64,
) -> Result<RobustnessReport> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("robustness evaluation needs a nonempty dataset".into()));
    }
    let preds = target.predict(&data.xs, data.len())?;
    let clean_accuracy = preds.iter().zip(&data.labels).filter(|(p, y)| p == y).count() as f64 / data.len() as f64;
    let mut cells = Vec::with_capacity(grid.len());
    for (cfg, threat) in grid {
        let b = match threat {
            Threat::WhiteBox => attack(target, &data.xs, &data.labels, cfg, seed)?,
            Threat::GrayBox => {
                let s = surrogate.ok_or_else(|| Error::InvalidArgument("gray-box cells need a surrogate".into()))?;
                gray_box_attack(target, s, &data.xs, &data.labels, cfg, seed)?
            }
        };
        cells.push(RobustnessCell {
            method: cfg.method,
            threat: *threat,
            epsilon: cfg.epsilon,
            accuracy: b.accuracy(),
            success_rate: b.success_rate(),
        });
    }
    let mean_robust_accuracy =
        if cells.is_empty() { clean_accuracy } else { cells.iter().map(|c| c.accuracy).sum::<f64>() / cells.len() as f64 };
    Ok(RobustnessReport { clean_accuracy, cells, mean_robust_accuracy, robustness_drop: clean_accuracy - mean_robust_accuracy })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdvTrainConfig {
    /// Attacks share the adversarial part of each batch round-robin.
    pub attacks: Vec<AttackConfig>,
    /// Fraction of every batch replaced by freshly generated adversarial examples.
    pub mix_ratio: f64,
    pub train: TrainConfig,
}

impl Default for AdvTrainConfig {
    fn default() -> Self {
        Self {
            attacks: alloc::vec![AttackConfig::pgd(0.03), AttackConfig::mifgsm(0.03)],
            mix_ratio: 0.5,
            train: TrainConfig { epochs: 10, ..TrainConfig::default() },
        }
    }
}

/// Continues training `model` with batches in which `mix_ratio` of the
/// samples are replaced by attacks generated on the current weights.
pub fn adversarial_training(
    model: &mut Model,
    data: &Dataset,
    test: Option<&Dataset>,
    cfg: &AdvTrainConfig,
    seed: u64,
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("adversarial training needs a nonempty dataset".into()));
    }
    if !(0.0..=1.0).contains(&cfg.mix_ratio) {
        return Err(Error::InvalidArgument(format!("mix_ratio must lie in [0, 1], got {}", cfg.mix_ratio)));
    }
    for a in &cfg.attacks {
        a.validate(data.feature_dim)?;
    }
    if cfg.mix_ratio == 0.0 || cfg.attacks.is_empty() {
        return train_with_hook(model, data, test, &cfg.train, seed, false, None);
    }
    let per = data.sample_len();
    let na = cfg.attacks.len();
    let mut hook = |m: &Model, xs: &mut [f64], labels: &[usize], rng: &mut SeededRng| -> Result<()> {
        let nb = labels.len();
        let k = libm::round(cfg.mix_ratio * nb as f64) as usize;
        let mut idx: Vec<usize> = (0..nb).collect();
        rng.shuffle(&mut idx);
        idx.truncate(k);
        idx.sort_unstable();
        for (a, acfg) in cfg.attacks.iter().enumerate() {
            let group: Vec<usize> = idx.iter().skip(a).step_by(na).copied().collect();
            if group.is_empty() {
                continue;
            }
            let mut gx = Vec::with_capacity(group.len() * per);
            for &i in &group {
                gx.extend_from_slice(&xs[i * per..(i + 1) * per]);
            }
            let gl: Vec<usize> = group.iter().map(|&i| labels[i]).collect();
            let b = attack(m, &gx, &gl, acfg, rng.next_u64())?;
            for (j, &i) in group.iter().enumerate() {
                xs[i * per..(i + 1) * per].copy_from_slice(&b.x_adv[j * per..(j + 1) * per]);
            }
        }
        Ok(())
    };
    train_with_hook(model, data, test, &cfg.train, seed, false, Some(&mut hook))
}
