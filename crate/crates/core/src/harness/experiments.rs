//! Experiment drivers: model comparison, quantum and window sweeps, ablation.
//!
//! Cells run one after another; every cell derives its own seeds and works on
//! private copies, so the order does not affect results.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::metrics::Metrics;
use super::train::{evaluate, train, TrainConfig};
use crate::attack::{adversarial_training, robustness_eval, AdvTrainConfig, AttackConfig, AttackMethod, RobustnessReport, Threat};
use crate::data::{
    augment, label_trajectories, stratified_split, windows_dataset, AugmentConfig, Dataset, LabelConfig, LabelMethod, Trajectory,
};
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, Variant};
use crate::quantum::CircuitSpec;
use crate::rng::derive_seed;

/// Held-out share for every experiment split.
pub const TEST_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

pub fn mean_std(xs: &[f64]) -> MeanStd {
    if xs.is_empty() {
        return MeanStd { mean: f64::NAN, std: f64::NAN };
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() < 2 { 0.0 } else { libm::sqrt(xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)) };
    MeanStd { mean, std }
}

/// Stratified 80/20 split whose shuffle depends only on `seed`.
pub fn split_dataset(data: &Dataset, seed: u64) -> (Dataset, Dataset) {
    let (tr, te) = stratified_split(&data.labels, TEST_FRACTION, derive_seed(seed, "split"));
    (data.subset(&tr), data.subset(&te))
}

/// Stratified subset of at most `n` samples.
pub fn eval_subset(data: &Dataset, n: usize, seed: u64) -> Dataset {
    if n >= data.len() {
        return data.clone();
    }
    let (_, keep) = stratified_split(&data.labels, n as f64 / data.len() as f64, derive_seed(seed, "eval-subset"));
    data.subset(&keep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub variant: Variant,
    pub seed: u64,
    /// Held-out metrics after the last epoch.
    pub metrics: Metrics,
    pub loss_trace: Vec<f64>,
}

/// Splits `data` by `seed`, trains a fresh model and scores it on the split's
/// test part.
pub fn train_run(data: &Dataset, model_cfg: &ModelConfig, train_cfg: &TrainConfig, seed: u64) -> Result<(Model, RunRecord)> {
    let (tr, te) = split_dataset(data, seed);
    let mut cfg = model_cfg.clone();
    cfg.seq_len = data.seq_len;
    cfg.feature_dim = data.feature_dim;
    let model_seed = derive_seed(seed, "model");
    let mut model = Model::new(cfg, model_seed)?;
    let report = train(&mut model, &tr, None, train_cfg, model_seed, true)?;
    let metrics = evaluate(&model, &te)?;
    let variant = model.config.variant;
    Ok((model, RunRecord { variant, seed, metrics, loss_trace: report.loss_trace }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: Variant,
    pub accuracy: MeanStd,
    pub f1: MeanStd,
    /// Over the runs where AUC is defined.
    pub auc: MeanStd,
}

impl SummaryRow {
    fn from_runs(variant: Variant, runs: &[&RunRecord]) -> Self {
        let pick = |f: &dyn Fn(&Metrics) -> Option<f64>| -> Vec<f64> { runs.iter().filter_map(|r| f(&r.metrics)).collect() };
        Self {
            variant,
            accuracy: mean_std(&pick(&|m| Some(m.accuracy))),
            f1: mean_std(&pick(&|m| Some(m.f1))),
            auc: mean_std(&pick(&|m| m.auc)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// One row per requested variant, in request order.
    pub rows: Vec<SummaryRow>,
    /// Variant-major, then seed order.
    pub runs: Vec<RunRecord>,
}

/// Trains every variant with every seed under the same budget.
pub fn compare_models(
    data: &Dataset,
    base: &ModelConfig,
    variants: &[Variant],
    seeds: &[u64],
    train_cfg: &TrainConfig,
) -> Result<Comparison> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("comparison needs at least one seed".into()));
    }
    let mut runs = Vec::new();
    for &v in variants {
        for &s in seeds {
            runs.push(train_run(data, &base.with_variant(v), train_cfg, s)?.1);
        }
    }
    let rows = variants
        .iter()
        .enumerate()
        .map(|(i, &v)| SummaryRow::from_runs(v, &runs[i * seeds.len()..(i + 1) * seeds.len()].iter().collect::<Vec<_>>()))
        .collect();
    Ok(Comparison { rows, runs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub n_qubits: usize,
    pub n_layers: usize,
    pub seed: u64,
    pub metrics: Metrics,
}

/// QSTAformer over every `qubits x layers x seeds` combination.
pub fn sweep_quantum(
    data: &Dataset,
    base: &ModelConfig,
    qubits: &[usize],
    layers: &[usize],
    seeds: &[u64],
    train_cfg: &TrainConfig,
) -> Result<Vec<SweepCell>> {
    let mut out = Vec::with_capacity(qubits.len() * layers.len() * seeds.len());
    for &q in qubits {
        for &l in layers {
            let cfg = ModelConfig {
                circuit: CircuitSpec { n_qubits: q, n_layers: l, ..base.circuit },
                ..base.with_variant(Variant::Qstaformer)
            };
            cfg.validate()?;
            for &s in seeds {
                let (_, run) = train_run(data, &cfg, train_cfg, s)?;
                out.push(SweepCell { n_qubits: q, n_layers: l, seed: s, metrics: run.metrics });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub window_s: f64,
    pub steps: usize,
    pub accuracy: MeanStd,
    pub runs: Vec<RunRecord>,
}

/// Steps covering `window_s` at `rate_hz`; at least 2.
pub fn window_steps(window_s: f64, rate_hz: f64) -> Result<usize> {
    let l = libm::round(window_s * rate_hz);
    if !(l >= 2.0) {
        return Err(Error::InvalidArgument(format!("window of {} s at {} Hz gives fewer than 2 samples", window_s, rate_hz)));
    }
    Ok(l as usize)
}

/// Retrains on the first `round(w * rate_hz)` steps of every window for each
/// `w` in `windows_s`.
pub fn sweep_sampling_window(
    data: &Dataset,
    windows_s: &[f64],
    rate_hz: f64,
    base: &ModelConfig,
    seeds: &[u64],
    train_cfg: &TrainConfig,
) -> Result<Vec<WindowRow>> {
    let mut out = Vec::with_capacity(windows_s.len());
    for &w in windows_s {
        let steps = window_steps(w, rate_hz)?;
        if steps > data.seq_len {
            return Err(Error::InvalidArgument(format!(
                "window of {} s needs {} steps but samples hold {}",
                w, steps, data.seq_len
            )));
        }
        let cut = data.truncate_steps(steps)?;
        let mut runs = Vec::with_capacity(seeds.len());
        for &s in seeds {
            runs.push(train_run(&cut, base, train_cfg, s)?.1);
        }
        let acc: Vec<f64> = runs.iter().map(|r| r.metrics.accuracy).collect();
        out.push(WindowRow { window_s: w, steps, accuracy: mean_std(&acc), runs });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationPipeline {
    /// Heuristic plus end-point labels, originals only.
    QstaformerOnly,
    /// SFCM labels, originals only.
    PlusSfcm,
    /// Heuristic plus end-point labels, LSGAN augmentation.
    PlusLsgan,
    /// SFCM labels and LSGAN augmentation.
    FullHybrid,
}

impl AblationPipeline {
    pub const ALL: [AblationPipeline; 4] =
        [AblationPipeline::QstaformerOnly, AblationPipeline::PlusSfcm, AblationPipeline::PlusLsgan, AblationPipeline::FullHybrid];

    pub fn as_str(&self) -> &'static str {
        match self {
            AblationPipeline::QstaformerOnly => "qstaformer_only",
            AblationPipeline::PlusSfcm => "plus_sfcm",
            AblationPipeline::PlusLsgan => "plus_lsgan",
            AblationPipeline::FullHybrid => "full_hybrid",
        }
    }

    pub fn uses_sfcm(&self) -> bool {
        matches!(self, AblationPipeline::PlusSfcm | AblationPipeline::FullHybrid)
    }

    pub fn uses_lsgan(&self) -> bool {
        matches!(self, AblationPipeline::PlusLsgan | AblationPipeline::FullHybrid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationConfig {
    pub label: LabelConfig,
    pub augment: AugmentConfig,
    pub window_steps: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Adversarial fine-tuning applied in every pipeline; `None` skips it.
    pub adversarial: Option<AdvTrainConfig>,
    /// Budget of the MI-FGSM, PGD and C&W evaluation attacks.
    pub epsilon: f64,
    /// Test samples attacked per run.
    pub eval_samples: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            label: LabelConfig::default(),
            augment: AugmentConfig::default(),
            window_steps: 10,
            model: ModelConfig::default(),
            train: TrainConfig { epochs: 15, ..TrainConfig::default() },
            adversarial: Some(AdvTrainConfig {
                train: TrainConfig { epochs: 2, ..TrainConfig::default() },
                ..AdvTrainConfig::default()
            }),
            epsilon: 0.03,
            eval_samples: 300,
        }
    }
}

/// Labeled originals and generated samples under both labelings.
#[derive(Debug, Clone)]
pub struct AblationInputs {
    pub naive_real: Dataset,
    pub sfcm_real: Dataset,
    pub naive_synthetic: Dataset,
    pub sfcm_synthetic: Dataset,
}

impl AblationInputs {
    pub fn build(trajs: &[Trajectory], cfg: &AblationConfig, seed: u64) -> Result<Self> {
        let naive = label_trajectories(trajs, &LabelConfig { method: LabelMethod::Naive, ..cfg.label.clone() })?;
        let sfcm = label_trajectories(trajs, &LabelConfig { method: LabelMethod::Sfcm, ..cfg.label.clone() })?;
        let naive_real = windows_dataset(trajs, &naive.labels, cfg.window_steps)?;
        let sfcm_real = windows_dataset(trajs, &sfcm.labels, cfg.window_steps)?;
        let aug_seed = derive_seed(seed, "augment");
        let naive_synthetic = augment(&naive_real, &cfg.augment, aug_seed)?.synthetic;
        let sfcm_synthetic = augment(&sfcm_real, &cfg.augment, aug_seed)?.synthetic;
        Ok(Self { naive_real, sfcm_real, naive_synthetic, sfcm_synthetic })
    }

    pub fn dataset(&self, p: AblationPipeline) -> Result<Dataset> {
        let real = if p.uses_sfcm() { &self.sfcm_real } else { &self.naive_real };
        if p.uses_lsgan() {
            real.concat(if p.uses_sfcm() { &self.sfcm_synthetic } else { &self.naive_synthetic })
        } else {
            Ok(real.clone())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub seed: u64,
    pub n_samples: usize,
    pub report: RobustnessReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub pipeline: AblationPipeline,
    pub clean_accuracy: MeanStd,
    pub robust_accuracy: MeanStd,
    /// Mean clean minus mean robust accuracy.
    pub robustness_drop: f64,
    pub runs: Vec<AblationRun>,
}

/// Evaluation grid of the ablation: the three attacks, white-box, one budget.
pub fn ablation_grid(epsilon: f64) -> Vec<(AttackConfig, Threat)> {
    crate::attack::attack_grid(&[AttackMethod::Mifgsm, AttackMethod::Pgd, AttackMethod::Cw], &[Threat::WhiteBox], &[epsilon])
}

/// Runs the four pipelines for every seed: split, train, optional adversarial
/// fine-tuning, then clean and attacked accuracy on a held-out subset.
pub fn ablation_suite(inputs: &AblationInputs, cfg: &AblationConfig, seeds: &[u64]) -> Result<Vec<AblationRow>> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("ablation needs at least one seed".into()));
    }
    let grid = ablation_grid(cfg.epsilon);
    let mut rows = Vec::with_capacity(4);
    for p in AblationPipeline::ALL {
        let data = inputs.dataset(p)?;
        let mut runs = Vec::with_capacity(seeds.len());
        for &s in seeds {
            let (tr, te) = split_dataset(&data, s);
            let mut mcfg = cfg.model.clone();
            mcfg.seq_len = data.seq_len;
            mcfg.feature_dim = data.feature_dim;
            let model_seed = derive_seed(s, "model");
            let mut model = Model::new(mcfg, model_seed)?;
            train(&mut model, &tr, None, &cfg.train, model_seed, true)?;
            if let Some(adv) = &cfg.adversarial {
                adversarial_training(&mut model, &tr, None, adv, derive_seed(s, "adversarial"))?;
            }
            let ev = eval_subset(&te, cfg.eval_samples, s);
            let report = robustness_eval(&model, None, &ev, &grid, derive_seed(s, "attack"))?;
            runs.push(AblationRun { seed: s, n_samples: data.len(), report });
        }
        let clean: Vec<f64> = runs.iter().map(|r| r.report.clean_accuracy).collect();
        let robust: Vec<f64> = runs.iter().map(|r| r.report.mean_robust_accuracy).collect();
        let (c, r) = (mean_std(&clean), mean_std(&robust));
        rows.push(AblationRow { pipeline: p, clean_accuracy: c, robust_accuracy: r, robustness_drop: c.mean - r.mean, runs });
    }
    Ok(rows)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{simulate_trajectories, GeneratorConfig, LsganConfig, ScenarioGrid};
    use crate::rng::SeededRng;
    use alloc::vec;

    fn tiny_model() -> ModelConfig {
        ModelConfig {
            seq_len: 4,
            feature_dim: 2,
            d_model: 8,
            n_heads: 2,
            d_ff: 8,
            n_layers: 1,
            circuit: CircuitSpec::new(2, 1),
            ..ModelConfig::default()
        }
    }

    fn blobs(n: usize, l: usize) -> Dataset {
        let mut rng = SeededRng::new(5);
        let mut xs = Vec::new();
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        for &y in &labels {
            for _ in 0..l * 2 {
                xs.push(if y == 1 { 1.0 } else { -1.0 } + 0.3 * rng.normal());
            }
        }
        Dataset::new(l, 2, xs, labels).unwrap()
    }

    fn quick() -> TrainConfig {
        TrainConfig { epochs: 2, lr_max: 1e-2, lr_min: 1e-3, ..TrainConfig::default() }
    }

    #[test]
    fn mean_std_values() {
        let m = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!((m.mean, m.std), (2.0, 1.0));
        assert_eq!(mean_std(&[4.0]).std, 0.0);
        assert!(mean_std(&[]).mean.is_nan());
    }

    #[test]
    fn comparison_covers_each_variant_and_seed() {
        let data = blobs(40, 4);
        let cmp = compare_models(&data, &tiny_model(), &[Variant::Lstm, Variant::Lstm, Variant::Qstaformer], &[1, 2], &quick()).unwrap();
        assert_eq!(cmp.runs.len(), 6);
        assert_eq!(cmp.rows.len(), 3);
        assert_eq!(cmp.rows[0], cmp.rows[1]);
        assert_eq!(cmp.runs[0], cmp.runs[2]);
        assert!(cmp.runs.iter().all(|r| r.loss_trace.len() == 2));
        assert!(compare_models(&data, &tiny_model(), &[Variant::Lstm], &[], &quick()).is_err());
    }

    #[test]
    fn quantum_sweep_grid_size() {
        let data = blobs(20, 4);
        let one = sweep_quantum(&data, &tiny_model(), &[2], &[1], &[3], &quick()).unwrap();
        assert_eq!(one.len(), 1);
        let grid = sweep_quantum(&data, &tiny_model(), &[2, 3], &[1, 2], &[1, 2], &TrainConfig { epochs: 0, ..quick() }).unwrap();
        assert_eq!(grid.len(), 8);
        assert_eq!((grid[7].n_qubits, grid[7].n_layers, grid[7].seed), (3, 2, 2));
    }

    #[test]
    fn window_sweep_steps_and_limits() {
        assert_eq!(window_steps(0.09, 100.0).unwrap(), 9);
        assert!(window_steps(0.01, 100.0).is_err());
        let data = blobs(30, 6);
        let rows = sweep_sampling_window(&data, &[0.03, 0.06], 100.0, &tiny_model(), &[4], &quick()).unwrap();
        assert_eq!((rows[0].steps, rows[1].steps), (3, 6));
        let (_, full) = train_run(&data, &tiny_model(), &quick(), 4).unwrap();
        assert_eq!(rows[1].runs[0], full);
        assert!(sweep_sampling_window(&data, &[0.2], 100.0, &tiny_model(), &[4], &quick()).is_err());
    }

    #[test]
    fn ablation_has_four_rows_with_exact_drop() {
        let trajs = simulate_trajectories(&ScenarioGrid::default(), &GeneratorConfig::default(), 1, 2).unwrap();
        let cfg = AblationConfig {
            augment: AugmentConfig {
                lsgan: LsganConfig { max_iterations: 3, batch_size: 8, generator_hidden: vec![8], discriminator_hidden: vec![8], ..LsganConfig::default() },
                target_total: Some(160),
                ..AugmentConfig::default()
            },
            window_steps: 4,
            model: ModelConfig { feature_dim: 9, ..tiny_model() },
            train: TrainConfig { epochs: 1, ..quick() },
            adversarial: Some(AdvTrainConfig { train: TrainConfig { epochs: 1, ..quick() }, ..AdvTrainConfig::default() }),
            eval_samples: 10,
            ..AblationConfig::default()
        };
        let inputs = AblationInputs::build(&trajs, &cfg, 1).unwrap();
        assert_eq!(inputs.dataset(AblationPipeline::FullHybrid).unwrap().len(), 160);
        assert_eq!(inputs.dataset(AblationPipeline::PlusSfcm).unwrap().len(), 120);
        let rows = ablation_suite(&inputs, &cfg, &[1]).unwrap();
        assert_eq!(rows.len(), 4);
        for (row, p) in rows.iter().zip(AblationPipeline::ALL) {
            assert_eq!(row.pipeline, p);
            assert_eq!(row.robustness_drop, row.clean_accuracy.mean - row.robust_accuracy.mean);
            assert_eq!(row.runs[0].report.cells.len(), 3);
        }
    }
}
