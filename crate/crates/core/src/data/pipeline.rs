//! Labeling and augmentation stages that turn trajectories into a training set.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::lsgan::{lsgan_generate, lsgan_train, GanHistory, LsganConfig};
use super::sfcm::{sfcm_fit, SfcmConfig, SfcmResult};
use super::trajectory::{
    cluster_features, heuristic_label, naive_label, standardize_columns, steps_for, windows_dataset, GeneratorConfig,
    ScenarioGrid, Trajectory,
};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

/// Reference scale for the augmentation target: this many originals expand
/// to `REFERENCE_TOTAL` samples with `REFERENCE_STABLE` of them stable.
pub const REFERENCE_ORIGINALS: usize = 2040;
pub const REFERENCE_TOTAL: usize = 10_000;
pub const REFERENCE_STABLE: usize = 5162;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatagenConfig {
    pub grid: ScenarioGrid,
    pub generator: GeneratorConfig,
    pub n_per_cell: usize,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        Self { grid: ScenarioGrid::default(), generator: GeneratorConfig::default(), n_per_cell: 17 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMethod {
    /// Heuristic labels as priors, SFCM for the rest.
    Sfcm,
    /// Heuristic labels, final-sample threshold for undecided cases.
    Naive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelConfig {
    pub method: LabelMethod,
    /// Seconds at the end of each record inspected by the heuristic.
    pub tail_s: f64,
    pub sfcm: SfcmConfig,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self { method: LabelMethod::Sfcm, tail_s: 0.5, sfcm: SfcmConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Labeling {
    pub labels: Vec<usize>,
    pub heuristic: Vec<Option<usize>>,
    pub sfcm: Option<SfcmResult>,
}

/// Labels every trajectory; the heuristic decides clear cases and `cfg.method`
/// settles the rest.
pub fn label_trajectories(trajs: &[Trajectory], cfg: &LabelConfig) -> Result<Labeling> {
    let rate = trajs.first().map_or(1.0, |t| t.rate_hz);
    let tail = steps_for(cfg.tail_s, rate).max(1);
    let heuristic: Vec<Option<usize>> = trajs.iter().map(|t| heuristic_label(t, tail)).collect();
    match cfg.method {
        LabelMethod::Naive => Ok(Labeling { labels: trajs.iter().map(|t| naive_label(t, tail)).collect(), heuristic, sfcm: None }),
        LabelMethod::Sfcm => {
            let raw = cluster_features(trajs, tail);
            let dim = raw.len() / trajs.len().max(1);
            let feats = standardize_columns(&raw, dim.max(1));
            let fit = sfcm_fit(&feats, dim, &heuristic, &cfg.sfcm)?;
            Ok(Labeling { labels: fit.membership.hard_labels(), heuristic, sfcm: Some(fit) })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    pub lsgan: LsganConfig,
    /// Final dataset size; `None` scales the reference expansion to the
    /// number of originals.
    #[serde(default)]
    pub target_total: Option<usize>,
    /// Share of stable samples in the final dataset.
    pub stable_fraction: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            lsgan: LsganConfig::default(),
            target_total: None,
            stable_fraction: REFERENCE_STABLE as f64 / REFERENCE_TOTAL as f64,
        }
    }
}

impl AugmentConfig {
    /// Target count per class (stable, unstable) for `n_real` originals.
    pub fn class_targets(&self, n_real: usize) -> [usize; 2] {
        let total = self.target_total.unwrap_or_else(|| {
            libm::round(REFERENCE_TOTAL as f64 * n_real as f64 / REFERENCE_ORIGINALS as f64) as usize
        });
        let stable = libm::round(total as f64 * self.stable_fraction) as usize;
        [stable, total - stable.min(total)]
    }
}

#[derive(Debug, Clone)]
pub struct Augmented {
    /// Generated samples only.
    pub synthetic: Dataset,
    /// Training history per class that needed samples.
    pub histories: Vec<(usize, GanHistory)>,
}

/// Trains one LSGAN per class on flattened windows and tops each class up to
/// its target count.
pub fn augment(real: &Dataset, cfg: &AugmentConfig, seed: u64) -> Result<Augmented> {
    if !(0.0..=1.0).contains(&cfg.stable_fraction) {
        return Err(Error::InvalidArgument(format!("stable_fraction must lie in [0, 1], got {}", cfg.stable_fraction)));
    }
    let targets = cfg.class_targets(real.len());
    let counts = real.class_counts(2);
    let dim = real.sample_len();
    let mut synthetic = Dataset::empty(real.seq_len, real.feature_dim);
    let mut histories = Vec::new();
    for class in 0..2 {
        let need = targets[class].saturating_sub(counts[class]);
        if need == 0 {
            continue;
        }
        let idx: Vec<usize> = (0..real.len()).filter(|&i| real.labels[i] == class).collect();
        let xs = real.subset(&idx).xs;
        let (g, _, h) = lsgan_train(&xs, dim, &cfg.lsgan, derive_seed(seed, &format!("gan-{}", class)))?;
        let gen = lsgan_generate(&g, need, derive_seed(seed, &format!("gan-sample-{}", class)))?;
        synthetic = synthetic.concat(&Dataset::new(real.seq_len, real.feature_dim, gen, vec![class; need])?)?;
        histories.push((class, h));
    }
    Ok(Augmented { synthetic, histories })
}

/// Everything the default experiment needs from the data side.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub trajectories: Vec<Trajectory>,
    pub labeling: Labeling,
    /// Windows of the originals with their labels.
    pub real: Dataset,
    /// Generated windows (empty when augmentation is off).
    pub synthetic: Dataset,
    pub histories: Vec<(usize, GanHistory)>,
}

impl PreparedData {
    /// Originals followed by generated samples.
    pub fn combined(&self) -> Result<Dataset> {
        self.real.concat(&self.synthetic)
    }
}

/// Simulate, label, window and optionally augment.
pub fn prepare_data(
    datagen: &DatagenConfig,
    label: &LabelConfig,
    augment_cfg: Option<&AugmentConfig>,
    window_steps: usize,
    seed: u64,
) -> Result<PreparedData> {
    let trajectories = super::trajectory::simulate_trajectories(&datagen.grid, &datagen.generator, datagen.n_per_cell, seed)?;
    let labeling = label_trajectories(&trajectories, label)?;
    let real = windows_dataset(&trajectories, &labeling.labels, window_steps)?;
    let (synthetic, histories) = match augment_cfg {
        Some(a) => {
            let out = augment(&real, a, derive_seed(seed, "augment"))?;
            (out.synthetic, out.histories)
        }
        None => (Dataset::empty(real.seq_len, real.feature_dim), Vec::new()),
    };
    Ok(PreparedData { trajectories, labeling, real, synthetic, histories })
}
