//! Trajectories, labeling, clustering, augmentation and their validation.

pub mod dataset;
pub mod lsgan;
pub mod mmd;
pub mod pipeline;
pub mod sfcm;
pub mod trajectory;
pub mod validate;

pub use dataset::{stratified_split, Dataset};
pub use lsgan::{lsgan_generate, lsgan_losses, lsgan_train, Discriminator, GanHistory, Generator, LsganConfig};
pub use mmd::{median_distance, mmd_rbf, Mmd};
pub use pipeline::{
    augment, label_trajectories, prepare_data, AugmentConfig, Augmented, DatagenConfig, LabelConfig, LabelMethod,
    Labeling, PreparedData,
};
pub use sfcm::{sfcm_fit, sfcm_objective, MembershipMatrix, MembershipRule, SfcmConfig, SfcmResult};
pub use trajectory::{
    cell_kinds, cluster_features, heuristic_label, naive_label, simulate_trajectories, standardize_columns, steps_for,
    windows_dataset, CellKind, GeneratorConfig, Scenario, ScenarioGrid, Trajectory, STABLE, STABLE_U, UNSTABLE, UNSTABLE_U,
};
pub use validate::{default_tstr_model, tstr_trts_eval, MetricDeltas, TstrReport, TSTR_TEST_FRACTION};
