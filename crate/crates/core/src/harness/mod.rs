//! Training loops, metrics and the experiment drivers.

pub mod experiments;
pub mod metrics;
pub mod train;

pub use metrics::{auc_rank, Confusion, Metrics};
pub use train::{evaluate, train, train_with_hook, BatchHook, TrainConfig, TrainReport};
pub use experiments::{
    ablation_grid, ablation_suite, compare_models, eval_subset, mean_std, split_dataset, sweep_quantum, sweep_sampling_window,
    train_run, window_steps, AblationConfig, AblationInputs, AblationPipeline, AblationRow, AblationRun, Comparison, MeanStd,
    RunRecord, SummaryRow, SweepCell, WindowRow, TEST_FRACTION,
};
