//! Composite objectives, the training loop, and clean/corrupted evaluation.

mod eval;
mod model;
mod objective;
mod run;
mod study;

pub use eval::{accuracy, evaluate_ra, evaluate_sa, CellAccuracy, EvalConfig, RobustReport};
pub use model::{ModelSpec, ModelSplit};
pub use objective::{
    consistency_total_loss, jsd_consistency, mixing_task_loss, mixing_total_loss, normal_loss, Alignment,
    LossComponents, Mode, ObjectiveConfig, ObjectiveOutput, JSD_FLOOR,
};
pub use run::{
    init_model, stream_rng, train_run, AugmentationSpec, Dataset, EpochMetrics, OptimizerSpec, RunOutput, TrainConfig,
};
pub use study::{
    ablation_study, aligned_config, baseline_config, epoch_budget_study, epochs_for_fraction, gamma_sweep, main_pair,
    median, paired_runs, run_many, LabelledRun, PairedRow, RunSummary, Study,
};
