//! Training configuration, the alternating loop, checkpoints and metrics.

mod ablation;
mod checkpoint;
mod config;
mod metrics;
mod trainer;

pub use ablation::{median, run_ablation, AblationReport, AblationRow, SeedRun, ABLATION_ROWS};
pub use checkpoint::{CheckpointRecord, RngState, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{AblationFlags, TrainConfig, TrainMode};
pub use metrics::{metrics_csv, parse_metrics_csv, write_metrics_csv, EpochMetrics, METRICS_HEADER};
pub use trainer::{
    branches_for, evaluate_checkpoint, refresh_pseudo_labels, run_fully_supervised, run_weno,
    run_with_checkpoints, student_epoch, teacher_epoch, true_label_targets, InstanceTargets, RunOutput,
    TeacherEpoch, Trainer,
};
