//! Experiment configuration, training with early stopping, evaluation,
//! attention reports and the results grid.

mod config;
mod data;
mod grid;
mod report;
mod train;

pub use config::{Algorithm, ExperimentConfig, Representation, Setting, TrainConfig};
pub use data::{PreparedData, Samples};
pub use grid::{default_grid, run_grid, GridRow, GridTable};
pub use report::{
    attention_report, evaluate, split_metrics, AttentionReport, EvalReport, ModelArtifact, PredictionRow, SplitMetrics,
    ARTIFACT_FORMAT, ATTENTION_SAMPLE,
};
pub use train::{architecture, train, EpochRecord, Model, TrainingLog};
