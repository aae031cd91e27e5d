//! Optimization loop, experiment orchestration, and evaluation metrics.

mod adam;
pub mod config;
mod data;
mod metrics;
mod run;

pub use adam::{lr_schedule, AdamState};
pub use config::{
    DomainSection, EnvelopeSection, ExperimentConfig, ExperimentKind, ExperimentSection,
    ExtentCfg, LossSection, NetSection, OptimizerSection, SamplerKind, SamplerSection,
};
pub use data::{generate_dataset, load_dataset, Dataset, GenSummary};
pub use metrics::{
    kl_estimate, mass_projection, r2_explained_variance, write_metrics_csv, MetricsRecord,
    ProjectionTable, METRICS_HEADER,
};
pub use run::{train, SamplerEvent, TrainOutput};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("config: {0}")]
    Config(String),
    #[error("dataset: {0}")]
    Data(#[from] crate::datagen::DataGenError),
    #[error("field model: {0}")]
    Field(#[from] crate::fieldnet::FieldError),
    #[error("pde: {0}")]
    Pde(#[from] crate::pde::PdeError),
    #[error("sampler: {0}")]
    Sampler(#[from] crate::sampling::SamplerError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] crate::fieldnet::CheckpointError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("non-finite gradient at parameter index {index}")]
    NanGradient { index: usize },
    #[error("truth is constant; explained variance is undefined")]
    DegenerateTruth,
    #[error("KL evaluation needs a bounded domain")]
    UnboundedKlDomain,
    #[error("model normalization constant is not positive ({0})")]
    DegenerateNormalization(f64),
    #[error("training diverged at epoch {epoch}; last good state attached")]
    Diverged { epoch: usize, output: Box<run::TrainOutput> },
}
