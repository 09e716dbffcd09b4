//! Config-driven experiments, run records and figure output.

pub mod config;
pub mod export;
pub mod pipelines;
pub mod plot;
pub mod record;

pub use config::{
    network_preset, EnvConfig, ExperimentConfig, ImproveConfig, ModelConfig, SeedConfig, TrainPhase,
    TrainSchedule, TransferSection, EXPERIMENT_PRESETS, NETWORK_PRESETS,
};
pub use export::{latent_rows, write_latent_csv, LatentRow};
pub use record::RunRecord;
