//! The conditional neural movement primitive and its supervised training.

pub mod model;
pub mod train;
pub mod trajectory;

pub use model::{
    aggregate, CnmpArchitecture, CnmpDims, CnmpGrads, CnmpModel, ConditionedPass,
    GammaRouting, GaussianPrediction, LatentVector, ObservationPoint,
};
pub use train::{
    check_demo_widths, generate, mean, reconstruction_error, sample_case_from,
    sample_training_case, sl_loss, sl_loss_into, sl_step, train,
    trajectory_reconstruction_error, CnmpOptimizer, ConditioningPolicy, TrainConfig,
    TrainingCase, DEFAULT_MAX_OBSERVATIONS, DEFAULT_QUERY_POINTS,
};
pub use trajectory::{uniform_times, DemonstrationSet, Trajectory};
