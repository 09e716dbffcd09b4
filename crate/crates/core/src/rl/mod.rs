//! Policy-gradient adaptation of a trained model with supervised replay.
//!
//! The decoder's Gaussian at every query time is a stochastic policy over
//! trajectory points. Rewards are terminal, so every step of an episode is
//! weighted by the same normalized advantage.

mod adapt;
mod policy;

pub use adapt::{
    assimilate, evaluate_mean, interleaved_adapt, write_metrics_csv, AdaptConfig, AdaptOutcome,
    MetricsRow, METRICS_HEADER,
};
pub use policy::{
    advantages, pg_surrogate, pg_update, rollout_rng, sample_rollout, Context, Episode,
    PgDiagnostics,
};
