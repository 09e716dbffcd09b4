//! Adaptive conditional neural movement primitives.
//!
//! A conditional neural process learns a distribution over trajectories from
//! demonstrations. The same network then acts as a stochastic policy that is
//! adapted with a likelihood-ratio policy gradient while supervised replay of
//! the demonstrations keeps the learned skills intact. Two such models can be
//! trained with aligned latent spaces so a solution found by one robot can be
//! decoded in the joint space of another.

pub mod cnmp;
pub mod envs;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod rl;
pub mod transfer;

pub use error::{Error, Result};
