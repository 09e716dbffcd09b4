//! Supervised training from demonstrations, trajectory generation and the
//! reconstruction metric.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cnmp::model::{CnmpGrads, CnmpModel, ObservationPoint};
use crate::cnmp::trajectory::{DemonstrationSet, Trajectory};
use crate::error::{Error, Result};
use crate::nn::{clip_global_norm, gaussian_nll_with_grad, AdamConfig, AdamState, GRAD_CLIP_NORM};

/// Default maximum number of observations per training case.
pub const DEFAULT_MAX_OBSERVATIONS: usize = 5;

/// Default number of generated samples.
pub const DEFAULT_QUERY_POINTS: usize = 200;

/// Observations and one query drawn from the same demonstration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingCase {
    pub observations: Vec<ObservationPoint>,
    pub query: ObservationPoint,
}

/// Picks a demonstration uniformly, then `n ~ U{1..max_observations}` distinct
/// observation samples and one query sample from it.
pub fn sample_training_case<R: Rng + ?Sized>(
    demos: &DemonstrationSet,
    max_observations: usize,
    rng: &mut R,
) -> TrainingCase {
    let traj = &demos.trajectories()[rng.random_range(0..demos.len())];
    sample_case_from(traj, max_observations, rng)
}

pub fn sample_case_from<R: Rng + ?Sized>(
    traj: &Trajectory,
    max_observations: usize,
    rng: &mut R,
) -> TrainingCase {
    let upper = max_observations.max(1).min(traj.len());
    let n = rng.random_range(1..=upper);
    let observations = sample(rng, traj.len(), n)
        .into_iter()
        .map(|i| ObservationPoint::from_trajectory(traj, i))
        .collect();
    let q = rng.random_range(0..traj.len());
    TrainingCase {
        observations,
        query: ObservationPoint::from_trajectory(traj, q),
    }
}

/// Gaussian negative log-likelihood of the query value, accumulated into `grads`.
pub fn sl_loss_into(model: &CnmpModel, case: &TrainingCase, grads: &mut CnmpGrads) -> Result<f64> {
    let target = &case.query.sm;
    model.loss_and_grad(
        &case.observations,
        &case.query.gamma,
        &[case.query.t],
        |_, pred| gaussian_nll_with_grad(&pred.mu, &pred.sigma_raw, target),
        grads,
    )
}

/// Supervised loss of one case and its gradient.
pub fn sl_loss(model: &CnmpModel, case: &TrainingCase) -> Result<(f64, CnmpGrads)> {
    let mut grads = model.zero_grads();
    let loss = sl_loss_into(model, case, &mut grads)?;
    Ok((loss, grads))
}

/// Adam states for both networks of a model.
#[derive(Debug, Clone)]
pub struct CnmpOptimizer {
    pub encoder: AdamState,
    pub decoder: AdamState,
    pub clip_norm: f64,
}

impl CnmpOptimizer {
    pub fn new(model: &CnmpModel, config: AdamConfig) -> Self {
        CnmpOptimizer {
            encoder: AdamState::new(model.encoder.params.len(), config),
            decoder: AdamState::new(model.decoder.params.len(), config),
            clip_norm: GRAD_CLIP_NORM,
        }
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.encoder.config.learning_rate = lr;
        self.decoder.config.learning_rate = lr;
    }

    /// Clips and applies one Adam step. Returns the pre-clip norm.
    pub fn apply(&mut self, model: &mut CnmpModel, grads: &mut CnmpGrads) -> Result<f64> {
        if !grads.encoder.is_finite() || !grads.decoder.is_finite() {
            return Err(Error::NonFinite("gradient"));
        }
        let norm = clip_global_norm(&mut [&mut grads.encoder, &mut grads.decoder], self.clip_norm);
        self.encoder.step(&mut model.encoder.params, &grads.encoder)?;
        self.decoder.step(&mut model.decoder.params, &grads.decoder)?;
        Ok(norm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    /// Cases averaged per gradient step.
    pub batch_size: usize,
    pub max_observations: usize,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 20_000,
            batch_size: 1,
            max_observations: DEFAULT_MAX_OBSERVATIONS,
            learning_rate: AdamConfig::default().learning_rate,
        }
    }
}

/// One supervised update on a mini-batch of sampled cases. Returns the mean loss.
pub fn sl_step<R: Rng + ?Sized>(
    model: &mut CnmpModel,
    optimizer: &mut CnmpOptimizer,
    demos: &DemonstrationSet,
    batch_size: usize,
    max_observations: usize,
    rng: &mut R,
) -> Result<f64> {
    let batch = batch_size.max(1);
    let mut grads = model.zero_grads();
    let mut total = 0.0;
    for _ in 0..batch {
        let case = sample_training_case(demos, max_observations, rng);
        total += sl_loss_into(model, &case, &mut grads)?;
    }
    grads.scale(1.0 / batch as f64);
    optimizer.apply(model, &mut grads)?;
    Ok(total / batch as f64)
}

/// Trains for `config.steps` updates and returns the per-step loss series.
pub fn train<R: Rng + ?Sized>(
    model: &mut CnmpModel,
    optimizer: &mut CnmpOptimizer,
    demos: &DemonstrationSet,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_demo_widths(model, demos)?;
    optimizer.set_learning_rate(config.learning_rate);
    (0..config.steps)
        .map(|_| {
            sl_step(
                model,
                optimizer,
                demos,
                config.batch_size,
                config.max_observations,
                rng,
            )
        })
        .collect()
}

pub fn check_demo_widths(model: &CnmpModel, demos: &DemonstrationSet) -> Result<()> {
    if demos.sm_width() != model.dims.sm_width || demos.gamma_width() != model.dims.gamma_width {
        return Err(Error::InvalidInput(format!(
            "dataset widths (D={}, G={}) do not match the model (D={}, G={})",
            demos.sm_width(),
            demos.gamma_width(),
            model.dims.sm_width,
            model.dims.gamma_width
        )));
    }
    Ok(())
}

/// Mean trajectory after conditioning on `conditioning`.
pub fn generate(
    model: &CnmpModel,
    conditioning: &[ObservationPoint],
    gamma: &[f64],
    query_times: &[f64],
) -> Result<Trajectory> {
    if query_times.is_empty() {
        return Err(Error::InvalidInput("no query times".into()));
    }
    if conditioning.is_empty() {
        return Err(Error::InvalidInput(
            "generation needs at least one conditioning observation".into(),
        ));
    }
    if query_times.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::InvalidInput("query times must lie in [0, 1]".into()));
    }
    let preds = model.predict(conditioning, gamma, query_times)?;
    Trajectory::new(
        "generated",
        gamma.to_vec(),
        query_times.to_vec(),
        preds.into_iter().map(|p| p.mu).collect(),
    )
}

/// How a demonstration is conditioned when measuring its reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", content = "times")]
pub enum ConditioningPolicy {
    /// The first sample of the demonstration.
    #[default]
    FirstPoint,
    /// Interpolated values at the given times.
    AtTimes(Vec<f64>),
}

impl ConditioningPolicy {
    pub fn observations(&self, traj: &Trajectory) -> Vec<ObservationPoint> {
        match self {
            ConditioningPolicy::FirstPoint => vec![ObservationPoint::from_trajectory(traj, 0)],
            ConditioningPolicy::AtTimes(times) => times
                .iter()
                .map(|&t| ObservationPoint::at_time(traj, t))
                .collect(),
        }
    }
}

/// Mean absolute error between a demonstration and its reconstruction,
/// evaluated at the demonstration's own sample times.
pub fn trajectory_reconstruction_error(
    model: &CnmpModel,
    traj: &Trajectory,
    policy: &ConditioningPolicy,
) -> Result<f64> {
    let generated = generate(model, &policy.observations(traj), &traj.task_params, traj.times())?;
    let mut total = 0.0;
    let mut count = 0usize;
    for (g, d) in generated.values().iter().zip(traj.values()) {
        for (a, b) in g.iter().zip(d) {
            total += (a - b).abs();
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Per-trajectory reconstruction error, in dataset order.
pub fn reconstruction_error(
    model: &CnmpModel,
    demos: &DemonstrationSet,
    policy: &ConditioningPolicy,
) -> Result<Vec<f64>> {
    demos
        .trajectories()
        .iter()
        .map(|t| trajectory_reconstruction_error(model, t, policy))
        .collect()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
