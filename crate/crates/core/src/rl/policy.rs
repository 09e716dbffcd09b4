use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::cnmp::{CnmpGrads, CnmpModel, CnmpOptimizer, ObservationPoint, Trajectory};
use crate::error::{check_finite, Error, Result};
use crate::nn::scaled_gaussian_nll_with_grad;

#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    pub t: f64,
    pub gamma: Vec<f64>,
}

/// One sampled trajectory and what is needed to score it.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub conditioning: Vec<ObservationPoint>,
    pub gamma: Vec<f64>,
    pub contexts: Vec<Context>,
    pub actions: Vec<Vec<f64>>,
    pub means: Vec<Vec<f64>>,
    /// Model spreads before the exploration scale is applied.
    pub sigmas: Vec<Vec<f64>>,
    pub exploration_scale: f64,
    pub reward: Option<f64>,
}

impl Episode {
    pub fn query_times(&self) -> Vec<f64> {
        self.contexts.iter().map(|c| c.t).collect()
    }

    /// The sampled actions as a trajectory carrying the episode's γ.
    pub fn trajectory(&self, id: impl Into<String>) -> Result<Trajectory> {
        Trajectory::new(id, self.gamma.clone(), self.query_times(), self.actions.clone())
    }
}

/// Generator for roll-out `index` of a run seeded with `seed`.
pub fn rollout_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Samples `a = mu + scale * sigma * N(0, 1)` independently at every query time
/// and dimension.
pub fn sample_rollout<R: Rng + ?Sized>(
    model: &CnmpModel,
    conditioning: &[ObservationPoint],
    gamma: &[f64],
    query_times: &[f64],
    exploration_scale: f64,
    rng: &mut R,
) -> Result<Episode> {
    if !(exploration_scale >= 0.0) {
        return Err(Error::InvalidInput("exploration scale must be non-negative".into()));
    }
    let preds = model.predict(conditioning, gamma, query_times)?;
    let mut actions = Vec::with_capacity(preds.len());
    let mut means = Vec::with_capacity(preds.len());
    let mut sigmas = Vec::with_capacity(preds.len());
    for p in preds {
        let sigma = p.sigma();
        check_finite("rollout mean", &p.mu)?;
        check_finite("rollout spread", &sigma)?;
        let action = p
            .mu
            .iter()
            .zip(&sigma)
            .map(|(m, s)| {
                let z: f64 = rng.sample(StandardNormal);
                m + exploration_scale * s * z
            })
            .collect();
        actions.push(action);
        means.push(p.mu);
        sigmas.push(sigma);
    }
    Ok(Episode {
        conditioning: conditioning.to_vec(),
        gamma: gamma.to_vec(),
        contexts: query_times
            .iter()
            .map(|&t| Context {
                t,
                gamma: gamma.to_vec(),
            })
            .collect(),
        actions,
        means,
        sigmas,
        exploration_scale,
        reward: None,
    })
}

/// Rewards normalized by the batch mean and standard deviation.
pub fn advantages(rewards: &[f64]) -> Vec<f64> {
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    rewards.iter().map(|r| (r - mean) / (std + 1e-8)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgDiagnostics {
    pub surrogate_loss: f64,
    pub mean_reward: f64,
    pub reward_std: f64,
    pub grad_norm: f64,
    /// Every advantage was zero, so no step was taken.
    pub degenerate: bool,
}

/// Surrogate `(1/N) sum_i A_i sum_t nll(a_it; mu_t, scale * sigma_t)` and its
/// gradient. Minimizing it ascends the likelihood-ratio estimate of the
/// expected reward.
pub fn pg_surrogate(model: &CnmpModel, episodes: &[Episode]) -> Result<(f64, CnmpGrads)> {
    let rewards = episode_rewards(episodes)?;
    let adv = advantages(&rewards);
    surrogate_with(model, episodes, &adv)
}

fn episode_rewards(episodes: &[Episode]) -> Result<Vec<f64>> {
    if episodes.is_empty() {
        return Err(Error::InvalidInput("policy gradient needs at least one episode".into()));
    }
    let rewards = episodes
        .iter()
        .map(|e| e.reward.ok_or(Error::State("episode reward not set")))
        .collect::<Result<Vec<_>>>()?;
    check_finite("episode rewards", &rewards)?;
    Ok(rewards)
}

fn surrogate_with(model: &CnmpModel, episodes: &[Episode], adv: &[f64]) -> Result<(f64, CnmpGrads)> {
    let mut grads = model.zero_grads();
    let n = episodes.len() as f64;
    let mut total = 0.0;
    // Episodes that share conditioning, γ and query grid share every forward
    // pass, so their output gradients are summed into one backward pass.
    let mut done = vec![false; episodes.len()];
    for i in 0..episodes.len() {
        if done[i] {
            continue;
        }
        let lead = &episodes[i];
        let times = lead.query_times();
        let group: Vec<usize> = (i..episodes.len())
            .filter(|&j| {
                let e = &episodes[j];
                !done[j]
                    && e.conditioning == lead.conditioning
                    && e.gamma == lead.gamma
                    && e.contexts == lead.contexts
                    && e.exploration_scale == lead.exploration_scale
            })
            .collect();
        for &j in &group {
            done[j] = true;
        }
        let scale = lead.exploration_scale;
        let d = model.dims.sm_width;
        total += model.loss_and_grad(
            &lead.conditioning,
            &lead.gamma,
            &times,
            |k, pred| {
                let mut out = crate::nn::NllGrad {
                    loss: 0.0,
                    d_mu: vec![0.0; d],
                    d_sigma_raw: vec![0.0; d],
                };
                for &j in &group {
                    let w = adv[j] / n;
                    if w == 0.0 {
                        continue;
                    }
                    let g = scaled_gaussian_nll_with_grad(&pred.mu, &pred.sigma_raw, &episodes[j].actions[k], scale)?;
                    out.loss += w * g.loss;
                    for c in 0..d {
                        out.d_mu[c] += w * g.d_mu[c];
                        out.d_sigma_raw[c] += w * g.d_sigma_raw[c];
                    }
                }
                Ok(out)
            },
            &mut grads,
        )?;
    }
    Ok((total, grads))
}

/// One Adam step on the surrogate. A batch whose advantages are all zero is
/// reported as degenerate and leaves the model untouched.
pub fn pg_update(
    model: &mut CnmpModel,
    optimizer: &mut CnmpOptimizer,
    episodes: &[Episode],
) -> Result<PgDiagnostics> {
    let rewards = episode_rewards(episodes)?;
    let n = rewards.len() as f64;
    let mean_reward = rewards.iter().sum::<f64>() / n;
    let reward_std = (rewards.iter().map(|r| (r - mean_reward).powi(2)).sum::<f64>() / n).sqrt();
    let adv = advantages(&rewards);
    if adv.iter().all(|&a| a == 0.0) {
        return Ok(PgDiagnostics {
            surrogate_loss: 0.0,
            mean_reward,
            reward_std,
            grad_norm: 0.0,
            degenerate: true,
        });
    }
    let (loss, mut grads) = surrogate_with(model, episodes, &adv)?;
    let grad_norm = optimizer.apply(model, &mut grads)?;
    Ok(PgDiagnostics {
        surrogate_loss: loss,
        mean_reward,
        reward_std,
        grad_norm,
        degenerate: false,
    })
}
