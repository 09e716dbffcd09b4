use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cnmp::{
    check_demo_widths, generate, mean, reconstruction_error, sl_step, uniform_times, CnmpModel,
    CnmpOptimizer, ConditioningPolicy, DemonstrationSet, ObservationPoint, Trajectory,
    DEFAULT_MAX_OBSERVATIONS, DEFAULT_QUERY_POINTS,
};
use crate::envs::Environment;
use crate::error::{check_len, Error, Result};
use crate::nn::AdamConfig;
use crate::rl::policy::{pg_update, rollout_rng, sample_rollout};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptConfig {
    pub rollouts_per_update: usize,
    /// Budget of sampled roll-outs. Mean-trajectory evaluations are not counted.
    pub max_rollouts: usize,
    /// Overrides the environment's own success threshold.
    pub success_threshold: Option<f64>,
    pub rl_steps: usize,
    pub sl_steps: usize,
    pub exploration_scale: f64,
    pub seed: u64,
    pub rl_learning_rate: f64,
    pub sl_learning_rate: f64,
    pub sl_batch: usize,
    pub max_observations: usize,
    pub query_points: usize,
    /// Reconstruction error of the demonstrations is logged every this many
    /// updates; 0 disables it.
    pub retention_every: usize,
    pub retention_policy: ConditioningPolicy,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            rollouts_per_update: 5,
            max_rollouts: 200,
            success_threshold: None,
            rl_steps: 1,
            sl_steps: 1,
            exploration_scale: 1.0,
            seed: 0,
            rl_learning_rate: AdamConfig::default().learning_rate,
            sl_learning_rate: AdamConfig::default().learning_rate,
            sl_batch: 1,
            max_observations: DEFAULT_MAX_OBSERVATIONS,
            query_points: DEFAULT_QUERY_POINTS,
            retention_every: 1,
            retention_policy: ConditioningPolicy::FirstPoint,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rollouts_per_update == 0 || self.max_rollouts == 0 || self.rl_steps == 0 {
            return Err(Error::Config(
                "rollouts_per_update, max_rollouts and rl_steps must be at least 1".into(),
            ));
        }
        if self.query_points < 2 || self.sl_batch == 0 || self.max_observations == 0 {
            return Err(Error::Config(
                "query_points must be at least 2, sl_batch and max_observations at least 1".into(),
            ));
        }
        if !(self.exploration_scale > 0.0) {
            return Err(Error::Config("exploration_scale must be positive".into()));
        }
        if !(self.rl_learning_rate > 0.0) || !(self.sl_learning_rate > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        Ok(())
    }
}

/// One line of the adaptation log. Fields that are not measured at a given
/// roll-out are left empty in the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub rollout_index: usize,
    pub reward: f64,
    /// Best mean-trajectory reward seen so far.
    pub best_reward: f64,
    pub pg_loss: Option<f64>,
    pub sl_loss: Option<f64>,
    pub retention_error: Option<f64>,
}

pub const METRICS_HEADER: [&str; 6] = [
    "rollout_index",
    "reward",
    "best_reward",
    "pg_loss",
    "sl_loss",
    "retention_error",
];

pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.rollout_index.to_string(),
            format!("{:?}", r.reward),
            format!("{:?}", r.best_reward),
            opt(r.pg_loss),
            opt(r.sl_loss),
            opt(r.retention_error),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct AdaptOutcome {
    pub model: CnmpModel,
    /// Best mean trajectory found.
    pub solution: Trajectory,
    pub best_reward: f64,
    pub success: bool,
    /// Sampled roll-outs consumed before success or budget exhaustion.
    pub rollouts_used: usize,
    /// Reward of the mean trajectory before each update, starting with the
    /// unadapted model.
    pub mean_rewards: Vec<f64>,
    /// Per-roll-out rewards, grouped by update.
    pub batch_rewards: Vec<Vec<f64>>,
    pub log: Vec<MetricsRow>,
}

/// Generates the mean trajectory and scores it.
pub fn evaluate_mean(
    model: &CnmpModel,
    env: &dyn Environment,
    conditioning: &[ObservationPoint],
    gamma: &[f64],
    query_times: &[f64],
) -> Result<(Trajectory, f64)> {
    let traj = generate(model, conditioning, gamma, query_times)?;
    let reward = env.evaluate(&traj)?;
    Ok((traj, reward))
}

/// Alternates policy-gradient updates on sampled roll-outs with supervised
/// steps on the demonstrations until the mean trajectory reaches the success
/// threshold or the roll-out budget is spent.
pub fn interleaved_adapt(
    model: &CnmpModel,
    demos: &DemonstrationSet,
    env: &dyn Environment,
    target_gamma: &[f64],
    conditioning: &[ObservationPoint],
    config: &AdaptConfig,
) -> Result<AdaptOutcome> {
    config.validate()?;
    check_demo_widths(model, demos)?;
    check_len("target gamma", model.dims.gamma_width, target_gamma.len())?;
    check_len("environment width", model.dims.sm_width, env.sm_width())?;
    let threshold = config.success_threshold.unwrap_or_else(|| env.success_threshold());
    let times = uniform_times(config.query_points);

    let mut model = model.clone();
    let mut rl_opt = CnmpOptimizer::new(&model, AdamConfig::with_learning_rate(config.rl_learning_rate));
    let mut sl_opt = CnmpOptimizer::new(&model, AdamConfig::with_learning_rate(config.sl_learning_rate));
    // the supervised sampler gets its own stream, disjoint from roll-out streams
    let mut sl_rng = rollout_rng(config.seed, u64::MAX);

    let (mut best, mut best_reward) = evaluate_mean(&model, env, conditioning, target_gamma, &times)?;
    let mut mean_rewards = vec![best_reward];
    let mut batch_rewards = Vec::new();
    let mut log = Vec::new();
    let mut used = 0usize;
    let mut success = best_reward >= threshold;
    let mut updates = 0usize;

    while !success && used + config.rollouts_per_update <= config.max_rollouts {
        let mut episodes = Vec::with_capacity(config.rollouts_per_update);
        for _ in 0..config.rollouts_per_update {
            let mut rng = rollout_rng(config.seed, used as u64);
            let mut e = sample_rollout(&model, conditioning, target_gamma, &times, config.exploration_scale, &mut rng)?;
            e.reward = Some(env.evaluate(&e.trajectory("rollout")?)?);
            episodes.push(e);
            used += 1;
        }
        let rewards: Vec<f64> = episodes.iter().map(|e| e.reward.unwrap()).collect();

        let mut pg_loss = 0.0;
        for _ in 0..config.rl_steps {
            pg_loss = pg_update(&mut model, &mut rl_opt, &episodes)?.surrogate_loss;
        }
        let mut sl_loss = None;
        if config.sl_steps > 0 {
            let mut total = 0.0;
            for _ in 0..config.sl_steps {
                total += sl_step(&mut model, &mut sl_opt, demos, config.sl_batch, config.max_observations, &mut sl_rng)?;
            }
            sl_loss = Some(total / config.sl_steps as f64);
        }
        updates += 1;
        let retention = if config.retention_every > 0 && updates % config.retention_every == 0 {
            Some(mean(&reconstruction_error(&model, demos, &config.retention_policy)?))
        } else {
            None
        };

        let (traj, reward) = evaluate_mean(&model, env, conditioning, target_gamma, &times)?;
        mean_rewards.push(reward);
        if reward > best_reward {
            best_reward = reward;
            best = traj;
        }
        success = best_reward >= threshold;

        let last = rewards.len() - 1;
        for (i, &r) in rewards.iter().enumerate() {
            let tail = i == last;
            log.push(MetricsRow {
                rollout_index: used - rewards.len() + i,
                reward: r,
                best_reward,
                pg_loss: tail.then_some(pg_loss),
                sl_loss: if tail { sl_loss } else { None },
                retention_error: if tail { retention } else { None },
            });
        }
        batch_rewards.push(rewards);
    }

    Ok(AdaptOutcome {
        model,
        solution: best.with_id("solution").with_task_params(target_gamma.to_vec()),
        best_reward,
        success,
        rollouts_used: used,
        mean_rewards,
        batch_rewards,
        log,
    })
}

/// Adds an adapted solution to the demonstration set.
pub fn assimilate(demos: &DemonstrationSet, solution: &Trajectory) -> Result<DemonstrationSet> {
    check_len("solution gamma", demos.gamma_width(), solution.gamma_width())?;
    check_len("solution width", demos.sm_width(), solution.sm_width())?;
    let mut out = demos.clone();
    let mut sol = solution.clone();
    if out.get(&sol.id).is_some() {
        let mut k = out.len();
        while out.get(&format!("{}-{k}", solution.id)).is_some() {
            k += 1;
        }
        sol = sol.with_id(format!("{}-{k}", solution.id));
    }
    out.push(sol)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnmp::{CnmpArchitecture, GammaRouting};
    use crate::envs::ViaPointEnv;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (CnmpModel, DemonstrationSet) {
        let model = CnmpModel::new(
            1,
            1,
            GammaRouting::Both,
            &CnmpArchitecture::new(&[16, 8], &[16, 2]),
            &mut ChaCha8Rng::seed_from_u64(4),
        )
        .unwrap();
        let demos = DemonstrationSet::new(
            (0..3)
                .map(|k| {
                    let a = 0.3 + 0.2 * k as f64;
                    Trajectory::from_fn(format!("d{k}"), vec![a], uniform_times(20), |t| vec![a * t]).unwrap()
                })
                .collect(),
        )
        .unwrap();
        (model, demos)
    }

    fn config() -> AdaptConfig {
        AdaptConfig {
            max_rollouts: 30,
            query_points: 10,
            ..AdaptConfig::default()
        }
    }

    fn cond() -> Vec<ObservationPoint> {
        vec![ObservationPoint::new(0.0, vec![0.5], vec![0.0])]
    }

    #[test]
    fn assimilate_adds_one_and_rejects_wrong_gamma() {
        let (_, demos) = setup();
        let sol = Trajectory::from_fn("d0", vec![1.1], uniform_times(7), |t| vec![t]).unwrap();
        let grown = assimilate(&demos, &sol).unwrap();
        assert_eq!(grown.len(), 4);
        assert_eq!(demos.len(), 3);
        // the clashing id is renamed rather than replacing a demonstration
        assert!(grown.get("d0").is_some() && grown.trajectories()[3].id != "d0");
        let bad = Trajectory::from_fn("s", vec![1.0, 2.0], uniform_times(7), |t| vec![t]).unwrap();
        assert!(assimilate(&demos, &bad).is_err());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let ok = config();
        assert!(ok.validate().is_ok());
        for bad in [
            AdaptConfig { rollouts_per_update: 0, ..ok.clone() },
            AdaptConfig { max_rollouts: 0, ..ok.clone() },
            AdaptConfig { rl_steps: 0, ..ok.clone() },
            AdaptConfig { exploration_scale: 0.0, ..ok.clone() },
            AdaptConfig { exploration_scale: f64::NAN, ..ok.clone() },
            AdaptConfig { query_points: 1, ..ok.clone() },
            AdaptConfig { sl_learning_rate: -1.0, ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn metrics_header_is_fixed() {
        let mut buf = Vec::new();
        let row = MetricsRow {
            rollout_index: 0,
            reward: -1.0,
            best_reward: -0.5,
            pg_loss: None,
            sl_loss: Some(0.25),
            retention_error: None,
        };
        write_metrics_csv(&[row], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "rollout_index,reward,best_reward,pg_loss,sl_loss,retention_error");
        assert_eq!(lines.next().unwrap(), "0,-1.0,-0.5,,0.25,");
    }

    #[test]
    fn budget_run_logs_every_rollout_with_monotone_best() {
        let (model, demos) = setup();
        let env = ViaPointEnv::new(0.5, vec![3.0]);
        let out = interleaved_adapt(&model, &demos, &env, &[0.5], &cond(), &config()).unwrap();
        assert!(!out.success);
        assert_eq!(out.rollouts_used, 30);
        assert_eq!(out.log.len(), 30);
        assert_eq!(out.mean_rewards.len(), 30 / 5 + 1);
        assert!(out.log.iter().enumerate().all(|(i, r)| r.rollout_index == i));
        assert!(out.log.windows(2).all(|w| w[0].best_reward <= w[1].best_reward));
        let best = out.mean_rewards.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(out.best_reward, best);
        assert_eq!(env.evaluate(&out.solution).unwrap(), out.best_reward);
        assert_eq!(out.solution.task_params, vec![0.5]);

        let again = interleaved_adapt(&model, &demos, &env, &[0.5], &cond(), &config()).unwrap();
        assert_eq!(again.log, out.log);
        assert_eq!(again.model, out.model);
    }

    #[test]
    fn reachable_threshold_stops_at_rollout_zero() {
        let (model, demos) = setup();
        let env = ViaPointEnv::new(0.5, vec![0.0]);
        let cfg = AdaptConfig {
            success_threshold: Some(-1e6),
            ..config()
        };
        let out = interleaved_adapt(&model, &demos, &env, &[0.5], &cond(), &cfg).unwrap();
        assert!(out.success);
        assert_eq!(out.rollouts_used, 0);
        assert!(out.log.is_empty());
        assert_eq!(out.model, model);
    }

    #[test]
    fn rl_only_logs_no_supervised_loss() {
        let (model, demos) = setup();
        let env = ViaPointEnv::new(0.5, vec![3.0]);
        let cfg = AdaptConfig { sl_steps: 0, ..config() };
        let out = interleaved_adapt(&model, &demos, &env, &[0.5], &cond(), &cfg).unwrap();
        assert!(out.log.iter().all(|r| r.sl_loss.is_none()));
        assert!(out.log.iter().any(|r| r.pg_loss.is_some()));
    }

    #[test]
    fn width_mismatches_are_rejected() {
        let (model, demos) = setup();
        let env = ViaPointEnv::new(0.5, vec![3.0]);
        assert!(interleaved_adapt(&model, &demos, &env, &[0.5, 1.0], &cond(), &config()).is_err());
        let wide = crate::envs::PushEnv::new(crate::envs::PushScene::canonical(), [0.6, 0.0]);
        assert!(interleaved_adapt(&model, &demos, &wide, &[0.5], &cond(), &config()).is_err());
    }
}
