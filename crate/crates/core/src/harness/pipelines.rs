//! End-to-end experiment steps driven by an [`ExperimentConfig`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cnmp::{
    sl_step, train, uniform_times, CnmpModel, CnmpOptimizer, DemonstrationSet, ObservationPoint,
    TrainConfig, Trajectory,
};
use crate::envs::button::ButtonEnv;
use crate::envs::push::PushScene;
use crate::envs::viapoint::{ViaPointEnv, ViaPointScene};
use crate::envs::wall::{sample_wall_env, WallEnv, WALL_START, WORKSPACE};
use crate::envs::{Environment, PlanarArm, PushEnv, Scaled};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, ModelConfig, TrainPhase};
use crate::nn::AdamConfig;
use crate::rl::{assimilate, evaluate_mean, interleaved_adapt, AdaptConfig, AdaptOutcome};
use crate::transfer::{
    cross_generate, iterations_to_success, joint_train, mean_alignment, pair_demos, transfer_adapt,
    JointConfig, JointLosses, PairedDemo, PairedModels, PairedOptimizer, TransferConfig,
};

pub fn data_rng(cfg: &ExperimentConfig) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.seeds.data)
}

pub fn model_rng(cfg: &ExperimentConfig) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.seeds.model)
}

/// `(D, G)` of the trajectories an environment produces.
pub fn env_dims(env: &str) -> Result<(usize, usize)> {
    match env {
        "viapoint2d" => Ok((1, 1)),
        "push" => Ok((3, 2)),
        "wall" => Ok((2, 4)),
        "button" => Ok((4, 0)),
        other => Err(Error::Config(format!("unknown environment `{other}`"))),
    }
}

fn check_params(cfg: &ExperimentConfig, n: usize) -> Result<()> {
    if cfg.env.params.len() != n {
        return Err(Error::Config(format!(
            "environment `{}` takes {n} parameters, got {}",
            cfg.env.name,
            cfg.env.params.len()
        )));
    }
    Ok(())
}

/// The training demonstrations of an experiment. For the button task these
/// are the target agent's proxy demonstrations.
pub fn demo_set(cfg: &ExperimentConfig) -> Result<DemonstrationSet> {
    let env = &cfg.env;
    let mut rng = data_rng(cfg);
    match env.name.as_str() {
        "viapoint2d" => {
            let scene = ViaPointScene::canonical();
            if env.unaligned {
                scene.unaligned_demos(env.demos, env.demo_points, &mut rng)
            } else {
                scene.demos(env.demos, env.demo_points, &mut rng)
            }
        }
        "push" => {
            let scene = PushScene::canonical();
            let targets = scene.targets();
            if env.demos == 0 || env.demos > targets.len() {
                return Err(Error::Config(format!(
                    "push uses 1..={} training targets, got {}",
                    targets.len(),
                    env.demos
                )));
            }
            let trajs = targets[..env.demos]
                .iter()
                .enumerate()
                .map(|(k, &g)| scene.demo(format!("push-{k}"), g, env.demo_points))
                .collect::<Result<Vec<_>>>()?;
            DemonstrationSet::new(trajs)
        }
        "wall" => {
            let trajs = (0..env.demos)
                .map(|i| sample_wall_env(&mut rng).model_demo(format!("wall-{i}"), env.demo_points))
                .collect::<Result<Vec<_>>>()?;
            DemonstrationSet::new(trajs)
        }
        "button" => DemonstrationSet::new(ButtonEnv::canonical(PlanarArm::four_dof()).proxy_demos(env.demo_points)?),
        other => Err(Error::Config(format!("unknown environment `{other}`"))),
    }
}

pub fn new_model<R: Rng + ?Sized>(model: &ModelConfig, env: &str, rng: &mut R) -> Result<CnmpModel> {
    let (d, g) = env_dims(env)?;
    CnmpModel::new(d, g, model.gamma_routing, &model.architecture(), rng)
        .map_err(|e| Error::Config(e.to_string()))
}

/// Runs the training phases in order on one optimizer and returns the
/// per-step losses.
pub fn train_phases<R: Rng + ?Sized>(
    model: &mut CnmpModel,
    demos: &DemonstrationSet,
    phases: &[TrainPhase],
    max_observations: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let lr = phases.first().map_or(1e-4, |p| p.learning_rate);
    let mut opt = CnmpOptimizer::new(model, AdamConfig::with_learning_rate(lr));
    let mut losses = Vec::new();
    for p in phases {
        let cfg = TrainConfig {
            steps: p.steps,
            batch_size: p.batch_size,
            max_observations,
            learning_rate: p.learning_rate,
        };
        losses.extend(train(model, &mut opt, demos, &cfg, rng)?);
    }
    Ok(losses)
}

/// Builds and trains the experiment's model with its model seed.
pub fn train_model(cfg: &ExperimentConfig, demos: &DemonstrationSet) -> Result<(CnmpModel, Vec<f64>)> {
    let mut rng = model_rng(cfg);
    let mut model = new_model(&cfg.model, &cfg.env.name, &mut rng)?;
    let losses = train_phases(&mut model, demos, &cfg.train.phases, cfg.train.max_observations, &mut rng)?;
    Ok((model, losses))
}

/// An environment instance with the γ and observations that condition the
/// policy on it.
pub struct AdaptTarget {
    pub env: Box<dyn Environment>,
    pub gamma: Vec<f64>,
    pub conditioning: Vec<ObservationPoint>,
}

pub fn adapt_target(cfg: &ExperimentConfig) -> Result<AdaptTarget> {
    let p = &cfg.env.params;
    match cfg.env.name.as_str() {
        "viapoint2d" => {
            check_params(cfg, 2)?;
            // γ is ignored by the via-point network; the condition carries the task
            Ok(AdaptTarget {
                env: Box::new(ViaPointEnv::new(p[0], vec![p[1]])),
                gamma: vec![p[1]],
                conditioning: vec![ObservationPoint::new(p[0], vec![p[1]], vec![p[1]])],
            })
        }
        "push" => {
            check_params(cfg, 2)?;
            let scene = PushScene::canonical();
            let home = scene.home_joints()?;
            let g = vec![p[0], p[1]];
            Ok(AdaptTarget {
                env: Box::new(PushEnv::new(scene, [p[0], p[1]])),
                gamma: g.clone(),
                conditioning: vec![ObservationPoint::new(0.0, g, home)],
            })
        }
        "wall" => {
            check_params(cfg, 4)?;
            let w = WallEnv::new(p[0], p[1], p[2], p[3])?;
            Ok(wall_target(w))
        }
        "button" => {
            check_params(cfg, 0)?;
            let env = ButtonEnv::canonical(PlanarArm::four_dof());
            let home = env.home_joints()?;
            Ok(AdaptTarget {
                env: Box::new(env),
                gamma: vec![],
                conditioning: vec![ObservationPoint::new(0.0, vec![], home)],
            })
        }
        other => Err(Error::Config(format!("unknown environment `{other}`"))),
    }
}

fn wall_target(w: WallEnv) -> AdaptTarget {
    let g = w.model_gamma();
    let start = WALL_START.iter().map(|x| x / WORKSPACE).collect();
    AdaptTarget {
        env: Box::new(Scaled::new(w, WORKSPACE, 0.0)),
        gamma: g.clone(),
        conditioning: vec![ObservationPoint::new(0.0, g, start)],
    }
}

/// Adaptation with the config's settings and the given run seed.
pub fn adapt_run(
    cfg: &ExperimentConfig,
    model: &CnmpModel,
    demos: &DemonstrationSet,
    target: &AdaptTarget,
    seed: u64,
) -> Result<AdaptOutcome> {
    let adapt = AdaptConfig { seed, ..cfg.adapt.clone() };
    interleaved_adapt(model, demos, target.env.as_ref(), &target.gamma, &target.conditioning, &adapt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub new_envs: usize,
    pub trajectories: usize,
    pub mean_test_error: f64,
    pub test_successes: usize,
}

#[derive(Debug, Clone)]
pub struct ImprovementReport {
    pub checkpoints: Vec<Checkpoint>,
    /// New environments solved by adaptation.
    pub solved: usize,
    pub rollouts: usize,
    pub model: CnmpModel,
    pub demos: DemonstrationSet,
}

/// Mean `-reward` of the unadapted mean trajectory over `tests`, and the
/// number of successes.
pub fn wall_test_error(model: &CnmpModel, tests: &[WallEnv], query_points: usize) -> Result<(f64, usize)> {
    let times = uniform_times(query_points);
    let mut total = 0.0;
    let mut ok = 0;
    for w in tests {
        let t = wall_target(w.clone());
        let (_, r) = evaluate_mean(model, t.env.as_ref(), &t.conditioning, &t.gamma, &times)?;
        total -= r;
        ok += t.env.is_success(r) as usize;
    }
    Ok((total / tests.len().max(1) as f64, ok))
}

/// Visits new environments once each: adapt, keep the adapted model, and
/// assimilate the best solution whenever it improves on the model's own
/// generation, followed by supervised steps on the grown set.
pub fn wall_self_improvement(
    cfg: &ExperimentConfig,
    model: &CnmpModel,
    demos: &DemonstrationSet,
) -> Result<ImprovementReport> {
    let imp = cfg
        .improve
        .as_ref()
        .ok_or_else(|| Error::Config("self-improvement needs an [improve] section".into()))?;
    let mut test_rng = ChaCha8Rng::seed_from_u64(imp.test_seed);
    let tests: Vec<WallEnv> = (0..imp.test_envs).map(|_| sample_wall_env(&mut test_rng)).collect();
    let mut env_rng = ChaCha8Rng::seed_from_u64(imp.new_seed);
    let mut rng = model_rng(cfg);
    rng.set_stream(1);

    let qp = cfg.adapt.query_points;
    let mut model = model.clone();
    let mut demos = demos.clone();
    let mut opt = CnmpOptimizer::new(&model, AdamConfig::with_learning_rate(imp.retrain_learning_rate));
    let checkpoint = |model: &CnmpModel, n: usize, demos: &DemonstrationSet| -> Result<Checkpoint> {
        let (e, ok) = wall_test_error(model, &tests, qp)?;
        Ok(Checkpoint {
            new_envs: n,
            trajectories: demos.len(),
            mean_test_error: e,
            test_successes: ok,
        })
    };
    let mut checkpoints = vec![checkpoint(&model, 0, &demos)?];
    let (mut solved, mut rollouts) = (0, 0);
    for i in 0..imp.new_envs {
        let target = wall_target(sample_wall_env(&mut env_rng));
        let out = adapt_run(cfg, &model, &demos, &target, i as u64)?;
        rollouts += out.rollouts_used;
        solved += out.success as usize;
        let improved = out.best_reward > out.mean_rewards[0];
        model = out.model;
        if improved {
            demos = assimilate(&demos, &out.solution.with_id(format!("rl-{i}")))?;
            let tc = TrainConfig {
                steps: imp.retrain_steps,
                batch_size: 1,
                max_observations: cfg.train.max_observations,
                learning_rate: imp.retrain_learning_rate,
            };
            train(&mut model, &mut opt, &demos, &tc, &mut rng)?;
        }
        if imp.checkpoint_every > 0 && (i + 1) % imp.checkpoint_every == 0 || i + 1 == imp.new_envs {
            if checkpoints.last().map(|c| c.new_envs) != Some(i + 1) {
                checkpoints.push(checkpoint(&model, i + 1, &demos)?);
            }
        }
    }
    Ok(ImprovementReport {
        checkpoints,
        solved,
        rollouts,
        model,
        demos,
    })
}

/// Proxy demonstrations of both agents and the source's solution of the test
/// task.
#[derive(Debug, Clone)]
pub struct TransferData {
    pub pairs: Vec<PairedDemo>,
    pub source_solution: Trajectory,
    pub target_demos: DemonstrationSet,
}

pub fn transfer_data(cfg: &ExperimentConfig) -> Result<TransferData> {
    let t = transfer_section(cfg)?;
    let source_env = ButtonEnv::canonical(PlanarArm::three_dof());
    let target_env = ButtonEnv::canonical(PlanarArm::four_dof());
    let source = DemonstrationSet::new(source_env.proxy_demos(t.source_points)?)?;
    let target = DemonstrationSet::new(target_env.proxy_demos(t.target_points)?)?;
    Ok(TransferData {
        pairs: pair_demos(&source, &target)?,
        source_solution: source_env.demo("button", t.source_points)?,
        target_demos: target,
    })
}

fn transfer_section(cfg: &ExperimentConfig) -> Result<&crate::harness::config::TransferSection> {
    cfg.transfer
        .as_ref()
        .ok_or_else(|| Error::Config("transfer needs a [transfer] section".into()))
}

/// Jointly trains a freshly initialized pair. The source also learns its
/// solution of the test task.
pub fn train_pair(
    cfg: &ExperimentConfig,
    data: &TransferData,
    alignment_weight: f64,
) -> Result<(PairedModels, Vec<JointLosses>)> {
    let t = transfer_section(cfg)?;
    let mut rng = model_rng(cfg);
    let ds = data.source_solution.sm_width();
    let source = CnmpModel::new(ds, 0, t.source.gamma_routing, &t.source.architecture(), &mut rng)?;
    let target = new_model(&cfg.model, &cfg.env.name, &mut rng)?;
    let mut pair = PairedModels::new(source, target)?;
    let lr = t.phases.first().map_or(1e-4, |p| p.learning_rate);
    let mut opt = PairedOptimizer::new(&pair, AdamConfig::with_learning_rate(lr));
    let extra = DemonstrationSet::new(vec![data.source_solution.clone()])?;
    let mut losses = Vec::new();
    for p in &t.phases {
        let jc = JointConfig {
            steps: p.steps,
            learning_rate: p.learning_rate,
            max_observations: cfg.train.max_observations,
            alignment_weight,
        };
        losses.extend(joint_train(&mut pair, &mut opt, &data.pairs, Some(&extra), &jc, &mut rng)?);
    }
    Ok((pair, losses))
}

pub fn proxy_alignment(pair: &PairedModels, data: &TransferData) -> Result<f64> {
    mean_alignment(pair, &data.pairs, &[0.0, 0.5, 1.0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferRun {
    pub seed: u64,
    /// Reward of the starting trajectory on the target task.
    pub initial_reward: f64,
    pub iterations_to_success: Option<usize>,
    pub rollouts_used: usize,
    pub best_reward: f64,
}

/// Cross-generates the source solution and adapts the target once per run
/// seed.
pub fn run_transfer(cfg: &ExperimentConfig, pair: &PairedModels, data: &TransferData) -> Result<Vec<TransferRun>> {
    let t = transfer_section(cfg)?;
    let env = ButtonEnv::canonical(PlanarArm::four_dof());
    let times = uniform_times(t.provisional_points);
    cfg.seeds
        .runs
        .iter()
        .map(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1);
            let provisional = cross_generate(pair, &data.source_solution, &times, t.cross_observations, &mut rng)?;
            let tc = TransferConfig {
                adapt: AdaptConfig { seed, ..cfg.adapt.clone() },
                provisional_steps: t.provisional_steps,
                provisional_learning_rate: t.provisional_learning_rate,
                max_observations: cfg.train.max_observations,
                provisional_points: t.provisional_points,
                conditioning_times: t.conditioning_times.clone(),
            };
            let out = transfer_adapt(pair, &data.target_demos, &provisional, &env, &tc, &mut rng)?;
            Ok(TransferRun {
                seed,
                initial_reward: out.adapt.mean_rewards[0],
                iterations_to_success: out.iterations_to_success,
                rollouts_used: out.adapt.rollouts_used,
                best_reward: out.adapt.best_reward,
            })
        })
        .collect()
}

/// The target adapted from its own proxy knowledge only, conditioned on its
/// home pose.
pub fn run_from_scratch(cfg: &ExperimentConfig, target: &CnmpModel, data: &TransferData) -> Result<Vec<TransferRun>> {
    let at = adapt_target(cfg)?;
    cfg.seeds
        .runs
        .iter()
        .map(|&seed| {
            let out = adapt_run(cfg, target, &data.target_demos, &at, seed)?;
            Ok(TransferRun {
                seed,
                initial_reward: out.mean_rewards[0],
                iterations_to_success: iterations_to_success(&out.mean_rewards, at.env.success_threshold()),
                rollouts_used: out.rollouts_used,
                best_reward: out.best_reward,
            })
        })
        .collect()
}

/// Adaptation horizon in policy-gradient iterations.
pub fn iteration_budget(cfg: &ExperimentConfig) -> usize {
    cfg.adapt.max_rollouts / cfg.adapt.rollouts_per_update
}

/// Median of the iteration counts, unsolved runs counting as infinite.
pub fn median_iterations(runs: &[TransferRun]) -> Option<f64> {
    let mut v: Vec<f64> = runs
        .iter()
        .map(|r| r.iterations_to_success.map_or(f64::INFINITY, |i| i as f64))
        .collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let m = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
    m.is_finite().then_some(m)
}

/// One supervised phase on `demos` with a fresh optimizer.
pub fn fine_tune<R: Rng + ?Sized>(
    model: &mut CnmpModel,
    demos: &DemonstrationSet,
    phase: &TrainPhase,
    max_observations: usize,
    rng: &mut R,
) -> Result<f64> {
    let mut opt = CnmpOptimizer::new(model, AdamConfig::with_learning_rate(phase.learning_rate));
    let mut last = f64::NAN;
    for _ in 0..phase.steps {
        last = sl_step(model, &mut opt, demos, phase.batch_size, max_observations, rng)?;
    }
    Ok(last)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(i: Option<usize>) -> TransferRun {
        TransferRun {
            seed: 0,
            initial_reward: 0.0,
            iterations_to_success: i,
            rollouts_used: 0,
            best_reward: 0.0,
        }
    }

    #[test]
    fn median_counts_failures_as_infinite() {
        assert_eq!(median_iterations(&[run(Some(3)), run(Some(1)), run(None)]), Some(3.0));
        assert_eq!(median_iterations(&[run(Some(3)), run(Some(1))]), Some(2.0));
        assert_eq!(median_iterations(&[run(Some(3)), run(None)]), None);
    }

    #[test]
    fn preset_demo_sets_match_model_widths() {
        for name in ["viapoint", "push", "wall", "transfer"] {
            let mut cfg = ExperimentConfig::preset(name).unwrap();
            cfg.model.encoder = vec![8, 4];
            let (d, _) = env_dims(&cfg.env.name).unwrap();
            cfg.model.decoder = vec![8, 2 * d];
            let demos = demo_set(&cfg).unwrap();
            let model = new_model(&cfg.model, &cfg.env.name, &mut model_rng(&cfg)).unwrap();
            crate::cnmp::check_demo_widths(&model, &demos).unwrap();
            let t = adapt_target(&cfg).unwrap();
            assert_eq!(t.env.sm_width(), d, "{name}");
            assert_eq!(t.gamma.len(), model.dims.gamma_width, "{name}");
        }
    }

    #[test]
    fn demo_sets_are_seeded() {
        let cfg = ExperimentConfig::preset("wall").unwrap();
        assert_eq!(demo_set(&cfg).unwrap(), demo_set(&cfg).unwrap());
        let mut other = cfg.clone();
        other.seeds.data += 1;
        assert_ne!(demo_set(&cfg).unwrap(), demo_set(&other).unwrap());
    }
}
