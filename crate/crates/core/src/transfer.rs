//! Skill transfer between two CNMPs with different sensorimotor widths.
//!
//! Both models are trained on the same proxy tasks while the aggregated
//! representations of matched observation sets are pulled together. The
//! source encoder can then condition the target decoder.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cnmp::{
    sample_case_from, sl_loss_into, CnmpGrads, CnmpModel, CnmpOptimizer,
    DemonstrationSet, ObservationPoint, TrainingCase, Trajectory, DEFAULT_MAX_OBSERVATIONS,
};
use crate::envs::Environment;
use crate::error::{check_len, Error, Result};
use crate::nn::AdamConfig;
use crate::rl::{interleaved_adapt, AdaptConfig, AdaptOutcome};

#[derive(Debug, Clone, PartialEq)]
pub struct PairedModels {
    pub source: CnmpModel,
    pub target: CnmpModel,
}

impl PairedModels {
    pub fn new(source: CnmpModel, target: CnmpModel) -> Result<Self> {
        check_len("paired latent width", source.dims.latent_width, target.dims.latent_width)?;
        check_len("paired gamma width", source.dims.gamma_width, target.dims.gamma_width)?;
        Ok(PairedModels { source, target })
    }

    pub fn latent_width(&self) -> usize {
        self.source.dims.latent_width
    }
}

/// The same proxy task instance demonstrated by both agents. The two time
/// grids are independent.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDemo {
    pub source: Trajectory,
    pub target: Trajectory,
}

impl PairedDemo {
    pub fn new(source: Trajectory, target: Trajectory) -> Result<Self> {
        if source.task_params != target.task_params {
            return Err(Error::InvalidInput(format!(
                "paired demos `{}` and `{}` have different task parameters",
                source.id, target.id
            )));
        }
        Ok(PairedDemo { source, target })
    }

    pub fn gamma(&self) -> &[f64] {
        &self.source.task_params
    }
}

/// Pairs two demonstration sets by position.
pub fn pair_demos(source: &DemonstrationSet, target: &DemonstrationSet) -> Result<Vec<PairedDemo>> {
    check_len("paired demonstration count", source.len(), target.len())?;
    source
        .trajectories()
        .iter()
        .zip(target.trajectories())
        .map(|(s, t)| PairedDemo::new(s.clone(), t.clone()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub max_observations: usize,
    /// Weight of the latent distance term; 1 is the plain sum.
    pub alignment_weight: f64,
}

impl Default for JointConfig {
    fn default() -> Self {
        JointConfig {
            steps: 20_000,
            learning_rate: AdamConfig::default().learning_rate,
            max_observations: DEFAULT_MAX_OBSERVATIONS,
            alignment_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PairedOptimizer {
    pub source: CnmpOptimizer,
    pub target: CnmpOptimizer,
}

impl PairedOptimizer {
    pub fn new(pair: &PairedModels, config: AdamConfig) -> Self {
        PairedOptimizer {
            source: CnmpOptimizer::new(&pair.source, config),
            target: CnmpOptimizer::new(&pair.target, config),
        }
    }
}

/// One sampled case of the joint loss.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCase {
    pub source: TrainingCase,
    pub target: TrainingCase,
    /// Matched observation sets read off both trajectories at the same times.
    pub align_source: Vec<ObservationPoint>,
    pub align_target: Vec<ObservationPoint>,
}

pub fn sample_joint_case<R: Rng + ?Sized>(demo: &PairedDemo, max_observations: usize, rng: &mut R) -> JointCase {
    let source = sample_case_from(&demo.source, max_observations, rng);
    let target = sample_case_from(&demo.target, max_observations, rng);
    let n = rng.random_range(1..=max_observations.max(1));
    let times: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    JointCase {
        source,
        target,
        align_source: times.iter().map(|&t| ObservationPoint::at_time(&demo.source, t)).collect(),
        align_target: times.iter().map(|&t| ObservationPoint::at_time(&demo.target, t)).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLosses {
    pub source: f64,
    pub target: f64,
    pub align: f64,
}

impl JointLosses {
    pub fn total(&self, alignment_weight: f64) -> f64 {
        self.source + self.target + alignment_weight * self.align
    }
}

/// Mean squared difference of two representations.
pub fn latent_mse(r1: &[f64], r2: &[f64]) -> Result<f64> {
    check_len("latent distance", r1.len(), r2.len())?;
    Ok(r1.iter().zip(r2).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / r1.len() as f64)
}

/// Joint loss of one case and its gradients for both models.
pub fn joint_loss_and_grads(
    pair: &PairedModels,
    case: &JointCase,
    alignment_weight: f64,
) -> Result<(JointLosses, CnmpGrads, CnmpGrads)> {
    let mut gs = pair.source.zero_grads();
    let mut gt = pair.target.zero_grads();
    let source = sl_loss_into(&pair.source, &case.source, &mut gs)?;
    let target = sl_loss_into(&pair.target, &case.target, &mut gt)?;

    let p1 = pair.source.condition_recorded(&case.align_source)?;
    let p2 = pair.target.condition_recorded(&case.align_target)?;
    let (r1, r2) = (&p1.latent.values, &p2.latent.values);
    let align = latent_mse(r1, r2)?;
    let scale = 2.0 * alignment_weight / r1.len() as f64;
    let d1: Vec<f64> = r1.iter().zip(r2).map(|(a, b)| scale * (a - b)).collect();
    let d2: Vec<f64> = d1.iter().map(|v| -v).collect();
    pair.source.backprop_latent(&p1, &d1, &mut gs.encoder)?;
    pair.target.backprop_latent(&p2, &d2, &mut gt.encoder)?;
    Ok((JointLosses { source, target, align }, gs, gt))
}

/// Samples a case from `demo` and applies one Adam step to each model, source
/// first.
pub fn joint_train_step<R: Rng + ?Sized>(
    pair: &mut PairedModels,
    optimizer: &mut PairedOptimizer,
    demo: &PairedDemo,
    config: &JointConfig,
    rng: &mut R,
) -> Result<JointLosses> {
    check_len("paired demo gamma", pair.source.dims.gamma_width, demo.gamma().len())?;
    let case = sample_joint_case(demo, config.max_observations, rng);
    let (losses, mut gs, mut gt) = joint_loss_and_grads(pair, &case, config.alignment_weight)?;
    optimizer.source.apply(&mut pair.source, &mut gs)?;
    optimizer.target.apply(&mut pair.target, &mut gt)?;
    Ok(losses)
}

/// Joint training over uniformly drawn proxy pairs. `source_extra` holds
/// demonstrations only the source has seen; when non-empty, every step also
/// takes one supervised source step on them.
pub fn joint_train<R: Rng + ?Sized>(
    pair: &mut PairedModels,
    optimizer: &mut PairedOptimizer,
    demos: &[PairedDemo],
    source_extra: Option<&DemonstrationSet>,
    config: &JointConfig,
    rng: &mut R,
) -> Result<Vec<JointLosses>> {
    if demos.is_empty() {
        return Err(Error::InvalidInput("joint training needs at least one paired demo".into()));
    }
    optimizer.source.set_learning_rate(config.learning_rate);
    optimizer.target.set_learning_rate(config.learning_rate);
    let mut out = Vec::with_capacity(config.steps);
    for _ in 0..config.steps {
        let demo = &demos[rng.random_range(0..demos.len())];
        out.push(joint_train_step(pair, optimizer, demo, config, rng)?);
        if let Some(extra) = source_extra.filter(|d| !d.is_empty()) {
            crate::cnmp::sl_step(&mut pair.source, &mut optimizer.source, extra, 1, config.max_observations, rng)?;
        }
    }
    Ok(out)
}

/// Mean latent distance between matched observation sets of each pair, using
/// the same `times` for every pair.
pub fn mean_alignment(pair: &PairedModels, demos: &[PairedDemo], times: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for d in demos {
        let o1: Vec<_> = times.iter().map(|&t| ObservationPoint::at_time(&d.source, t)).collect();
        let o2: Vec<_> = times.iter().map(|&t| ObservationPoint::at_time(&d.target, t)).collect();
        total += latent_mse(&pair.source.condition(&o1)?.values, &pair.target.condition(&o2)?.values)?;
    }
    Ok(total / demos.len() as f64)
}

/// Decodes the source encoder's representation of `observations` with the
/// target decoder.
pub fn cross_generate_from(
    pair: &PairedModels,
    observations: &[ObservationPoint],
    gamma: &[f64],
    query_times: &[f64],
) -> Result<Trajectory> {
    let rep = pair.source.condition(observations)?;
    let preds = pair.target.predict_from_latent(&rep, gamma, query_times)?;
    Trajectory::new(
        "cross-generated",
        gamma.to_vec(),
        query_times.to_vec(),
        preds.into_iter().map(|p| p.mu).collect(),
    )
}

/// [`cross_generate_from`] conditioned on `n_obs` observations drawn at
/// uniform random times from the source solution.
pub fn cross_generate<R: Rng + ?Sized>(
    pair: &PairedModels,
    source_solution: &Trajectory,
    query_times: &[f64],
    n_obs: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    if n_obs == 0 {
        return Err(Error::InvalidInput("cross generation needs at least one observation".into()));
    }
    let obs: Vec<_> = (0..n_obs)
        .map(|_| ObservationPoint::at_time(source_solution, rng.random::<f64>()))
        .collect();
    cross_generate_from(pair, &obs, &source_solution.task_params, query_times)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferConfig {
    pub adapt: AdaptConfig,
    /// Supervised steps on the target after adding the provisional demo.
    pub provisional_steps: usize,
    pub provisional_learning_rate: f64,
    pub max_observations: usize,
    /// Query grid of the provisional demonstration.
    pub provisional_points: usize,
    /// Times at which the provisional demonstration conditions adaptation.
    pub conditioning_times: Vec<f64>,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            adapt: AdaptConfig::default(),
            provisional_steps: 2000,
            provisional_learning_rate: 1e-3,
            max_observations: DEFAULT_MAX_OBSERVATIONS,
            provisional_points: 100,
            conditioning_times: vec![0.0],
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransferOutcome {
    pub provisional: Trajectory,
    pub adapt: AdaptOutcome,
    /// Iterations (policy-gradient updates) before the mean trajectory
    /// succeeded, `None` if it never did.
    pub iterations_to_success: Option<usize>,
}

/// Seeds the target with the cross-generated trajectory as a provisional
/// demonstration, then adapts it on the target environment.
pub fn transfer_adapt<R: Rng + ?Sized>(
    pair: &PairedModels,
    target_demos: &DemonstrationSet,
    provisional: &Trajectory,
    env: &dyn Environment,
    config: &TransferConfig,
    rng: &mut R,
) -> Result<TransferOutcome> {
    let provisional = provisional.clone().with_id("provisional");
    let demos = crate::rl::assimilate(target_demos, &provisional)?;
    let mut model = pair.target.clone();
    let mut opt = CnmpOptimizer::new(&model, AdamConfig::with_learning_rate(config.provisional_learning_rate));
    for _ in 0..config.provisional_steps {
        crate::cnmp::sl_step(&mut model, &mut opt, &demos, 1, config.max_observations, rng)?;
    }
    let conditioning: Vec<_> = config
        .conditioning_times
        .iter()
        .map(|&t| ObservationPoint::at_time(&provisional, t))
        .collect();
    let adapt = interleaved_adapt(&model, &demos, env, &provisional.task_params, &conditioning, &config.adapt)?;
    let iterations_to_success = adapt.success.then(|| iterations_to_success(&adapt.mean_rewards, env.success_threshold()));
    Ok(TransferOutcome {
        provisional,
        adapt,
        iterations_to_success: iterations_to_success.flatten(),
    })
}

/// First index in the mean-reward series that meets the threshold. Index 0 is
/// the unadapted model.
pub fn iterations_to_success(mean_rewards: &[f64], threshold: f64) -> Option<usize> {
    mean_rewards.iter().position(|&r| r >= threshold)
}

/// Fraction of runs solved by each iteration `0..=horizon`, best-so-far form.
pub fn success_rate_curve(iterations: &[Option<usize>], horizon: usize) -> Vec<f64> {
    (0..=horizon)
        .map(|k| {
            let solved = iterations.iter().filter(|i| i.is_some_and(|i| i <= k)).count();
            solved as f64 / iterations.len().max(1) as f64
        })
        .collect()
}
