use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cnmp::{CnmpArchitecture, ConditioningPolicy, GammaRouting, DEFAULT_MAX_OBSERVATIONS};
use crate::envs::ENV_NAMES;
use crate::error::{Error, Result};
use crate::rl::AdaptConfig;

/// Everything needed to reproduce a run, apart from the code version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    pub env: EnvConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainSchedule,
    #[serde(default)]
    pub adapt: AdaptConfig,
    #[serde(default)]
    pub seeds: SeedConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub improve: Option<ImproveConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer: Option<TransferSection>,
}

fn default_out_dir() -> String {
    "runs".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub name: String,
    /// Number of demonstrations (via-point, wall) or training targets (push).
    #[serde(default)]
    pub demos: usize,
    #[serde(default = "default_demo_points")]
    pub demo_points: usize,
    /// Parameters of the instance adapted to, in the order of [`crate::envs::EnvSpec`].
    #[serde(default)]
    pub params: Vec<f64>,
    /// Resample every demonstration on its own non-uniform time grid.
    #[serde(default)]
    pub unaligned: bool,
}

fn default_demo_points() -> usize {
    crate::cnmp::DEFAULT_QUERY_POINTS
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: Vec<usize>,
    pub decoder: Vec<usize>,
    #[serde(default)]
    pub gamma_routing: GammaRouting,
}

impl ModelConfig {
    pub fn new(encoder: &[usize], decoder: &[usize], gamma_routing: GammaRouting) -> Self {
        ModelConfig {
            encoder: encoder.to_vec(),
            decoder: decoder.to_vec(),
            gamma_routing,
        }
    }

    pub fn architecture(&self) -> CnmpArchitecture {
        CnmpArchitecture::new(&self.encoder, &self.decoder)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainPhase {
    pub steps: usize,
    pub learning_rate: f64,
    #[serde(default = "one")]
    pub batch_size: usize,
}

fn one() -> usize {
    1
}

/// Supervised training as consecutive phases sharing one optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSchedule {
    #[serde(default = "default_max_observations")]
    pub max_observations: usize,
    #[serde(default)]
    pub phases: Vec<TrainPhase>,
}

fn default_max_observations() -> usize {
    DEFAULT_MAX_OBSERVATIONS
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            max_observations: DEFAULT_MAX_OBSERVATIONS,
            phases: vec![TrainPhase {
                steps: 20_000,
                learning_rate: 1e-4,
                batch_size: 1,
            }],
        }
    }
}

impl TrainSchedule {
    pub fn total_steps(&self) -> usize {
        self.phases.iter().map(|p| p.steps).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    /// Demonstration and environment sampling.
    pub data: u64,
    /// Weight initialization and training case sampling.
    pub model: u64,
    /// One adaptation run per entry.
    pub runs: Vec<u64>,
}

impl Default for SeedConfig {
    fn default() -> Self {
        SeedConfig {
            data: 1,
            model: 1,
            runs: vec![0],
        }
    }
}

/// Self-improvement over freshly sampled wall environments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImproveConfig {
    pub test_envs: usize,
    pub test_seed: u64,
    pub new_envs: usize,
    pub new_seed: u64,
    /// Supervised steps on the grown set after each assimilation.
    pub retrain_steps: usize,
    pub retrain_learning_rate: f64,
    /// Test error is measured after every this many new environments.
    pub checkpoint_every: usize,
}

/// The source agent and the joint-training and provisional-demo settings of a
/// transfer experiment. The `[model]` section describes the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferSection {
    pub source: ModelConfig,
    pub source_points: usize,
    pub target_points: usize,
    pub alignment_weight: f64,
    pub phases: Vec<TrainPhase>,
    /// Observations drawn from the source solution for cross generation.
    pub cross_observations: usize,
    pub provisional_points: usize,
    pub provisional_steps: usize,
    pub provisional_learning_rate: f64,
    pub conditioning_times: Vec<f64>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !ENV_NAMES.contains(&self.env.name.as_str()) {
            return Err(Error::Config(format!(
                "unknown environment `{}` (known: {})",
                self.env.name,
                ENV_NAMES.join(", ")
            )));
        }
        if self.model.encoder.is_empty() || self.model.decoder.is_empty() {
            return Err(Error::Config("encoder and decoder need at least one layer".into()));
        }
        if self.env.demo_points < 2 {
            return Err(Error::Config("demo_points must be at least 2".into()));
        }
        if self.train.phases.iter().any(|p| !(p.learning_rate > 0.0) || p.batch_size == 0) {
            return Err(Error::Config("training phases need a positive learning rate and batch size".into()));
        }
        if self.seeds.runs.is_empty() {
            return Err(Error::Config("seeds.runs must list at least one seed".into()));
        }
        self.adapt.validate()?;
        if let Some(t) = &self.transfer {
            if t.cross_observations == 0 || t.provisional_points < 2 {
                return Err(Error::Config(
                    "transfer needs cross_observations >= 1 and provisional_points >= 2".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file, or a built-in preset when `source` names one and
    /// no such file exists.
    pub fn load(source: &str) -> Result<Self> {
        let path = Path::new(source);
        if path.exists() {
            return Self::from_toml(&std::fs::read_to_string(path)?);
        }
        Self::preset(source).ok_or_else(|| {
            Error::Config(format!(
                "no config file `{source}` and no preset of that name (presets: {})",
                EXPERIMENT_PRESETS.join(", ")
            ))
        })
    }

    /// Hex SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }

    pub fn preset(name: &str) -> Option<Self> {
        let cfg = match name {
            "viapoint" => viapoint(),
            "viapoint-latent2" => ExperimentConfig {
                name: "viapoint-latent2".into(),
                model: ModelConfig::new(&[128, 64, 32, 16, 2], &[124, 124, 2], GammaRouting::None),
                ..viapoint()
            },
            "viapoint-unaligned" => {
                let mut c = viapoint();
                c.name = "viapoint-unaligned".into();
                c.env.unaligned = true;
                c
            }
            "push" => push(),
            "wall" => wall(),
            "transfer" => transfer(),
            _ => return None,
        };
        Some(cfg)
    }
}

pub const EXPERIMENT_PRESETS: [&str; 6] = [
    "viapoint",
    "viapoint-latent2",
    "viapoint-unaligned",
    "push",
    "wall",
    "transfer",
];

/// Names of the published network sizes.
pub const NETWORK_PRESETS: [&str; 7] = [
    "obstacle",
    "push",
    "wall",
    "transfer3",
    "transfer4",
    "pick-and-place",
    "pouring",
];

/// Published encoder and decoder widths by task.
pub fn network_preset(name: &str) -> Option<ModelConfig> {
    let (e, d): (&[usize], &[usize]) = match name {
        "obstacle" => (&[128, 64, 32, 16, 8], &[124, 124, 2]),
        "push" => (&[128, 128, 64, 32], &[128, 128, 128, 6]),
        "wall" => (&[128, 128, 128, 64], &[128, 128, 64, 32, 4]),
        "transfer3" => (&[128, 128, 128, 64], &[128, 128, 128, 128, 6]),
        "transfer4" => (&[128, 128, 128, 64], &[128, 128, 128, 128, 8]),
        "pick-and-place" => (&[128, 128, 64, 32], &[128, 128, 128, 12]),
        "pouring" => (&[128, 128, 64, 32], &[128, 128, 128, 2]),
        _ => return None,
    };
    Some(ModelConfig::new(e, d, GammaRouting::Both))
}

fn phases(list: &[(usize, f64, usize)]) -> Vec<TrainPhase> {
    list.iter()
        .map(|&(steps, learning_rate, batch_size)| TrainPhase {
            steps,
            learning_rate,
            batch_size,
        })
        .collect()
}

fn viapoint() -> ExperimentConfig {
    ExperimentConfig {
        name: "viapoint".into(),
        out_dir: default_out_dir(),
        env: EnvConfig {
            name: "viapoint2d".into(),
            demos: 6,
            demo_points: 200,
            params: vec![0.5, 1.1],
            unaligned: false,
        },
        model: ModelConfig {
            gamma_routing: GammaRouting::None,
            ..network_preset("obstacle").unwrap()
        },
        train: TrainSchedule {
            max_observations: DEFAULT_MAX_OBSERVATIONS,
            phases: phases(&[(60_000, 1e-3, 8), (30_000, 1e-4, 8)]),
        },
        adapt: AdaptConfig {
            rl_learning_rate: 3e-3,
            sl_learning_rate: 1e-3,
            sl_steps: 4,
            rollouts_per_update: 5,
            query_points: 50,
            max_rollouts: 200,
            retention_policy: ConditioningPolicy::AtTimes(vec![0.5]),
            ..AdaptConfig::default()
        },
        seeds: SeedConfig {
            data: 1,
            model: 1,
            runs: vec![0, 1, 2, 3, 4],
        },
        improve: None,
        transfer: None,
    }
}

fn push() -> ExperimentConfig {
    let target = crate::envs::push_targets()[9];
    ExperimentConfig {
        name: "push".into(),
        out_dir: default_out_dir(),
        env: EnvConfig {
            name: "push".into(),
            demos: 9,
            demo_points: 200,
            params: target.to_vec(),
            unaligned: false,
        },
        model: network_preset("push").unwrap(),
        train: TrainSchedule {
            max_observations: DEFAULT_MAX_OBSERVATIONS,
            phases: phases(&[(60_000, 1e-3, 1), (30_000, 1e-4, 4)]),
        },
        adapt: AdaptConfig {
            rl_learning_rate: 1e-3,
            sl_learning_rate: 1e-3,
            sl_steps: 4,
            rollouts_per_update: 5,
            query_points: 20,
            max_rollouts: 500,
            retention_every: 0,
            ..AdaptConfig::default()
        },
        seeds: SeedConfig {
            data: 1,
            model: 1,
            runs: vec![0, 1, 2, 3, 4],
        },
        improve: None,
        transfer: None,
    }
}

fn wall() -> ExperimentConfig {
    ExperimentConfig {
        name: "wall".into(),
        out_dir: default_out_dir(),
        env: EnvConfig {
            name: "wall".into(),
            demos: 30,
            demo_points: 100,
            params: vec![5.0, 5.0, 8.0, 2.0],
            unaligned: false,
        },
        model: network_preset("wall").unwrap(),
        train: TrainSchedule {
            max_observations: DEFAULT_MAX_OBSERVATIONS,
            phases: phases(&[(30_000, 1e-3, 1), (15_000, 1e-4, 4)]),
        },
        adapt: AdaptConfig {
            rl_learning_rate: 1e-3,
            sl_learning_rate: 1e-3,
            sl_steps: 4,
            rollouts_per_update: 5,
            query_points: 50,
            max_rollouts: 1400,
            retention_every: 0,
            ..AdaptConfig::default()
        },
        seeds: SeedConfig {
            data: 7,
            model: 7,
            runs: vec![0],
        },
        improve: Some(ImproveConfig {
            test_envs: 100,
            test_seed: 1000,
            new_envs: 100,
            new_seed: 2000,
            retrain_steps: 2000,
            retrain_learning_rate: 1e-4,
            checkpoint_every: 20,
        }),
        transfer: None,
    }
}

fn transfer() -> ExperimentConfig {
    ExperimentConfig {
        name: "transfer".into(),
        out_dir: default_out_dir(),
        env: EnvConfig {
            name: "button".into(),
            demos: 4,
            demo_points: 120,
            params: vec![],
            unaligned: false,
        },
        model: network_preset("transfer4").unwrap(),
        train: TrainSchedule {
            max_observations: DEFAULT_MAX_OBSERVATIONS,
            phases: vec![],
        },
        adapt: AdaptConfig {
            rl_learning_rate: 3e-4,
            sl_learning_rate: 1e-3,
            sl_steps: 4,
            rollouts_per_update: 5,
            query_points: 20,
            exploration_scale: 0.5,
            max_rollouts: 500,
            retention_every: 0,
            ..AdaptConfig::default()
        },
        seeds: SeedConfig {
            data: 1,
            model: 1,
            runs: (0..10).collect(),
        },
        improve: None,
        transfer: Some(TransferSection {
            source: network_preset("transfer3").unwrap(),
            source_points: 200,
            target_points: 120,
            alignment_weight: 1000.0,
            phases: phases(&[(20_000, 1e-3, 1), (10_000, 1e-4, 1)]),
            cross_observations: 3,
            provisional_points: 100,
            provisional_steps: 6000,
            provisional_learning_rate: 1e-3,
            conditioning_times: vec![0.0, 0.5, 1.0],
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip() {
        for name in EXPERIMENT_PRESETS {
            let cfg = ExperimentConfig::preset(name).unwrap();
            cfg.validate().unwrap();
            let text = cfg.to_toml().unwrap();
            assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg, "{name}");
        }
    }

    #[test]
    fn network_table() {
        let o = network_preset("obstacle").unwrap();
        assert_eq!(o.encoder, vec![128, 64, 32, 16, 8]);
        assert_eq!(o.decoder, vec![124, 124, 2]);
        assert_eq!(network_preset("transfer4").unwrap().decoder, vec![128, 128, 128, 128, 8]);
        for n in NETWORK_PRESETS {
            assert!(network_preset(n).is_some(), "{n}");
        }
        assert!(network_preset("nope").is_none());
    }

    #[test]
    fn unknown_keys_and_envs_are_config_errors() {
        let mut text = ExperimentConfig::preset("push").unwrap().to_toml().unwrap();
        text.push_str("\nbogus = 1\n");
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(Error::Config(_))));
        let mut cfg = ExperimentConfig::preset("push").unwrap();
        cfg.env.name = "moon".into();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::preset("viapoint").unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.adapt.seed = 9;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        assert_eq!(a.hash().unwrap().len(), 64);
    }
}
