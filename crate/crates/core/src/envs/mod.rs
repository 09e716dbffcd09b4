//! Analytic benchmark environments.
//!
//! Every environment scores a complete trajectory with a reward that is at
//! most zero, zero being the unique perfect score.

pub mod button;
pub mod kinematics;
pub mod push;
pub mod viapoint;
pub mod wall;

use serde::{Deserialize, Serialize};

use crate::cnmp::Trajectory;
use crate::error::{Error, Result};

pub use button::{ButtonEnv, Gap};
pub use kinematics::{fk_planar, ArmPose, PlanarArm};
pub use push::{push_demos, push_targets, PushEnv, PushScene};
pub use viapoint::{viapoint_demos, viapoint_reward, Ellipse, ViaPointEnv, ViaPointScene};
pub use wall::{sample_wall_env, WallEnv};

/// A task that turns a complete trajectory into a terminal reward.
pub trait Environment {
    fn name(&self) -> &str;

    /// Width of the trajectories this environment evaluates.
    fn sm_width(&self) -> usize;

    /// Pure function of the environment and the trajectory.
    fn evaluate(&self, traj: &Trajectory) -> Result<f64>;

    /// Rewards at or above this value count as success.
    fn success_threshold(&self) -> f64;

    fn is_success(&self, reward: f64) -> bool {
        reward >= self.success_threshold()
    }
}

pub(crate) fn check_width(env: &dyn Environment, traj: &Trajectory) -> Result<()> {
    if traj.sm_width() != env.sm_width() {
        return Err(Error::Dimension {
            context: "environment trajectory width",
            expected: env.sm_width(),
            actual: traj.sm_width(),
        });
    }
    Ok(())
}

/// Evaluates model-space trajectories in an environment whose coordinates are
/// an affine image of the model's: `env = offset + scale * model`.
#[derive(Debug, Clone)]
pub struct Scaled<E> {
    pub inner: E,
    pub scale: f64,
    pub offset: f64,
}

impl<E: Environment> Scaled<E> {
    pub fn new(inner: E, scale: f64, offset: f64) -> Self {
        Scaled {
            inner,
            scale,
            offset,
        }
    }

    pub fn to_env(&self, traj: &Trajectory) -> Result<Trajectory> {
        traj.map_values(|v| v.iter().map(|x| self.offset + self.scale * x).collect())
    }

    pub fn to_model(&self, traj: &Trajectory) -> Result<Trajectory> {
        traj.map_values(|v| v.iter().map(|x| (x - self.offset) / self.scale).collect())
    }
}

impl<E: Environment> Environment for Scaled<E> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn sm_width(&self) -> usize {
        self.inner.sm_width()
    }

    fn evaluate(&self, traj: &Trajectory) -> Result<f64> {
        self.inner.evaluate(&self.to_env(traj)?)
    }

    fn success_threshold(&self) -> f64 {
        self.inner.success_threshold()
    }
}

/// Serializable description of an environment instance: a name and a flat
/// parameter list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

impl EnvSpec {
    pub fn new(name: impl Into<String>, params: Vec<f64>) -> Self {
        EnvSpec {
            name: name.into(),
            params,
        }
    }
}

/// Names accepted by [`EnvSpec`].
pub const ENV_NAMES: [&str; 4] = ["viapoint2d", "push", "wall", "button"];

/// Builds a boxed environment from its serialized description.
pub fn build_env(spec: &EnvSpec) -> Result<Box<dyn Environment>> {
    let p = &spec.params;
    let need = |n: usize| -> Result<()> {
        if p.len() == n {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "environment `{}` takes {n} parameters, got {}",
                spec.name,
                p.len()
            )))
        }
    };
    match spec.name.as_str() {
        "viapoint2d" => {
            need(2)?;
            Ok(Box::new(ViaPointEnv::new(p[0], vec![p[1]])))
        }
        "push" => {
            need(2)?;
            Ok(Box::new(PushEnv::new(PushScene::canonical(), [p[0], p[1]])))
        }
        "wall" => {
            need(4)?;
            Ok(Box::new(Scaled::new(
                WallEnv::new(p[0], p[1], p[2], p[3])?,
                wall::WORKSPACE,
                0.0,
            )))
        }
        "button" => {
            need(0)?;
            Ok(Box::new(ButtonEnv::canonical(PlanarArm::four_dof())))
        }
        other => Err(Error::Config(format!(
            "unknown environment `{other}` (known: {})",
            ENV_NAMES.join(", ")
        ))),
    }
}

/// Serializes an environment instance back into its [`EnvSpec`].
pub trait ToEnvSpec {
    fn env_spec(&self) -> EnvSpec;
}
