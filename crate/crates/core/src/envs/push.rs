//! Quasi-static pushing of a disc by the end effector of a planar arm.
//!
//! The disc never rotates and has no friction. The end effector carries a
//! short flat pusher facing along the last link; whenever the pusher overlaps
//! the disc, the disc is moved along the contact normal until the two just
//! touch. The joint trajectory is interpolated linearly
//! and sub-stepped finely enough that the result is insensitive to the
//! sampling density of the trajectory.

use serde::{Deserialize, Serialize};

use crate::cnmp::{uniform_times, DemonstrationSet, Trajectory};
use crate::envs::kinematics::{PlanarArm, WaypointPath};
use crate::envs::{check_width, EnvSpec, Environment, ToEnvSpec};
use crate::error::{Error, Result};

/// Largest joint increment between simulated end-effector samples, radians.
pub const MAX_JOINT_STEP: f64 = 2e-3;

/// Success tolerance for pushing tasks, workspace units.
pub const PUSH_TOLERANCE: f64 = 0.01;

/// Dense end-effector pose path `[x, y, heading]` of a joint trajectory.
pub fn end_effector_path(arm: &PlanarArm, traj: &Trajectory) -> Result<Vec<[f64; 3]>> {
    let values = traj.values();
    let mut path = vec![arm.pose(&values[0])?];
    let mut q = vec![0.0; arm.dof()];
    for w in values.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let span = a
            .iter()
            .zip(b)
            .map(|(x, y)| (y - x).abs())
            .fold(0.0, f64::max);
        let n = ((span / MAX_JOINT_STEP).ceil() as usize).max(1);
        for k in 1..=n {
            let f = k as f64 / n as f64;
            for j in 0..q.len() {
                q[j] = a[j] + f * (b[j] - a[j]);
            }
            path.push(arm.pose(&q)?);
        }
    }
    Ok(path)
}

/// Half-width of the flat pusher carried by the end effector.
pub const PADDLE_HALF_WIDTH: f64 = 0.02;

/// Moves a disc of radius `radius` out of the way of the pusher.
///
/// The pusher is a segment of half-width [`PADDLE_HALF_WIDTH`] centred on the
/// end effector pose `[x, y, heading]`, its face normal along the heading of
/// the last link. The disc is translated along the line from the nearest
/// pusher point to its centre until the two just touch.
pub fn resolve_contact(center: [f64; 2], radius: f64, pose: [f64; 3]) -> [f64; 2] {
    let u = [pose[2].cos(), pose[2].sin()];
    let side = [-u[1], u[0]];
    let rel = [center[0] - pose[0], center[1] - pose[1]];
    let lateral = (rel[0] * side[0] + rel[1] * side[1]).clamp(-PADDLE_HALF_WIDTH, PADDLE_HALF_WIDTH);
    let p = [pose[0] + lateral * side[0], pose[1] + lateral * side[1]];
    let d = [center[0] - p[0], center[1] - p[1]];
    let dist = (d[0] * d[0] + d[1] * d[1]).sqrt();
    if dist >= radius {
        return center;
    }
    let n = if dist > 1e-12 { [d[0] / dist, d[1] / dist] } else { u };
    [p[0] + radius * n[0], p[1] + radius * n[1]]
}

/// Final disc centre after the arm follows `traj`.
pub fn simulate_push(arm: &PlanarArm, traj: &Trajectory, start: [f64; 2], radius: f64) -> Result<[f64; 2]> {
    Ok(end_effector_path(arm, traj)?
        .into_iter()
        .fold(start, |c, pose| resolve_contact(c, radius, pose)))
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Maps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r - two_pi
    } else {
        r
    }
}

fn unit(from: [f64; 2], to: [f64; 2]) -> [f64; 2] {
    let d = distance(from, to);
    [(to[0] - from[0]) / d, (to[1] - from[1]) / d]
}

/// Layout of the pushing task: arm, disc, and the arc of target positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushScene {
    pub arm: PlanarArm,
    pub disc_start: [f64; 2],
    pub disc_radius: f64,
    /// End-effector rest pose at the start and the joint seed used to reach it.
    pub home: [f64; 2],
    pub home_heading: f64,
    pub home_seed: Vec<f64>,
    /// Targets lie on an arc of this radius around the disc start.
    pub arc_radius: f64,
    /// Push directions of the first and last target, radians.
    pub arc_from: f64,
    pub arc_to: f64,
    pub target_count: usize,
    /// Gap between the end effector and the disc rim before the push starts.
    pub approach_clearance: f64,
}

impl PushScene {
    pub fn canonical() -> Self {
        PushScene {
            arm: PlanarArm::three_dof(),
            disc_start: [0.45, 0.0],
            disc_radius: 0.05,
            home: [0.35, 0.0],
            home_heading: 0.0,
            home_seed: vec![0.9, -1.8, 0.9],
            arc_radius: 0.25,
            arc_from: -1.0,
            arc_to: 1.0,
            target_count: 10,
            approach_clearance: 0.03,
        }
    }

    /// Targets in order along the arc.
    pub fn targets(&self) -> Vec<[f64; 2]> {
        let n = self.target_count;
        (0..n)
            .map(|k| {
                let f = if n == 1 { 0.5 } else { k as f64 / (n - 1) as f64 };
                let a = self.arc_from + f * (self.arc_to - self.arc_from);
                [
                    self.disc_start[0] + self.arc_radius * a.cos(),
                    self.disc_start[1] + self.arc_radius * a.sin(),
                ]
            })
            .collect()
    }

    pub fn home_joints(&self) -> Result<Vec<f64>> {
        let (q, err) = self.arm.solve_pose_ik([self.home[0], self.home[1], self.home_heading], &self.home_seed)?;
        if err > 1e-9 {
            return Err(Error::Synthesis("home pose unreachable".into()));
        }
        Ok(q)
    }

    /// Scripted push: home, then a pose behind the disc facing the target,
    /// then straight ahead until the disc centre lands on the target.
    pub fn script(&self, target: [f64; 2]) -> Result<WaypointPath<3>> {
        let u = unit(self.disc_start, target);
        let h0 = self.home_heading;
        let h = h0 + wrap_angle(u[1].atan2(u[0]) - h0);
        let back = self.disc_radius + self.approach_clearance;
        let pre = [self.disc_start[0] - back * u[0], self.disc_start[1] - back * u[1], h];
        let end = [target[0] - self.disc_radius * u[0], target[1] - self.disc_radius * u[1], h];
        WaypointPath::new(vec![[self.home[0], self.home[1], h0], pre, end], vec![0.0, 0.35, 1.0])
    }

    /// Joint-space demonstration pushing the disc to `target`, checked against
    /// the simulator.
    pub fn demo(&self, id: impl Into<String>, target: [f64; 2], points: usize) -> Result<Trajectory> {
        let id = id.into();
        let times = uniform_times(points);
        let path = self.script(target)?.sample(&times);
        let joints = self.arm.track_pose(&path, &self.home_joints()?, 1e-9)?;
        let traj = Trajectory::new(id.clone(), target.to_vec(), times, joints)?;
        let reward = PushEnv::new(self.clone(), target).evaluate(&traj)?;
        if reward < -PUSH_TOLERANCE {
            return Err(Error::Synthesis(format!(
                "scripted push `{id}` misses its target (reward {reward:.4})"
            )));
        }
        Ok(traj)
    }
}

/// The canonical target arc.
pub fn push_targets() -> Vec<[f64; 2]> {
    PushScene::canonical().targets()
}

/// One verified demonstration per target on a 200-point grid; γ is the target.
pub fn push_demos(scene: &PushScene, targets: &[[f64; 2]]) -> Result<DemonstrationSet> {
    let trajs = targets
        .iter()
        .enumerate()
        .map(|(k, &g)| scene.demo(format!("push-{k}"), g, crate::cnmp::DEFAULT_QUERY_POINTS))
        .collect::<Result<Vec<_>>>()?;
    DemonstrationSet::new(trajs)
}

/// Push the disc onto `target`; reward is minus the final distance.
#[derive(Debug, Clone, PartialEq)]
pub struct PushEnv {
    pub scene: PushScene,
    pub target: [f64; 2],
}

impl PushEnv {
    pub fn new(scene: PushScene, target: [f64; 2]) -> Self {
        PushEnv { scene, target }
    }

    pub fn final_disc(&self, traj: &Trajectory) -> Result<[f64; 2]> {
        simulate_push(&self.scene.arm, traj, self.scene.disc_start, self.scene.disc_radius)
    }
}

impl Environment for PushEnv {
    fn name(&self) -> &str {
        "push"
    }

    fn sm_width(&self) -> usize {
        self.scene.arm.dof()
    }

    fn evaluate(&self, traj: &Trajectory) -> Result<f64> {
        check_width(self, traj)?;
        Ok(-distance(self.final_disc(traj)?, self.target))
    }

    fn success_threshold(&self) -> f64 {
        -PUSH_TOLERANCE
    }
}

impl ToEnvSpec for PushEnv {
    fn env_spec(&self) -> EnvSpec {
        EnvSpec::new("push", self.target.to_vec())
    }
}
