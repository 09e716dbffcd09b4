//! Threading a narrow opening and pushing a cube onto its goal.
//!
//! A vertical barrier at `x = gap.x` blocks the end effector except inside the
//! opening. Crossing the barrier anywhere else is a collision: the episode
//! ends with the cube where it started. The cube is pushed quasi-statically
//! like the disc of the pushing task.

use serde::{Deserialize, Serialize};

use crate::cnmp::{uniform_times, Trajectory};
use crate::envs::kinematics::{PlanarArm, WaypointPath};
use crate::envs::push::{end_effector_path, resolve_contact, wrap_angle, PUSH_TOLERANCE};
use crate::envs::{check_width, EnvSpec, Environment, ToEnvSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub x: f64,
    pub center_y: f64,
    pub half_width: f64,
}

impl Gap {
    /// True if the segment `a -> b` crosses the barrier outside the opening.
    pub fn blocks(&self, a: [f64; 2], b: [f64; 2]) -> bool {
        let (da, db) = (a[0] - self.x, b[0] - self.x);
        if (da < 0.0) == (db < 0.0) {
            return false;
        }
        let f = da / (da - db);
        let y = a[1] + f * (b[1] - a[1]);
        (y - self.center_y).abs() >= self.half_width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ButtonEnv {
    pub arm: PlanarArm,
    pub home: [f64; 2],
    pub home_heading: f64,
    pub home_seed: Vec<f64>,
    pub gap: Gap,
    pub cube_start: [f64; 2],
    pub cube_radius: f64,
    pub cube_goal: [f64; 2],
}

impl ButtonEnv {
    pub fn canonical(arm: PlanarArm) -> Self {
        let home_seed = match arm.dof() {
            3 => vec![-0.9, 1.8, 0.6],
            n => {
                let mut s = vec![0.6; n];
                s[0] = -0.9;
                s
            }
        };
        let push_dir: f64 = 0.0;
        let cube_start = [0.66, 0.25];
        ButtonEnv {
            arm,
            home: [0.3, -0.1],
            home_heading: 0.0,
            home_seed,
            gap: Gap {
                x: 0.5,
                center_y: 0.25,
                half_width: 0.05,
            },
            cube_start,
            cube_radius: 0.04,
            cube_goal: [
                cube_start[0] + 0.15 * push_dir.cos(),
                cube_start[1] + 0.15 * push_dir.sin(),
            ],
        }
    }

    pub fn home_joints(&self) -> Result<Vec<f64>> {
        let target = [self.home[0], self.home[1], self.home_heading];
        let (q, err) = self.arm.solve_pose_ik(target, &self.home_seed)?;
        if err > 1e-9 {
            return Err(Error::Synthesis("button home pose unreachable".into()));
        }
        Ok(q)
    }

    /// Final cube position, or `None` after a collision with the barrier.
    pub fn simulate(&self, traj: &Trajectory) -> Result<Option<[f64; 2]>> {
        let path = end_effector_path(&self.arm, traj)?;
        let mut cube = self.cube_start;
        for w in path.windows(2) {
            if self.gap.blocks([w[0][0], w[0][1]], [w[1][0], w[1][1]]) {
                return Ok(None);
            }
            cube = resolve_contact(cube, self.cube_radius, w[1]);
        }
        Ok(Some(cube))
    }

    fn push_dir(&self) -> [f64; 2] {
        let d = [self.cube_goal[0] - self.cube_start[0], self.cube_goal[1] - self.cube_start[1]];
        let n = (d[0] * d[0] + d[1] * d[1]).sqrt();
        [d[0] / n, d[1] / n]
    }

    /// Scripted solution: up to the opening, through it, behind the cube, push.
    pub fn script(&self) -> Result<WaypointPath<3>> {
        let u = self.push_dir();
        let g = self.gap;
        let h0 = self.home_heading;
        let hx = h0 + wrap_angle(-h0);
        let h = h0 + wrap_angle(u[1].atan2(u[0]) - h0);
        let back = self.cube_radius + 0.03;
        let pre = [self.cube_start[0] - back * u[0], self.cube_start[1] - back * u[1], h];
        let end = [
            self.cube_goal[0] - self.cube_radius * u[0],
            self.cube_goal[1] - self.cube_radius * u[1],
            h,
        ];
        WaypointPath::new(
            vec![
                [self.home[0], self.home[1], h0],
                [g.x - 0.05, g.center_y, hx],
                [g.x + 0.06, g.center_y, hx],
                pre,
                end,
            ],
            vec![0.0, 0.3, 0.45, 0.55, 1.0],
        )
    }

    pub fn demo(&self, id: impl Into<String>, points: usize) -> Result<Trajectory> {
        let times = uniform_times(points);
        let path = self.script()?.sample(&times);
        let joints = self.arm.track_pose(&path, &self.home_joints()?, 1e-9)?;
        let traj = Trajectory::new(id, vec![], times, joints)?;
        let r = self.evaluate(&traj)?;
        if r < -PUSH_TOLERANCE {
            return Err(Error::Synthesis(format!("scripted button push misses (reward {r:.4})")));
        }
        Ok(traj)
    }

    /// Pose waypoints of the proxy skills shared by both arms: two reaches, a
    /// short push and a straight insertion at the height of the opening. The
    /// proxies are demonstrated without the barrier.
    pub fn proxy_scripts(&self) -> Result<Vec<(&'static str, WaypointPath<3>)>> {
        let h = [self.home[0], self.home[1], self.home_heading];
        let g = self.gap;
        Ok(vec![
            ("reach-high", WaypointPath::new(vec![h, [g.x - 0.05, g.center_y, 0.0]], vec![0.0, 1.0])?),
            ("reach-low", WaypointPath::new(vec![h, [0.6, -0.05, -0.5]], vec![0.0, 1.0])?),
            (
                "push",
                WaypointPath::new(vec![h, [0.45, 0.0, -0.3], [0.62, -0.05, -0.3]], vec![0.0, 0.4, 1.0])?,
            ),
            (
                "insert",
                WaypointPath::new(
                    vec![h, [g.x - 0.1, g.center_y, 0.0], [g.x + 0.22, g.center_y, 0.0]],
                    vec![0.0, 0.4, 1.0],
                )?,
            ),
        ])
    }

    /// Joint-space proxy demonstrations on this environment's arm, G = 0.
    pub fn proxy_demos(&self, points: usize) -> Result<Vec<Trajectory>> {
        let times = uniform_times(points);
        let home = self.home_joints()?;
        self.proxy_scripts()?
            .into_iter()
            .map(|(name, path)| {
                let joints = self.arm.track_pose(&path.sample(&times), &home, 1e-9)?;
                Trajectory::new(name, vec![], times.clone(), joints)
            })
            .collect()
    }

    fn no_contact_reward(&self) -> f64 {
        -distance(self.cube_start, self.cube_goal)
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl Environment for ButtonEnv {
    fn name(&self) -> &str {
        "button"
    }

    fn sm_width(&self) -> usize {
        self.arm.dof()
    }

    fn evaluate(&self, traj: &Trajectory) -> Result<f64> {
        check_width(self, traj)?;
        Ok(match self.simulate(traj)? {
            Some(cube) => -distance(cube, self.cube_goal),
            None => self.no_contact_reward(),
        })
    }

    fn success_threshold(&self) -> f64 {
        -PUSH_TOLERANCE
    }
}

impl ToEnvSpec for ButtonEnv {
    fn env_spec(&self) -> EnvSpec {
        EnvSpec::new("button", vec![])
    }
}
