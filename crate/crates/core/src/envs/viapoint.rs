//! Via-point obstacle avoidance in the plane.
//!
//! A trajectory is a curve `y(t)` where `t` in `[0, 1]` doubles as the
//! normalized horizontal coordinate. Demonstrations start and end at the same
//! points and arc over the lower obstacle with different apex heights while
//! staying below the upper one.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cnmp::{uniform_times, DemonstrationSet, Trajectory};
use crate::envs::{check_width, EnvSpec, Environment, ToEnvSpec};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub rx: f64,
    pub ry: f64,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        ((x - self.cx) / self.rx).powi(2) + ((y - self.cy) / self.ry).powi(2) <= 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViaPointScene {
    pub obstacles: [Ellipse; 2],
    /// Apex heights of the demonstrations are spread over this range.
    pub apex_min: f64,
    pub apex_max: f64,
    /// Uniform jitter added to each apex height.
    pub apex_jitter: f64,
}

impl ViaPointScene {
    pub fn canonical() -> Self {
        ViaPointScene {
            obstacles: [
                Ellipse {
                    cx: 0.5,
                    cy: 0.12,
                    rx: 0.15,
                    ry: 0.07,
                },
                Ellipse {
                    cx: 0.2,
                    cy: 0.76,
                    rx: 0.08,
                    ry: 0.08,
                },
            ],
            apex_min: 0.3,
            apex_max: 0.8,
            apex_jitter: 0.01,
        }
    }

    /// Height of a demonstration-shaped curve with the given apex.
    pub fn curve(apex: f64, t: f64) -> f64 {
        apex * (std::f64::consts::PI * t).sin()
    }

    pub fn demo(&self, id: impl Into<String>, apex: f64, times: Vec<f64>) -> Result<Trajectory> {
        Trajectory::from_fn(id, vec![apex], times, |t| vec![Self::curve(apex, t)])
    }

    /// Apex heights used for `n` demonstrations.
    pub fn apexes<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n)
            .map(|k| {
                let frac = if n == 1 {
                    0.5
                } else {
                    k as f64 / (n - 1) as f64
                };
                let jitter = if self.apex_jitter > 0.0 {
                    rng.random_range(-self.apex_jitter..self.apex_jitter)
                } else {
                    0.0
                };
                self.apex_min + frac * (self.apex_max - self.apex_min) + jitter
            })
            .collect()
    }

    pub fn demos<R: Rng + ?Sized>(&self, n: usize, points: usize, rng: &mut R) -> Result<DemonstrationSet> {
        let apexes = self.apexes(n, rng);
        let trajs = apexes
            .iter()
            .enumerate()
            .map(|(k, &h)| self.demo(format!("demo-{k}"), h, uniform_times(points)))
            .collect::<Result<Vec<_>>>()?;
        DemonstrationSet::new(trajs)
    }

    /// Demonstrations sampled on independent non-uniform time grids: the two
    /// endpoints plus sorted uniform random interior times.
    pub fn unaligned_demos<R: Rng + ?Sized>(
        &self,
        n: usize,
        points: usize,
        rng: &mut R,
    ) -> Result<DemonstrationSet> {
        let apexes = self.apexes(n, rng);
        let trajs = apexes
            .iter()
            .enumerate()
            .map(|(k, &h)| {
                let mut times: Vec<f64> = (0..points.saturating_sub(2))
                    .map(|_| rng.random_range(0.0..1.0))
                    .collect();
                times.push(0.0);
                times.push(1.0);
                times.sort_by(f64::total_cmp);
                times.dedup();
                self.demo(format!("demo-{k}"), h, times)
            })
            .collect::<Result<Vec<_>>>()?;
        DemonstrationSet::new(trajs)
    }

    /// True if any sample of `traj` lies inside an obstacle.
    pub fn collides(&self, traj: &Trajectory) -> bool {
        traj.times()
            .iter()
            .zip(traj.values())
            .any(|(&t, v)| self.obstacles.iter().any(|e| e.contains(t, v[0])))
    }
}

/// `n` demonstrations of the canonical scene on a 200-point grid.
pub fn viapoint_demos<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<DemonstrationSet> {
    ViaPointScene::canonical().demos(n, crate::cnmp::DEFAULT_QUERY_POINTS, rng)
}

/// Minus the distance between the trajectory at `t_star` (linearly
/// interpolated) and the target point.
pub fn viapoint_reward(traj: &Trajectory, t_star: f64, target: &[f64]) -> f64 {
    let p = traj.interpolate(t_star);
    -p.iter()
        .zip(target)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Pass through `target` at time `t_star`.
#[derive(Debug, Clone, PartialEq)]
pub struct ViaPointEnv {
    pub t_star: f64,
    pub target: Vec<f64>,
    pub tolerance: f64,
}

/// Via-point success tolerance in normalized units.
pub const VIAPOINT_TOLERANCE: f64 = 0.05;

impl ViaPointEnv {
    pub fn new(t_star: f64, target: Vec<f64>) -> Self {
        ViaPointEnv {
            t_star,
            target,
            tolerance: VIAPOINT_TOLERANCE,
        }
    }
}

impl Environment for ViaPointEnv {
    fn name(&self) -> &str {
        "viapoint2d"
    }

    fn sm_width(&self) -> usize {
        self.target.len()
    }

    fn evaluate(&self, traj: &Trajectory) -> Result<f64> {
        check_width(self, traj)?;
        Ok(viapoint_reward(traj, self.t_star, &self.target))
    }

    fn success_threshold(&self) -> f64 {
        -self.tolerance
    }
}

impl ToEnvSpec for ViaPointEnv {
    fn env_spec(&self) -> EnvSpec {
        EnvSpec::new("viapoint2d", vec![self.t_star, self.target[0]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_hit_and_hand_distance() {
        let traj = Trajectory::new("a", vec![], vec![0.0, 0.5, 1.0], vec![vec![0.0], vec![1.0], vec![0.0]])
            .unwrap();
        assert_eq!(viapoint_reward(&traj, 0.5, &[1.0]), 0.0);
        assert!((viapoint_reward(&traj, 0.5, &[1.5]) + 0.5).abs() < 1e-15);
        assert!((viapoint_reward(&traj, 0.25, &[0.0]) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn piecewise_linear_matches_dense_resampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let times = uniform_times(13);
        let values: Vec<Vec<f64>> = times.iter().map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
        let traj = Trajectory::new("a", vec![], times.clone(), values.clone()).unwrap();
        // oracle: explicit lerp on 1000 sub-steps per segment
        let mut dense = Vec::new();
        for seg in 0..12 {
            for k in 0..1000 {
                let f = k as f64 / 1000.0;
                let t = times[seg] + f * (times[seg + 1] - times[seg]);
                dense.push((t, values[seg][0] + f * (values[seg + 1][0] - values[seg][0])));
            }
        }
        for &(t, y) in dense.iter().step_by(97) {
            let expected = -(y - 0.3).abs();
            assert!((viapoint_reward(&traj, t, &[0.3]) - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn demos_share_endpoints_and_avoid_obstacles() {
        let scene = ViaPointScene::canonical();
        let demos = scene.demos(6, 200, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(demos.len(), 6);
        for d in demos.trajectories() {
            assert_eq!(d.first(), (0.0, &[0.0][..]));
            let (t, v) = d.last();
            assert_eq!(t, 1.0);
            assert!(v[0].abs() < 1e-15);
            assert!(!scene.collides(d), "{} hits an obstacle", d.id);
        }
        // brute-force point-in-ellipse over a dense grid of each demo curve
        for d in demos.trajectories() {
            let apex = d.task_params[0];
            for k in 0..=10_000 {
                let t = k as f64 / 10_000.0;
                let y = ViaPointScene::curve(apex, t);
                for e in &scene.obstacles {
                    assert!(((t - e.cx) / e.rx).powi(2) + ((y - e.cy) / e.ry).powi(2) > 1.0);
                }
            }
        }
    }

    #[test]
    fn demos_are_reproducible() {
        let a = viapoint_demos(6, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = viapoint_demos(6, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unaligned_grids_differ_between_demos() {
        let scene = ViaPointScene::canonical();
        let demos = scene
            .unaligned_demos(6, 100, &mut ChaCha8Rng::seed_from_u64(2))
            .unwrap();
        let t0 = demos.trajectories()[0].times();
        let t1 = demos.trajectories()[1].times();
        assert_ne!(t0, t1);
        for d in demos.trajectories() {
            assert_eq!(d.times()[0], 0.0);
            assert_eq!(*d.times().last().unwrap(), 1.0);
        }
    }
}
