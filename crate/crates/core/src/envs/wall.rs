//! Reaching a goal through a hole in a wall.
//!
//! The wall is a vertical slab of fixed thickness centred at `x_c`, open for
//! `|y - y_c| < hole_half_height` and solid everywhere else. A trajectory is
//! charged for its distance to the start, its distance to the goal, and the
//! penetration depth into wall material integrated over arc length.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cnmp::Trajectory;
use crate::envs::{check_width, EnvSpec, Environment, ToEnvSpec};
use crate::error::{Error, Result};

/// Side length of the square workspace.
pub const WORKSPACE: f64 = 10.0;
pub const WALL_THICKNESS: f64 = 0.2;
pub const HOLE_HALF_HEIGHT: f64 = 0.5;
pub const WALL_START: [f64; 2] = [0.0, 5.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallEnv {
    pub x_c: f64,
    pub y_c: f64,
    pub x_g: f64,
    pub y_g: f64,
    pub start: [f64; 2],
    pub thickness: f64,
    pub hole_half_height: f64,
}

impl WallEnv {
    /// Checks the sampling ranges: `2 <= x_c <= 8`, `1 <= y_c <= 9`,
    /// `x_c + 1.5 <= x_g <= 10`, `0 <= y_g <= 10`.
    pub fn new(x_c: f64, y_c: f64, x_g: f64, y_g: f64) -> Result<Self> {
        let ok = (2.0..=8.0).contains(&x_c)
            && (1.0..=9.0).contains(&y_c)
            && x_g >= x_c + 1.5
            && x_g <= WORKSPACE
            && (0.0..=WORKSPACE).contains(&y_g);
        if !ok {
            return Err(Error::Config(format!(
                "wall parameters ({x_c}, {y_c}, {x_g}, {y_g}) outside the sampling ranges"
            )));
        }
        Ok(Self::unchecked(x_c, y_c, x_g, y_g))
    }

    /// Same geometry without the range checks.
    pub fn unchecked(x_c: f64, y_c: f64, x_g: f64, y_g: f64) -> Self {
        WallEnv {
            x_c,
            y_c,
            x_g,
            y_g,
            start: WALL_START,
            thickness: WALL_THICKNESS,
            hole_half_height: HOLE_HALF_HEIGHT,
        }
    }

    pub fn goal(&self) -> [f64; 2] {
        [self.x_g, self.y_g]
    }

    pub fn params(&self) -> [f64; 4] {
        [self.x_c, self.y_c, self.x_g, self.y_g]
    }

    /// Task parameters as seen by a model working in unit-scaled coordinates.
    pub fn model_gamma(&self) -> Vec<f64> {
        self.params().iter().map(|p| p / WORKSPACE).collect()
    }

    /// Shifts every coordinate of the environment.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        WallEnv {
            x_c: self.x_c + dx,
            y_c: self.y_c + dy,
            x_g: self.x_g + dx,
            y_g: self.y_g + dy,
            start: [self.start[0] + dx, self.start[1] + dy],
            ..self.clone()
        }
    }

    /// Penetration depth at a point: distance to the nearest wall surface when
    /// inside material, zero elsewhere.
    pub fn depth(&self, p: [f64; 2]) -> f64 {
        let half = self.thickness / 2.0;
        let dx = half - (p[0] - self.x_c).abs();
        let dy = (p[1] - self.y_c).abs() - self.hole_half_height;
        if dx > 0.0 && dy > 0.0 {
            dx.min(dy)
        } else {
            0.0
        }
    }

    /// Exact integral of [`Self::depth`] along the segment `a -> b`, by arc length.
    pub fn segment_penalty(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        if len == 0.0 {
            return 0.0;
        }
        let half = self.thickness / 2.0;
        let x_lo = self.x_c - half;
        let x_hi = self.x_c + half;
        let d = [b[0] - a[0], b[1] - a[1]];
        let mut total = 0.0;
        // upper block (sign +1) and lower block (sign -1)
        for sign in [1.0, -1.0] {
            let edge = self.y_c + sign * self.hole_half_height;
            // each depth candidate is c0 + c1 * s, positive inside the block
            let lines = [
                (a[0] - x_lo, d[0]),
                (x_hi - a[0], -d[0]),
                (sign * (a[1] - edge), sign * d[1]),
            ];
            let Some((s0, s1)) = clip(&lines) else { continue };
            let mut cuts = vec![s0, s1];
            for i in 0..3 {
                for j in i + 1..3 {
                    let (p, q) = (lines[i], lines[j]);
                    if p.1 != q.1 {
                        let s = (q.0 - p.0) / (p.1 - q.1);
                        if s > s0 && s < s1 {
                            cuts.push(s);
                        }
                    }
                }
            }
            cuts.sort_by(f64::total_cmp);
            let depth = |s: f64| {
                lines
                    .iter()
                    .map(|(c0, c1)| c0 + c1 * s)
                    .fold(f64::INFINITY, f64::min)
                    .max(0.0)
            };
            for w in cuts.windows(2) {
                total += 0.5 * (depth(w[0]) + depth(w[1])) * (w[1] - w[0]);
            }
        }
        total * len
    }

    /// Penalty of the whole piecewise-linear trajectory.
    pub fn wall_penalty(&self, traj: &Trajectory) -> f64 {
        traj.values()
            .windows(2)
            .map(|w| self.segment_penalty([w[0][0], w[0][1]], [w[1][0], w[1][1]]))
            .sum()
    }

    /// Scripted demonstration in workspace coordinates: a corner-cut polyline
    /// from the start, level through the hole, then on to the goal, sampled
    /// uniformly in arc length on `points` samples.
    pub fn demo(&self, id: impl Into<String>, points: usize) -> Result<Trajectory> {
        let control = vec![
            self.start,
            [self.x_c - 1.0, self.y_c],
            [self.x_c + 1.0, self.y_c],
            self.goal(),
        ];
        let smooth = chaikin(&control, 3);
        let resampled = resample_arc_length(&smooth, points);
        let times = crate::cnmp::uniform_times(points);
        Trajectory::new(id, self.params().to_vec(), times, resampled.into_iter().map(|p| p.to_vec()).collect())
    }

    /// [`Self::demo`] mapped into unit-scaled model coordinates.
    pub fn model_demo(&self, id: impl Into<String>, points: usize) -> Result<Trajectory> {
        Ok(self
            .demo(id, points)?
            .map_values(|v| v.iter().map(|x| x / WORKSPACE).collect())?
            .with_task_params(self.model_gamma()))
    }
}

/// Interval of `s` in `[0, 1]` where every line is non-negative.
fn clip(lines: &[(f64, f64); 3]) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for &(c0, c1) in lines {
        if c1 == 0.0 {
            if c0 < 0.0 {
                return None;
            }
        } else {
            let s = -c0 / c1;
            if c1 > 0.0 {
                lo = lo.max(s);
            } else {
                hi = hi.min(s);
            }
        }
    }
    (lo < hi).then_some((lo, hi))
}

/// Corner cutting that keeps both endpoints.
pub fn chaikin(points: &[[f64; 2]], iterations: usize) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    for _ in 0..iterations {
        let mut next = vec![pts[0]];
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            next.push([0.75 * a[0] + 0.25 * b[0], 0.75 * a[1] + 0.25 * b[1]]);
            next.push([0.25 * a[0] + 0.75 * b[0], 0.25 * a[1] + 0.75 * b[1]]);
        }
        next.push(*pts.last().unwrap());
        pts = next;
    }
    pts
}

/// `n` points evenly spaced by arc length along a polyline.
pub fn resample_arc_length(points: &[[f64; 2]], n: usize) -> Vec<[f64; 2]> {
    let mut cum = vec![0.0];
    for w in points.windows(2) {
        let l = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
        cum.push(cum.last().unwrap() + l);
    }
    let total = *cum.last().unwrap();
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    for i in 0..n {
        let s = if n == 1 { 0.0 } else { total * i as f64 / (n - 1) as f64 };
        while k + 2 < cum.len() && cum[k + 1] < s {
            k += 1;
        }
        let seg = cum[k + 1] - cum[k];
        let f = if seg > 0.0 { ((s - cum[k]) / seg).clamp(0.0, 1.0) } else { 0.0 };
        let (a, b) = (points[k], points[k + 1]);
        out.push([a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]);
    }
    out
}

/// Uniform draw over the sampling ranges, with `x_g` uniform on `[x_c + 1.5, 10]`.
pub fn sample_wall_env<R: Rng + ?Sized>(rng: &mut R) -> WallEnv {
    let x_c = rng.random_range(2.0..=8.0);
    let y_c = rng.random_range(1.0..=9.0);
    let x_g = rng.random_range(x_c + 1.5..=WORKSPACE);
    let y_g = rng.random_range(0.0..=WORKSPACE);
    WallEnv::unchecked(x_c, y_c, x_g, y_g)
}

fn dist(a: &[f64], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl Environment for WallEnv {
    fn name(&self) -> &str {
        "wall"
    }

    fn sm_width(&self) -> usize {
        2
    }

    fn evaluate(&self, traj: &Trajectory) -> Result<f64> {
        check_width(self, traj)?;
        let start = dist(traj.first().1, self.start);
        let goal = dist(traj.last().1, self.goal());
        Ok(-(start + goal + self.wall_penalty(traj)))
    }

    fn success_threshold(&self) -> f64 {
        -0.01 * WORKSPACE
    }
}

impl ToEnvSpec for WallEnv {
    fn env_spec(&self) -> EnvSpec {
        EnvSpec::new("wall", self.params().to_vec())
    }
}
