//! Planar serial arms: forward kinematics and damped least-squares tracking.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarArm {
    pub link_lengths: Vec<f64>,
}

/// Positions of every joint (base first) and the end effector.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmPose {
    pub joints: Vec<[f64; 2]>,
    pub end_effector: [f64; 2],
}

impl PlanarArm {
    pub fn new(link_lengths: Vec<f64>) -> Result<Self> {
        if link_lengths.is_empty() || link_lengths.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::InvalidInput("link lengths must be positive".into()));
        }
        Ok(PlanarArm { link_lengths })
    }

    /// Three links, total reach 1.
    pub fn three_dof() -> Self {
        PlanarArm {
            link_lengths: vec![0.4, 0.35, 0.25],
        }
    }

    /// Four links, total reach 1.
    pub fn four_dof() -> Self {
        PlanarArm {
            link_lengths: vec![0.3, 0.3, 0.2, 0.2],
        }
    }

    pub fn dof(&self) -> usize {
        self.link_lengths.len()
    }

    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    pub fn end_effector(&self, angles: &[f64]) -> Result<[f64; 2]> {
        check_len("joint angles", self.dof(), angles.len())?;
        let (mut x, mut y, mut phi) = (0.0, 0.0, 0.0);
        for (l, q) in self.link_lengths.iter().zip(angles) {
            phi += q;
            x += l * phi.cos();
            y += l * phi.sin();
        }
        Ok([x, y])
    }

    /// Orientation of the last link: the sum of the joint angles.
    pub fn heading(&self, angles: &[f64]) -> Result<f64> {
        check_len("joint angles", self.dof(), angles.len())?;
        Ok(angles.iter().sum())
    }

    /// End-effector position and heading.
    pub fn pose(&self, angles: &[f64]) -> Result<[f64; 3]> {
        let [x, y] = self.end_effector(angles)?;
        Ok([x, y, self.heading(angles)?])
    }

    /// 2 x dof Jacobian of the end-effector position, row-major.
    pub fn jacobian(&self, angles: &[f64]) -> Result<Vec<[f64; 2]>> {
        check_len("joint angles", self.dof(), angles.len())?;
        let mut cum = Vec::with_capacity(self.dof());
        let mut phi = 0.0;
        for q in angles {
            phi += q;
            cum.push(phi);
        }
        // column j: sum over links k >= j of l_k * (-sin, cos)(phi_k)
        let mut cols = vec![[0.0, 0.0]; self.dof()];
        let mut acc = [0.0, 0.0];
        for k in (0..self.dof()).rev() {
            acc[0] -= self.link_lengths[k] * cum[k].sin();
            acc[1] += self.link_lengths[k] * cum[k].cos();
            cols[k] = acc;
        }
        Ok(cols)
    }

    /// Damped least-squares inverse kinematics starting from `seed`. Returns the
    /// joint angles and the residual position error.
    pub fn solve_ik(&self, target: [f64; 2], seed: &[f64]) -> Result<(Vec<f64>, f64)> {
        check_len("joint angles", self.dof(), seed.len())?;
        let mut q = seed.to_vec();
        let damping = 1e-4;
        let mut err = f64::INFINITY;
        for _ in 0..200 {
            let p = self.end_effector(&q)?;
            let e = [target[0] - p[0], target[1] - p[1]];
            err = (e[0] * e[0] + e[1] * e[1]).sqrt();
            if err < 1e-12 {
                break;
            }
            let cols = self.jacobian(&q)?;
            // dq = J^T (J J^T + lambda I)^-1 e
            let (mut a, mut b, mut c) = (damping, 0.0, damping);
            for col in &cols {
                a += col[0] * col[0];
                b += col[0] * col[1];
                c += col[1] * col[1];
            }
            let det = a * c - b * b;
            let w = [(c * e[0] - b * e[1]) / det, (a * e[1] - b * e[0]) / det];
            for (qj, col) in q.iter_mut().zip(&cols) {
                *qj += col[0] * w[0] + col[1] * w[1];
            }
        }
        Ok((q, err))
    }

    /// Damped least-squares solve for a full pose `[x, y, heading]`. Returns
    /// the joint angles and the residual norm (position and angle mixed).
    pub fn solve_pose_ik(&self, target: [f64; 3], seed: &[f64]) -> Result<(Vec<f64>, f64)> {
        check_len("joint angles", self.dof(), seed.len())?;
        let mut q = seed.to_vec();
        let damping = 1e-6;
        let mut err = f64::INFINITY;
        for _ in 0..200 {
            let p = self.pose(&q)?;
            let e = [target[0] - p[0], target[1] - p[1], target[2] - p[2]];
            err = (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt();
            if err < 1e-12 {
                break;
            }
            let cols: Vec<[f64; 3]> = self.jacobian(&q)?.into_iter().map(|c| [c[0], c[1], 1.0]).collect();
            let mut a = [[0.0; 3]; 3];
            for (i, row) in a.iter_mut().enumerate() {
                row[i] = damping;
                for col in &cols {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v += col[i] * col[j];
                    }
                }
            }
            let w = solve3(a, e);
            for (qj, col) in q.iter_mut().zip(&cols) {
                *qj += col[0] * w[0] + col[1] * w[1] + col[2] * w[2];
            }
        }
        Ok((q, err))
    }

    /// Pose counterpart of [`PlanarArm::track`].
    pub fn track_pose(&self, path: &[[f64; 3]], start: &[f64], tolerance: f64) -> Result<Vec<Vec<f64>>> {
        let mut q = start.to_vec();
        let mut out = Vec::with_capacity(path.len());
        for (i, &p) in path.iter().enumerate() {
            let (next, err) = self.solve_pose_ik(p, &q)?;
            if err > tolerance {
                return Err(Error::Synthesis(format!(
                    "pose inverse kinematics failed at path sample {i} (residual {err:.3e})"
                )));
            }
            q = next;
            out.push(q.clone());
        }
        Ok(out)
    }

    /// Tracks a Cartesian path, warm-starting each solve from the previous
    /// solution so the joint path is continuous.
    pub fn track(&self, path: &[[f64; 2]], start: &[f64], tolerance: f64) -> Result<Vec<Vec<f64>>> {
        let mut q = start.to_vec();
        let mut out = Vec::with_capacity(path.len());
        for (i, &p) in path.iter().enumerate() {
            let (next, err) = self.solve_ik(p, &q)?;
            if err > tolerance {
                return Err(Error::Synthesis(format!(
                    "inverse kinematics failed at path sample {i} (residual {err:.3e})"
                )));
            }
            q = next;
            out.push(q.clone());
        }
        Ok(out)
    }
}

/// Cramer's rule for a symmetric positive definite 3 x 3 system.
fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> [f64; 3] {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    let mut x = [0.0; 3];
    for (k, xk) in x.iter_mut().enumerate() {
        let mut m = a;
        for i in 0..3 {
            m[i][k] = b[i];
        }
        *xk = det(m) / d;
    }
    x
}

/// Minimum-jerk time scaling of `tau` in `[0, 1]`.
pub fn min_jerk(tau: f64) -> f64 {
    let s = tau.clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

/// Waypoints reached at given times, joined by straight segments with
/// minimum-jerk timing (rest at every waypoint). `N` is 2 for positions and 3
/// for poses with a heading.
#[derive(Debug, Clone, PartialEq)]
pub struct WaypointPath<const N: usize = 2> {
    points: Vec<[f64; N]>,
    times: Vec<f64>,
}

impl<const N: usize> WaypointPath<N> {
    pub fn new(points: Vec<[f64; N]>, times: Vec<f64>) -> Result<Self> {
        if points.len() < 2 || points.len() != times.len() {
            return Err(Error::InvalidInput(
                "waypoint path needs at least two points with one time each".into(),
            ));
        }
        if times[0] != 0.0 || *times.last().unwrap() != 1.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "waypoint times must increase from 0 to 1".into(),
            ));
        }
        Ok(WaypointPath { points, times })
    }

    pub fn at(&self, t: f64) -> [f64; N] {
        let k = match self.times.iter().position(|&s| s >= t) {
            Some(0) => return self.points[0],
            Some(k) => k,
            None => return *self.points.last().unwrap(),
        };
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let s = min_jerk((t - t0) / (t1 - t0));
        let (a, b) = (self.points[k - 1], self.points[k]);
        std::array::from_fn(|i| a[i] + s * (b[i] - a[i]))
    }

    pub fn sample(&self, times: &[f64]) -> Vec<[f64; N]> {
        times.iter().map(|&t| self.at(t)).collect()
    }
}

/// Cumulative-angle forward kinematics.
pub fn fk_planar(arm: &PlanarArm, angles: &[f64]) -> Result<ArmPose> {
    check_len("joint angles", arm.dof(), angles.len())?;
    let mut joints = Vec::with_capacity(arm.dof() + 1);
    let (mut x, mut y, mut phi) = (0.0, 0.0, 0.0);
    joints.push([x, y]);
    for (l, q) in arm.link_lengths.iter().zip(angles) {
        phi += q;
        x += l * phi.cos();
        y += l * phi.sin();
        joints.push([x, y]);
    }
    let end_effector = joints.pop().expect("arm has links");
    Ok(ArmPose {
        joints,
        end_effector,
    })
}
