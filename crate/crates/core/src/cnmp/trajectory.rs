//! Trajectories, demonstration sets and their JSON Lines encoding.
//!
//! One trajectory per line:
//! `{"id": "demo-0", "task_params": [0.4], "points": [[0.0, 0.1, 0.2], ...]}`
//! where each point is `[t, v1, ..., vD]` with `t` in `[0, 1]`.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};

/// Time-indexed sensorimotor samples of one movement, with its task parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: String,
    pub task_params: Vec<f64>,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryRecord {
    id: String,
    task_params: Vec<f64>,
    points: Vec<Vec<f64>>,
}

impl Trajectory {
    /// Validates: at least two points, strictly increasing `t` inside `[0, 1]`,
    /// equal value widths, everything finite.
    pub fn new(
        id: impl Into<String>,
        task_params: Vec<f64>,
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let id = id.into();
        if times.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "trajectory `{id}`: {} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "trajectory `{id}` needs at least two points"
            )));
        }
        check_finite("trajectory times", &times)?;
        check_finite("task parameters", &task_params)?;
        if times.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::InvalidInput(format!(
                "trajectory `{id}` has a time outside [0, 1]"
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(format!(
                "trajectory `{id}` times are not strictly increasing"
            )));
        }
        let width = values[0].len();
        if width == 0 {
            return Err(Error::InvalidInput(format!(
                "trajectory `{id}` has empty sensorimotor vectors"
            )));
        }
        for v in &values {
            if v.len() != width {
                return Err(Error::InvalidInput(format!(
                    "trajectory `{id}` mixes sensorimotor widths {width} and {}",
                    v.len()
                )));
            }
            check_finite("trajectory values", v)?;
        }
        Ok(Trajectory {
            id,
            task_params,
            times,
            values,
        })
    }

    /// Samples `f` on the given time grid.
    pub fn from_fn(
        id: impl Into<String>,
        task_params: Vec<f64>,
        times: Vec<f64>,
        f: impl Fn(f64) -> Vec<f64>,
    ) -> Result<Self> {
        let values = times.iter().map(|&t| f(t)).collect();
        Trajectory::new(id, task_params, times, values)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn sm_width(&self) -> usize {
        self.values[0].len()
    }

    pub fn gamma_width(&self) -> usize {
        self.task_params.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn point(&self, i: usize) -> (f64, &[f64]) {
        (self.times[i], &self.values[i])
    }

    pub fn first(&self) -> (f64, &[f64]) {
        self.point(0)
    }

    pub fn last(&self) -> (f64, &[f64]) {
        self.point(self.len() - 1)
    }

    /// Linear interpolation; clamps outside the sampled range.
    pub fn interpolate(&self, t: f64) -> Vec<f64> {
        let n = self.len();
        if t <= self.times[0] {
            return self.values[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1].clone();
        }
        // first index with time > t
        let hi = self.times.partition_point(|&x| x <= t);
        let lo = hi - 1;
        let (t0, t1) = (self.times[lo], self.times[hi]);
        let w = (t - t0) / (t1 - t0);
        self.values[lo]
            .iter()
            .zip(&self.values[hi])
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }

    /// Re-samples on a new time grid by linear interpolation.
    pub fn resample(&self, times: &[f64]) -> Result<Trajectory> {
        let values = times.iter().map(|&t| self.interpolate(t)).collect();
        Trajectory::new(
            self.id.clone(),
            self.task_params.clone(),
            times.to_vec(),
            values,
        )
    }

    /// Applies `f` to every sensorimotor vector.
    pub fn map_values(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Trajectory> {
        let values = self.values.iter().map(|v| f(v)).collect();
        Trajectory::new(
            self.id.clone(),
            self.task_params.clone(),
            self.times.clone(),
            values,
        )
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn with_task_params(mut self, task_params: Vec<f64>) -> Self {
        self.task_params = task_params;
        self
    }

    pub fn to_json_line(&self) -> Result<String> {
        let record = TrajectoryRecord {
            id: self.id.clone(),
            task_params: self.task_params.clone(),
            points: self
                .times
                .iter()
                .zip(&self.values)
                .map(|(&t, v)| std::iter::once(t).chain(v.iter().copied()).collect())
                .collect(),
        };
        Ok(serde_json::to_string(&record)?)
    }

    pub fn from_json_line(line: &str) -> Result<Trajectory> {
        let record: TrajectoryRecord = serde_json::from_str(line)?;
        let mut times = Vec::with_capacity(record.points.len());
        let mut values = Vec::with_capacity(record.points.len());
        for p in record.points {
            let (t, v) = p
                .split_first()
                .ok_or_else(|| Error::InvalidInput(format!("empty point in `{}`", record.id)))?;
            times.push(*t);
            values.push(v.to_vec());
        }
        Trajectory::new(record.id, record.task_params, times, values)
    }
}

/// `n` equally spaced times covering `[0, 1]`.
pub fn uniform_times(n: usize) -> Vec<f64> {
    assert!(n >= 2, "a time grid needs at least two points");
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

/// A non-empty, width-homogeneous list of trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct DemonstrationSet {
    trajectories: Vec<Trajectory>,
    sm_width: usize,
    gamma_width: usize,
}

impl DemonstrationSet {
    pub fn new(trajectories: Vec<Trajectory>) -> Result<Self> {
        let first = trajectories
            .first()
            .ok_or_else(|| Error::InvalidInput("demonstration set is empty".into()))?;
        let (sm_width, gamma_width) = (first.sm_width(), first.gamma_width());
        for t in &trajectories {
            if t.sm_width() != sm_width || t.gamma_width() != gamma_width {
                return Err(Error::InvalidInput(format!(
                    "trajectory `{}` has widths (D={}, G={}) but the set uses (D={sm_width}, G={gamma_width})",
                    t.id,
                    t.sm_width(),
                    t.gamma_width()
                )));
            }
        }
        Ok(DemonstrationSet {
            trajectories,
            sm_width,
            gamma_width,
        })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn sm_width(&self) -> usize {
        self.sm_width
    }

    pub fn gamma_width(&self) -> usize {
        self.gamma_width
    }

    pub fn get(&self, id: &str) -> Option<&Trajectory> {
        self.trajectories.iter().find(|t| t.id == id)
    }

    /// Appends a trajectory with matching widths.
    pub fn push(&mut self, trajectory: Trajectory) -> Result<()> {
        if trajectory.sm_width() != self.sm_width || trajectory.gamma_width() != self.gamma_width {
            return Err(Error::InvalidInput(format!(
                "trajectory `{}` has widths (D={}, G={}) but the set uses (D={}, G={})",
                trajectory.id,
                trajectory.sm_width(),
                trajectory.gamma_width(),
                self.sm_width,
                self.gamma_width
            )));
        }
        self.trajectories.push(trajectory);
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, out: &mut W) -> Result<()> {
        for t in &self.trajectories {
            writeln!(out, "{}", t.to_json_line()?)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut trajectories = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let t = Trajectory::from_json_line(&line).map_err(|e| {
                Error::Parse(format!("dataset line {}: {e}", i + 1))
            })?;
            trajectories.push(t);
        }
        DemonstrationSet::new(trajectories)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_jsonl(&mut file)?;
        file.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        DemonstrationSet::read_jsonl(std::io::BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str) -> Trajectory {
        Trajectory::from_fn(id, vec![1.0], uniform_times(5), |t| vec![t, 2.0 * t]).unwrap()
    }

    #[test]
    fn validation() {
        assert!(Trajectory::new("a", vec![], vec![0.0], vec![vec![1.0]]).is_err());
        assert!(Trajectory::new("a", vec![], vec![0.0, 0.0], vec![vec![1.0], vec![1.0]]).is_err());
        assert!(Trajectory::new("a", vec![], vec![0.0, 1.5], vec![vec![1.0], vec![1.0]]).is_err());
        assert!(
            Trajectory::new("a", vec![], vec![0.0, 1.0], vec![vec![1.0], vec![1.0, 2.0]]).is_err()
        );
        // unequal spacing is fine
        assert!(Trajectory::new(
            "a",
            vec![],
            vec![0.0, 0.1, 0.75, 1.0],
            vec![vec![0.0]; 4]
        )
        .is_ok());
    }

    #[test]
    fn interpolation_is_linear_and_clamped() {
        let t = Trajectory::new("a", vec![], vec![0.0, 0.5, 1.0], vec![vec![0.0], vec![1.0], vec![3.0]])
            .unwrap();
        assert_eq!(t.interpolate(0.25), vec![0.5]);
        assert_eq!(t.interpolate(0.75), vec![2.0]);
        assert_eq!(t.interpolate(0.5), vec![1.0]);
        assert_eq!(t.interpolate(-1.0), vec![0.0]);
        assert_eq!(t.interpolate(2.0), vec![3.0]);
    }

    #[test]
    fn jsonl_round_trip_and_time_check() {
        let set = DemonstrationSet::new(vec![line("a"), line("b")]).unwrap();
        let mut buf = Vec::new();
        set.write_jsonl(&mut buf).unwrap();
        let back = DemonstrationSet::read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, set);

        let bad = r#"{"id":"x","task_params":[],"points":[[0.0,1.0],[1.2,1.0]]}"#;
        assert!(DemonstrationSet::read_jsonl(bad.as_bytes()).is_err());
    }

    #[test]
    fn set_rejects_mixed_widths() {
        let other = Trajectory::from_fn("c", vec![], uniform_times(3), |t| vec![t, t]).unwrap();
        assert!(DemonstrationSet::new(vec![line("a"), other.clone()]).is_err());
        let mut set = DemonstrationSet::new(vec![line("a")]).unwrap();
        assert!(set.push(other).is_err());
        assert!(DemonstrationSet::new(vec![]).is_err());
    }
}
