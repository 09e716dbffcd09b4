use crate::cnmp::Trajectory;
use crate::error::{check_len, Error, Result};

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Dynamic time warping distance between two sequences of equal-width
/// points: the minimum summed Euclidean cost over monotone alignments.
pub fn dtw(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("dtw needs non-empty sequences".into()));
    }
    check_len("dtw point width", a[0].len(), b[0].len())?;
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for p in a {
        cur[0] = f64::INFINITY;
        for j in 1..=m {
            let best = prev[j - 1].min(prev[j]).min(cur[j - 1]);
            cur[j] = euclid(p, &b[j - 1]) + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m])
}

/// Smallest DTW distance from `traj` to any of `references`.
pub fn nearest_dtw(traj: &Trajectory, references: &[Trajectory]) -> Result<f64> {
    let mut best = f64::INFINITY;
    for r in references {
        best = best.min(dtw(traj.values(), r.values())?);
    }
    Ok(best)
}
