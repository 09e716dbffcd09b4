use crate::error::{check_len, Error, Result};

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Per-point silhouette values. Points alone in their cluster score 0.
pub fn silhouette_samples<L: PartialEq>(points: &[Vec<f64>], labels: &[L]) -> Result<Vec<f64>> {
    check_len("silhouette labels", points.len(), labels.len())?;
    let distinct = labels
        .iter()
        .enumerate()
        .filter(|(i, l)| labels[..*i].iter().all(|m| m != *l))
        .count();
    if distinct < 2 {
        return Err(Error::InvalidInput("silhouette needs at least two clusters".into()));
    }
    let mut out = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        // mean distance to every cluster, keyed by the first index carrying that label
        let mut sums: Vec<(usize, f64, usize)> = Vec::new();
        for (j, q) in points.iter().enumerate() {
            if i == j {
                continue;
            }
            let key = labels.iter().position(|l| *l == labels[j]).unwrap();
            let d = euclid(p, q);
            match sums.iter_mut().find(|(k, _, _)| *k == key) {
                Some(entry) => {
                    entry.1 += d;
                    entry.2 += 1;
                }
                None => sums.push((key, d, 1)),
            }
        }
        let own = labels.iter().position(|l| *l == labels[i]).unwrap();
        let a = sums.iter().find(|(k, _, _)| *k == own).map(|(_, s, n)| s / *n as f64);
        let b = sums
            .iter()
            .filter(|(k, _, _)| *k != own)
            .map(|(_, s, n)| s / *n as f64)
            .fold(f64::INFINITY, f64::min);
        out.push(match a {
            None => 0.0,
            Some(a) => {
                let m = a.max(b);
                if m > 0.0 {
                    (b - a) / m
                } else {
                    0.0
                }
            }
        });
    }
    Ok(out)
}

/// Mean silhouette coefficient over all points.
pub fn silhouette<L: PartialEq>(points: &[Vec<f64>], labels: &[L]) -> Result<f64> {
    let s = silhouette_samples(points, labels)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}
