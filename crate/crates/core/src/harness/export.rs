use std::io::Write;

use crate::cnmp::{CnmpModel, DemonstrationSet, ObservationPoint};
use crate::error::Result;

/// Latent of a single observation taken from a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentRow {
    pub trajectory_id: String,
    pub t: f64,
    pub latent: Vec<f64>,
}

/// Encodes `samples` evenly spaced observations of every trajectory, one at a
/// time.
pub fn latent_rows(model: &CnmpModel, demos: &DemonstrationSet, samples: usize) -> Result<Vec<LatentRow>> {
    let mut rows = Vec::with_capacity(demos.len() * samples);
    for traj in demos.trajectories() {
        for k in 0..samples {
            let t = if samples == 1 { 0.5 } else { k as f64 / (samples - 1) as f64 };
            let latent = model.encode(&ObservationPoint::at_time(traj, t))?.values;
            rows.push(LatentRow {
                trajectory_id: traj.id.clone(),
                t,
                latent,
            });
        }
    }
    Ok(rows)
}

pub fn write_latent_csv<W: Write>(rows: &[LatentRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let width = rows.first().map_or(0, |r| r.latent.len());
    let mut header = vec!["trajectory_id".to_string(), "t".to_string()];
    header.extend((0..width).map(|i| format!("z{i}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.trajectory_id.clone(), format!("{:?}", r.t)];
        rec.extend(r.latent.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnmp::{uniform_times, CnmpArchitecture, GammaRouting, Trajectory};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_row_per_sample_with_latent_columns() {
        let model = CnmpModel::new(
            1,
            1,
            GammaRouting::None,
            &CnmpArchitecture::new(&[8, 3], &[8, 2]),
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let demos = DemonstrationSet::new(
            ["a", "b"]
                .iter()
                .map(|id| Trajectory::from_fn(*id, vec![0.0], uniform_times(10), |t| vec![t]).unwrap())
                .collect(),
        )
        .unwrap();
        let rows = latent_rows(&model, &demos, 7).unwrap();
        assert_eq!(rows.len(), 14);
        let mut buf = Vec::new();
        write_latent_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "trajectory_id,t,z0,z1,z2");
        assert_eq!(text.lines().count(), 15);
    }
}
