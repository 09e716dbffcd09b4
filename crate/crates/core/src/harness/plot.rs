//! Static figure data: CSV tables and plain SVG drawings.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::cnmp::{DemonstrationSet, Trajectory};
use crate::error::{Error, Result};
use crate::harness::record::RunRecord;

const W: f64 = 480.0;
const H: f64 = 320.0;
const PAD: f64 = 40.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit<'a>(points: impl Iterator<Item = &'a [f64; 2]>) -> Frame {
        let mut f = Frame {
            x0: f64::INFINITY,
            x1: f64::NEG_INFINITY,
            y0: f64::INFINITY,
            y1: f64::NEG_INFINITY,
        };
        for p in points.filter(|p| p[0].is_finite() && p[1].is_finite()) {
            f.x0 = f.x0.min(p[0]);
            f.x1 = f.x1.max(p[0]);
            f.y0 = f.y0.min(p[1]);
            f.y1 = f.y1.max(p[1]);
        }
        if !f.x0.is_finite() {
            return Frame { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 };
        }
        if f.x1 - f.x0 < 1e-12 {
            f.x1 = f.x0 + 1.0;
        }
        if f.y1 - f.y0 < 1e-12 {
            f.y1 = f.y0 + 1.0;
        }
        f
    }

    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        let x = PAD + (p[0] - self.x0) / (self.x1 - self.x0) * (W - 2.0 * PAD);
        let y = H - PAD - (p[1] - self.y0) / (self.y1 - self.y0) * (H - 2.0 * PAD);
        (x, y)
    }

    fn path(&self, pts: &[[f64; 2]]) -> String {
        let mut d = String::new();
        for (i, p) in pts.iter().filter(|p| p[0].is_finite() && p[1].is_finite()).enumerate() {
            let (x, y) = self.map(*p);
            let _ = write!(d, "{}{x:.2},{y:.2} ", if i == 0 { "M" } else { "L" });
        }
        d.trim_end().to_string()
    }
}

fn svg_open(title: &str, f: &Frame) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{PAD}" y="20" font-size="13">{}</text>"#, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let _ = writeln!(
        s,
        r#"<text x="{PAD}" y="{}" font-size="10">{:.3}</text><text x="{}" y="{}" font-size="10" text-anchor="end">{:.3}</text>"#,
        H - PAD + 14.0,
        f.x0,
        W - PAD,
        H - PAD + 14.0,
        f.x1
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{:.3}</text><text x="{}" y="{}" font-size="10" text-anchor="end">{:.3}</text>"#,
        PAD - 4.0,
        H - PAD,
        f.y0,
        PAD - 4.0,
        PAD + 8.0,
        f.y1
    );
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Line chart of `(label, points)` series.
pub fn line_chart_svg(title: &str, series: &[(&str, Vec<[f64; 2]>)]) -> String {
    let f = Frame::fit(series.iter().flat_map(|(_, p)| p.iter()));
    let mut s = svg_open(title, &f);
    for (i, (label, pts)) in series.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{c}" stroke-width="1.5"/>"#, f.path(pts));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" fill="{c}" text-anchor="end">{}</text>"#,
            W - PAD - 4.0,
            PAD + 14.0 * (i + 1) as f64,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Planar picture of a trajectory: `(t, y)` for one-dimensional data and
/// `(x, y)` from the first two columns otherwise.
fn planar(traj: &Trajectory) -> Vec<[f64; 2]> {
    traj.times()
        .iter()
        .zip(traj.values())
        .map(|(&t, v)| if v.len() == 1 { [t, v[0]] } else { [v[0], v[1]] })
        .collect()
}

/// Demonstrations in grey, generated trajectories in colour, condition points
/// as dots.
pub fn overlay_svg(title: &str, demos: &[Trajectory], generated: &[Trajectory], conditions: &[[f64; 2]]) -> String {
    let demo_pts: Vec<_> = demos.iter().map(planar).collect();
    let gen_pts: Vec<_> = generated.iter().map(planar).collect();
    let f = Frame::fit(demo_pts.iter().chain(&gen_pts).flatten().chain(conditions));
    let mut s = svg_open(title, &f);
    for p in &demo_pts {
        let _ = writeln!(s, r##"<path d="{}" fill="none" stroke="#999999" stroke-width="1"/>"##, f.path(p));
    }
    for (i, p) in gen_pts.iter().enumerate() {
        let c = COLORS[(i + 1) % COLORS.len()];
        let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{c}" stroke-width="2"/>"#, f.path(p));
    }
    for c in conditions {
        let (x, y) = f.map(*c);
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="black"/>"#);
    }
    s.push_str("</svg>\n");
    s
}

/// Test error against the size of the trajectory set.
pub fn error_vs_trajectories_csv(trajectories: &[f64], errors: &[f64]) -> Result<String> {
    if trajectories.len() != errors.len() {
        return Err(Error::InvalidInput("trajectory counts and errors differ in length".into()));
    }
    let mut s = String::from("trajectories,mean_test_error\n");
    for (n, e) in trajectories.iter().zip(errors) {
        let _ = writeln!(s, "{},{e:?}", *n as usize);
    }
    Ok(s)
}

pub fn series_csv(name: &str, values: &[f64]) -> String {
    let mut s = format!("index,{name}\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(s, "{i},{v:?}");
    }
    s
}

fn load_trajs(dir: &Path, rel: &str) -> Result<Vec<Trajectory>> {
    Ok(DemonstrationSet::load(dir.join(rel))?.trajectories().to_vec())
}

/// Writes the figure files for a record into `out` and returns their paths.
/// Every series gets a CSV and a line chart; demos plus a solution or
/// generated trajectory give an overlay; a trajectory-count series gives the
/// error-versus-data table.
pub fn plot_record(record: &RunRecord, record_dir: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    if record.series.is_empty() && record.artifacts.is_empty() {
        return Err(Error::InvalidInput("run record has no series or artifacts to plot".into()));
    }
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<()> {
        let p = out.join(name);
        std::fs::write(&p, body)?;
        written.push(p);
        Ok(())
    };
    for (name, values) in &record.series {
        put(format!("{name}.csv"), series_csv(name, values))?;
        let pts: Vec<[f64; 2]> = values.iter().enumerate().map(|(i, &v)| [i as f64, v]).collect();
        put(format!("{name}.svg"), line_chart_svg(name, &[(name.as_str(), pts)]))?;
    }
    if let (Some(n), Some(e)) = (record.series.get("trajectories"), record.series.get("mean_test_error")) {
        put("error_vs_trajectories.csv".into(), error_vs_trajectories_csv(n, e)?)?;
        let pts = n.iter().zip(e).map(|(&a, &b)| [a, b]).collect();
        put(
            "error_vs_trajectories.svg".into(),
            line_chart_svg("mean test error vs trajectories", &[("error", pts)]),
        )?;
    }
    if let Some(demos) = record.artifacts.get("demos") {
        let demos = load_trajs(record_dir, demos)?;
        let mut generated = Vec::new();
        for key in ["solution", "generated"] {
            if let Some(p) = record.artifacts.get(key) {
                generated.extend(load_trajs(record_dir, p)?);
            }
        }
        let conditions: Vec<[f64; 2]> = match (record.series.get("condition_t"), record.series.get("condition_y")) {
            (Some(t), Some(y)) => t.iter().zip(y).map(|(&a, &b)| [a, b]).collect(),
            _ => vec![],
        };
        put(
            "overlay.svg".into(),
            overlay_svg(&record.config_name, &demos, &generated, &conditions),
        )?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnmp::uniform_times;

    #[test]
    fn fig6e_header() {
        let csv = error_vs_trajectories_csv(&[30.0, 50.0], &[0.5, 0.25]).unwrap();
        assert_eq!(csv.lines().next().unwrap(), "trajectories,mean_test_error");
        assert_eq!(csv.lines().nth(1).unwrap(), "30,0.5");
        assert!(error_vs_trajectories_csv(&[1.0], &[]).is_err());
    }

    #[test]
    fn overlay_has_one_path_per_trajectory_and_a_dot_per_condition() {
        let d: Vec<_> = (0..3)
            .map(|k| Trajectory::from_fn(format!("d{k}"), vec![], uniform_times(20), |t| vec![t * k as f64]).unwrap())
            .collect();
        let g = Trajectory::from_fn("g", vec![], uniform_times(20), |t| vec![-t]).unwrap();
        let svg = overlay_svg("x", &d, &[g], &[[0.5, -0.5]]);
        assert_eq!(svg.matches("<path").count(), 4);
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }

    #[test]
    fn replot_is_byte_identical() {
        let cfg = crate::harness::ExperimentConfig::preset("wall").unwrap();
        let mut r = RunRecord::new("adapt", &cfg, 0).unwrap();
        r.series("trajectories", vec![30.0, 40.0]).series("mean_test_error", vec![0.5, 0.3]);
        let dir = tempfile::tempdir().unwrap();
        let a = plot_record(&r, dir.path(), &dir.path().join("a")).unwrap();
        let b = plot_record(&r, dir.path(), &dir.path().join("b")).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
        assert!(a.iter().any(|p| p.ends_with("error_vs_trajectories.csv")));
    }
}
