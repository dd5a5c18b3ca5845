//! SVG views of a run directory: state trajectories and final parameter
//! sets. Both need two-dimensional data and are skipped otherwise.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use dampc_core::polytope::{self, HPolytope};
use nalgebra::DVector;

use crate::config::Experiment;
use crate::output::{read_experiment, read_traces, OutputError, TraceRow, EXPERIMENT, TRACES};

pub const TRAJECTORIES: &str = "trajectories.svg";
pub const PARAMETER_SETS: &str = "parameter_sets.svg";

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const SIZE: f64 = 480.0;
const PAD: f64 = 40.0;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlotOutcome {
    pub written: Vec<PathBuf>,
    pub skipped: Vec<String>,
}

/// Square viewport mapping a data box onto the canvas, y pointing up.
struct Frame {
    lo: [f64; 2],
    span: f64,
}

impl Frame {
    fn fit(points: impl Iterator<Item = [f64; 2]>) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for i in 0..2 {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        if !lo[0].is_finite() {
            return Frame { lo: [-1.0, -1.0], span: 2.0 };
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9) * 1.1;
        let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
        Frame { lo: [mid[0] - span / 2.0, mid[1] - span / 2.0], span }
    }

    fn px(&self, p: [f64; 2]) -> (f64, f64) {
        let s = (SIZE - 2.0 * PAD) / self.span;
        (PAD + (p[0] - self.lo[0]) * s, SIZE - PAD - (p[1] - self.lo[1]) * s)
    }

    fn polyline(&self, pts: &[[f64; 2]]) -> String {
        pts.iter()
            .map(|&p| {
                let (x, y) = self.px(p);
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn header(title: &str, xlabel: &str, ylabel: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, SIZE / 2.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#, SIZE / 2.0, SIZE - 10.0);
    let _ = writeln!(s, r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{ylabel}</text>"#, SIZE / 2.0, SIZE / 2.0);
    let _ = writeln!(
        s,
        r##"<rect x="{PAD}" y="{PAD}" width="{w}" height="{w}" fill="none" stroke="#888"/>"##,
        w = SIZE - 2.0 * PAD
    );
    s
}

fn legend(s: &mut String, labels: &[String]) {
    for (i, l) in labels.iter().enumerate() {
        let y = PAD + 16.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="2"/><text x="{}" y="{}">{l}</text>"#,
            PAD + 8.0,
            PAD + 28.0,
            COLORS[i % COLORS.len()],
            PAD + 34.0,
            y + 4.0
        );
    }
}

fn by_controller(rows: &[TraceRow]) -> BTreeMap<String, BTreeMap<u64, Vec<&TraceRow>>> {
    let mut out: BTreeMap<String, BTreeMap<u64, Vec<&TraceRow>>> = BTreeMap::new();
    for r in rows {
        out.entry(r.controller.clone()).or_default().entry(r.seed).or_default().push(r);
    }
    out
}

/// State paths `x_0 … x_T` in the plane, one color per controller.
pub fn render_trajectories(rows: &[TraceRow]) -> String {
    let groups = by_controller(rows);
    let frame = Frame::fit(rows.iter().map(|r| [r.x[0], r.x[1]]).chain([[0.0, 0.0]]));
    let mut s = header("State trajectories", "x1", "x2");
    let labels: Vec<String> = groups.keys().cloned().collect();
    for (i, runs) in groups.values().enumerate() {
        let color = COLORS[i % COLORS.len()];
        for path in runs.values() {
            let pts: Vec<[f64; 2]> = path.iter().map(|r| [r.x[0], r.x[1]]).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-opacity="0.5" stroke-width="1.2"/>"#,
                frame.polyline(&pts)
            );
        }
    }
    let (ox, oy) = frame.px([0.0, 0.0]);
    let _ = writeln!(s, r#"<circle cx="{ox:.2}" cy="{oy:.2}" r="3" fill="black"/>"#);
    legend(&mut s, &labels);
    s.push_str("</svg>\n");
    s
}

/// Closed polygon vertices of `{θ | Hθ ≤ h}`.
fn polygon(exp: &Experiment, h: &[f64]) -> Result<Vec<[f64; 2]>, OutputError> {
    let set = HPolytope::new(exp.initial_set.h_theta().clone(), DVector::from_column_slice(h))
        .map_err(|e| OutputError::Format { file: TRACES, msg: e.to_string() })?;
    let verts = polytope::vertices_2d(&set).map_err(|e| OutputError::Format { file: TRACES, msg: e.to_string() })?;
    let mut pts: Vec<[f64; 2]> = verts.as_vectors().iter().map(|v| [v[0], v[1]]).collect();
    if let Some(&first) = pts.first() {
        pts.push(first);
    }
    Ok(pts)
}

/// The initial set, each run's final `Θ_T` (one color per controller) and
/// the true parameter.
pub fn render_parameter_sets(exp: &Experiment, rows: &[TraceRow]) -> Result<String, OutputError> {
    let groups = by_controller(rows);
    let initial = polygon(exp, exp.initial_set.rhs().as_slice())?;
    let frame = Frame::fit(initial.iter().copied());
    let mut s = header("Final parameter sets", "theta1", "theta2");
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#444" stroke-dasharray="4 3"/>"##,
        frame.polyline(&initial)
    );
    let labels: Vec<String> = groups.keys().cloned().collect();
    for (i, runs) in groups.values().enumerate() {
        let color = COLORS[i % COLORS.len()];
        for path in runs.values() {
            let Some(last) = path.last() else { continue };
            let poly = polygon(exp, &last.h_theta)?;
            let _ = writeln!(
                s,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.08" stroke="{color}" stroke-width="1"/>"#,
                frame.polyline(&poly)
            );
        }
    }
    let (tx, ty) = frame.px([exp.theta_star[0], exp.theta_star[1]]);
    let _ = writeln!(
        s,
        r#"<path d="M{:.2},{:.2} l8,8 m0,-8 l-8,8" stroke="black" stroke-width="2"/><text x="{:.2}" y="{:.2}">true parameter</text>"#,
        tx - 4.0,
        ty - 4.0,
        tx + 8.0,
        ty - 6.0
    );
    legend(&mut s, &labels);
    s.push_str("</svg>\n");
    Ok(s)
}

/// Renders both plots from `dir/traces.csv` and `dir/experiment.json`.
pub fn plot_dir(dir: &Path) -> Result<PlotOutcome, OutputError> {
    let exp = read_experiment(&dir.join(EXPERIMENT))?;
    let rows = read_traces(&dir.join(TRACES))?;
    let mut out = PlotOutcome::default();
    let write = |name: &str, body: String, out: &mut PlotOutcome| -> Result<(), OutputError> {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|source| OutputError::Io { path: path.clone(), source })?;
        out.written.push(path);
        Ok(())
    };
    if exp.sys.n() == 2 {
        write(TRAJECTORIES, render_trajectories(&rows), &mut out)?;
    } else {
        out.skipped.push(format!("{TRAJECTORIES}: state dimension is {}, not 2", exp.sys.n()));
    }
    if exp.sys.p() == 2 {
        write(PARAMETER_SETS, render_parameter_sets(&exp, &rows)?, &mut out)?;
    } else {
        out.skipped.push(format!("{PARAMETER_SETS}: parameter dimension is {}, not 2", exp.sys.p()));
    }
    Ok(out)
}
