//! CSV and JSON artifacts. Floats are written with 17 significant digits so
//! every value parses back to the same `f64`.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::closed_loop::{ClosedLoopTrace, StepStatus};
use crate::compare::ComparisonReport;
use crate::config::{ConfigError, Experiment, ExperimentConfig, Offline};

pub const TRACES: &str = "traces.csv";
pub const SUMMARY: &str = "summary.csv";
pub const STATS: &str = "stats.csv";
pub const TIMINGS: &str = "timings.csv";
pub const OFFLINE: &str = "offline.json";
pub const EXPERIMENT: &str = "experiment.json";

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed {file}: {msg}")]
    Format { file: &'static str, msg: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.to_path_buf(), source }
}

pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_float(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

pub fn ensure_dir(dir: &Path) -> Result<(), OutputError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn writer(path: &Path) -> Result<csv::Writer<File>, OutputError> {
    let f = File::create(path).map_err(io_err(path))?;
    Ok(csv::Writer::from_writer(f))
}

/// Column counts of the vector-valued trace fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceDims {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub n_theta: usize,
}

impl TraceDims {
    pub fn of(exp: &Experiment) -> Self {
        TraceDims {
            n: exp.sys.n(),
            m: exp.sys.m(),
            p: exp.sys.p(),
            n_theta: exp.initial_set.n_rows(),
        }
    }

    fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["controller", "seed", "k", "status"].map(String::from).into();
        let block = |h: &mut Vec<String>, name: &str, len: usize| {
            h.extend((1..=len).map(|i| format!("{name}_{i}")));
        };
        block(&mut h, "x", self.n);
        block(&mut h, "u", self.m);
        block(&mut h, "w", self.n);
        block(&mut h, "theta_hat", self.p);
        block(&mut h, "z0", self.n);
        h.push("alpha0".into());
        block(&mut h, "z1", self.n);
        h.push("alpha1".into());
        for name in ["stage_cost", "objective", "passive_objective", "outer_iterations", "lp_solves"] {
            h.push(name.into());
        }
        block(&mut h, "h_theta", self.n_theta);
        h
    }
}

/// One row of traces.csv. Each run contributes its steps and then one
/// closing row holding the last state and parameter set, with status
/// `final` or the failure label; fields that do not apply are NaN or `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub controller: String,
    pub seed: u64,
    pub k: usize,
    pub status: String,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub theta_hat: Vec<f64>,
    pub z0: Vec<f64>,
    pub alpha0: f64,
    pub z1: Vec<f64>,
    pub alpha1: f64,
    pub stage_cost: f64,
    pub objective: f64,
    pub passive_objective: f64,
    pub outer_iterations: Option<usize>,
    pub lp_solves: Option<usize>,
    pub h_theta: Vec<f64>,
}

impl TraceRow {
    pub fn is_step(&self) -> bool {
        self.status == "solved" || self.status == "stalled"
    }
}

fn status_label(s: StepStatus) -> &'static str {
    match s {
        StepStatus::Solved => "solved",
        StepStatus::Stalled => "stalled",
    }
}

fn push_vec(rec: &mut Vec<String>, v: impl IntoIterator<Item = f64>) {
    rec.extend(v.into_iter().map(float));
}

fn push_blank(rec: &mut Vec<String>, len: usize) {
    rec.extend(std::iter::repeat_n(String::new(), len));
}

fn trace_records(dims: &TraceDims, t: &ClosedLoopTrace) -> Vec<Vec<String>> {
    let label = t.controller.label();
    let mut out = Vec::with_capacity(t.steps.len() + 1);
    for s in &t.steps {
        let mut r = vec![label.clone(), t.seed.to_string(), s.k.to_string(), status_label(s.status).into()];
        push_vec(&mut r, s.x.iter().copied());
        push_vec(&mut r, s.u.iter().copied());
        push_vec(&mut r, s.w.iter().copied());
        push_vec(&mut r, s.theta_hat.iter().copied());
        push_vec(&mut r, s.z0.iter().copied());
        r.push(float(s.alpha0));
        push_vec(&mut r, s.z1.iter().copied());
        r.push(float(s.alpha1));
        r.push(float(s.stage_cost));
        r.push(float(s.objective));
        r.push(opt_float(s.passive_objective));
        r.push(s.outer_iterations.to_string());
        r.push(s.lp_solves.to_string());
        push_vec(&mut r, s.h_theta.iter().copied());
        out.push(r);
    }
    let status = t.failure.as_ref().map_or("final", |f| f.kind.label());
    let mut r = vec![label, t.seed.to_string(), t.steps.len().to_string(), status.into()];
    push_vec(&mut r, t.x_final.iter().copied());
    push_blank(&mut r, dims.m + dims.n);
    push_vec(&mut r, t.theta_hat_final.iter().copied());
    push_blank(&mut r, 2 * dims.n + 2 + 5);
    match t.sets.last() {
        Some(ps) => push_vec(&mut r, ps.rhs().iter().copied()),
        None => push_blank(&mut r, dims.n_theta),
    }
    out.push(r);
    out
}

pub fn write_traces(path: &Path, dims: &TraceDims, traces: &[ClosedLoopTrace]) -> Result<(), OutputError> {
    let mut w = writer(path)?;
    w.write_record(dims.header())?;
    for t in traces {
        for r in trace_records(dims, t) {
            w.write_record(&r)?;
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

fn parse_f64(s: &str) -> Result<f64, String> {
    if s.is_empty() {
        return Ok(f64::NAN);
    }
    s.parse().map_err(|_| format!("not a number: {s:?}"))
}

fn parse_opt<T: std::str::FromStr>(s: &str) -> Result<Option<T>, String> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| format!("not an integer: {s:?}"))
}

fn columns(header: &csv::StringRecord, prefix: &str) -> Vec<usize> {
    let want = format!("{prefix}_");
    header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.strip_prefix(&want).is_some_and(|rest| rest.parse::<usize>().is_ok()))
        .map(|(i, _)| i)
        .collect()
}

pub fn read_traces(path: &Path) -> Result<Vec<TraceRow>, OutputError> {
    let fmt = |msg: String| OutputError::Format { file: TRACES, msg };
    let f = File::open(path).map_err(io_err(path))?;
    let mut rd = csv::Reader::from_reader(f);
    let header = rd.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h == name).ok_or_else(|| fmt(format!("missing column {name}")));
    let [c_ctrl, c_seed, c_k, c_status] = [col("controller")?, col("seed")?, col("k")?, col("status")?];
    let [c_a0, c_a1, c_cost, c_obj, c_pobj, c_outer, c_lp] = [
        col("alpha0")?,
        col("alpha1")?,
        col("stage_cost")?,
        col("objective")?,
        col("passive_objective")?,
        col("outer_iterations")?,
        col("lp_solves")?,
    ];
    let vecs = ["x", "u", "w", "theta_hat", "z0", "z1", "h_theta"].map(|p| columns(&header, p));
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let get = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| parse_f64(get(i)).map_err(fmt);
        let vec_of = |cols: &[usize]| cols.iter().map(|&i| num(i)).collect::<Result<Vec<_>, _>>();
        rows.push(TraceRow {
            controller: get(c_ctrl).to_string(),
            seed: get(c_seed).parse().map_err(|_| fmt("bad seed".into()))?,
            k: get(c_k).parse().map_err(|_| fmt("bad step index".into()))?,
            status: get(c_status).to_string(),
            x: vec_of(&vecs[0])?,
            u: vec_of(&vecs[1])?,
            w: vec_of(&vecs[2])?,
            theta_hat: vec_of(&vecs[3])?,
            z0: vec_of(&vecs[4])?,
            alpha0: num(c_a0)?,
            z1: vec_of(&vecs[5])?,
            alpha1: num(c_a1)?,
            stage_cost: num(c_cost)?,
            objective: num(c_obj)?,
            passive_objective: num(c_pobj)?,
            outer_iterations: parse_opt(get(c_outer)).map_err(fmt)?,
            lp_solves: parse_opt(get(c_lp)).map_err(fmt)?,
            h_theta: vec_of(&vecs[6])?,
        });
    }
    Ok(rows)
}

/// Per-run rows; wall time lives here rather than in traces.csv so the
/// latter is reproducible byte for byte.
pub fn write_timings(path: &Path, traces: &[ClosedLoopTrace]) -> Result<(), OutputError> {
    let mut w = writer(path)?;
    w.write_record(["controller", "seed", "k", "wall_seconds", "lp_solves"])?;
    for t in traces {
        for s in &t.steps {
            w.write_record([
                t.controller.label(),
                t.seed.to_string(),
                s.k.to_string(),
                float(s.wall_seconds),
                s.lp_solves.to_string(),
            ])?;
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn write_summary(dir: &Path, report: &ComparisonReport) -> Result<(), OutputError> {
    let path = dir.join(SUMMARY);
    let mut w = writer(&path)?;
    w.write_record(["controller", "seed", "completed", "cost", "steps", "final_radius", "failure", "failure_step"])?;
    for r in &report.runs {
        let (fail, at) = match &r.failure {
            Some((l, k)) => (l.clone(), k.to_string()),
            None => (String::new(), String::new()),
        };
        w.write_record([
            r.controller.label(),
            r.seed.to_string(),
            r.completed.to_string(),
            float(r.cost),
            r.steps.to_string(),
            float(r.final_radius),
            fail,
            at,
        ])?;
    }
    w.flush().map_err(io_err(&path))?;

    let path = dir.join(STATS);
    let mut w = writer(&path)?;
    w.write_record(["controller", "runs", "completed", "mean_cost", "median_cost", "reduction_percent"])?;
    for s in &report.stats {
        w.write_record([
            s.controller.label(),
            s.runs.to_string(),
            s.completed.to_string(),
            float(s.mean),
            float(s.median),
            opt_float(s.reduction_percent),
        ])?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainArtifact {
    pub passed: bool,
    pub max_radius: f64,
    pub worst_theta: Vec<f64>,
    pub vertices_checked: usize,
    pub samples_checked: usize,
    pub exact_vertices: bool,
}

/// Offline tube data as written to offline.json.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OfflineArtifact {
    pub schema_version: u32,
    pub alpha_bar: f64,
    pub f_bar: Vec<f64>,
    pub w_bar: Vec<f64>,
    pub horizon: usize,
    pub gain: GainArtifact,
    pub seconds: f64,
}

impl OfflineArtifact {
    pub fn new(off: &Offline, seconds: f64) -> Self {
        let g = &off.gain_report;
        OfflineArtifact {
            schema_version: crate::config::SCHEMA_VERSION,
            alpha_bar: off.tube.alpha_bar,
            f_bar: off.tube.f_bar.iter().copied().collect(),
            w_bar: off.tube.w_bar.iter().copied().collect(),
            horizon: off.tube.horizon,
            gain: GainArtifact {
                passed: g.passed(),
                max_radius: g.max_radius,
                worst_theta: g.worst_theta.iter().copied().collect(),
                vertices_checked: g.vertices_checked,
                samples_checked: g.samples_checked,
                exact_vertices: g.exact_vertices,
            },
            seconds,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), OutputError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_offline(path: &Path) -> Result<OfflineArtifact, OutputError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_experiment(path: &Path) -> Result<Experiment, OutputError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)?;
    Ok(Experiment::new(cfg)?)
}

/// traces.csv, timings.csv and a copy of the experiment, for one or more
/// runs.
pub fn write_run_outputs(dir: &Path, exp: &Experiment, traces: &[ClosedLoopTrace]) -> Result<(), OutputError> {
    ensure_dir(dir)?;
    write_json(&dir.join(EXPERIMENT), &exp.config)?;
    write_traces(&dir.join(TRACES), &TraceDims::of(exp), traces)?;
    write_timings(&dir.join(TIMINGS), traces)
}
