//! Experiment description: one versioned JSON document, matrices as
//! row-major nested arrays. Loading validates every cross-field dimension
//! before anything is solved.

use std::path::Path;

use dampc_core::dual_mpc::{is_positive_definite, MpcOptions, MultiplierRows, Weights};
use dampc_core::polytope::{self, GeometryError, HPolytope};
use dampc_core::robust_tube::{
    compute_terminal_alpha, verify_gain, GainReport, TubeConfig, TubeError, TubeShape,
};
use dampc_core::set_membership::{IdentError, ParameterSet};
use dampc_core::system_model::{ModelError, UncertainSystem};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

pub type Matrix = Vec<Vec<f64>>;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported schema version {0} (expected {SCHEMA_VERSION})")]
    Version(u32),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("invalid system: {0}")]
    Model(#[from] ModelError),
    #[error("invalid set: {0}")]
    Geometry(#[from] GeometryError),
    #[error("invalid tube: {0}")]
    Tube(#[from] TubeError),
    #[error("invalid parameter set: {0}")]
    Ident(#[from] IdentError),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub system: SystemSpec,
    pub tube: TubeSpec,
    pub identification: IdentSpec,
    pub run: RunSpec,
    pub weights: WeightSpec,
    #[serde(default)]
    pub solver: SolverSpec,
}

/// `A₀..A_p`, `B₀..B_p`, the parameter set `Θ`, the disturbance set `𝕎` and
/// the constraint set `ℤ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub a: Vec<Matrix>,
    pub b: Vec<Matrix>,
    pub theta: SetSpec,
    pub disturbance: SetSpec,
    pub constraints: ConstraintSpec,
}

/// A polytope given as per-coordinate bounds or as halfspaces `Hx ≤ h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SetSpec {
    Box {
        #[serde(rename = "box")]
        bounds: Vec<[f64; 2]>,
    },
    Halfspaces {
        h: Matrix,
        rhs: Vec<f64>,
    },
}

/// `ℤ` either as box bounds on states and inputs (normalized at load) or
/// directly as `Fx + Gu ≤ 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConstraintSpec {
    Bounds {
        state_bounds: Vec<[f64; 2]>,
        input_bounds: Vec<[f64; 2]>,
    },
    Normalized {
        f: Matrix,
        g: Matrix,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TubeSpec {
    /// Cross-section shape `𝕏₀`; rows are rescaled to rhs 1.
    pub shape: SetSpec,
    pub vertices: Matrix,
    pub gain: Matrix,
    pub horizon: usize,
    /// Predicted-tube lengths of the dual controllers to compare.
    pub n_hat: Vec<usize>,
    #[serde(default = "default_alpha_tol")]
    pub alpha_tol: f64,
    #[serde(default = "default_gain_samples")]
    pub gain_samples: usize,
}

fn default_alpha_tol() -> f64 {
    1e-3
}

fn default_gain_samples() -> usize {
    200
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentSpec {
    /// Number of parameter-set rows; ignored when `rows` is given.
    #[serde(default)]
    pub n_theta: Option<usize>,
    /// Explicit parameter-set directions.
    #[serde(default)]
    pub rows: Option<Matrix>,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_mu0")]
    pub mu0: f64,
    pub theta_hat0: Vec<f64>,
    #[serde(default)]
    pub direction_seed: u64,
}

fn default_window() -> usize {
    10
}

fn default_mu0() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub x0: Vec<f64>,
    pub steps: usize,
    pub seeds: SeedSpec,
    pub theta_star: Vec<f64>,
    #[serde(default)]
    pub disturbance: DisturbanceSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    /// Inclusive range.
    Range { from: u64, to: u64 },
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            SeedSpec::List(v) => v.clone(),
            SeedSpec::Range { from, to } => (*from..=*to).collect(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisturbanceSpec {
    #[default]
    Uniform,
    /// Replayed in order; running past the end is an error.
    Sequence { values: Matrix },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    pub q: Matrix,
    pub r: Matrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub multistarts: usize,
    pub max_outer: usize,
    pub tol: f64,
    pub multiplier_rows: RowChoice,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let d = MpcOptions::default();
        SolverSpec {
            multistarts: d.multistarts,
            max_outer: d.max_outer,
            tol: d.tol,
            multiplier_rows: RowChoice::Irredundant,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowChoice {
    All,
    Irredundant,
}

/// A validated configuration with every model object built.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub sys: UncertainSystem,
    pub shape: TubeShape,
    pub gain: DMatrix<f64>,
    pub initial_set: ParameterSet,
    pub theta_hat0: DVector<f64>,
    pub theta_star: DVector<f64>,
    pub x0: DVector<f64>,
    pub weights: Weights,
    pub options: MpcOptions,
    pub seeds: Vec<u64>,
}

/// Offline tube ingredients.
#[derive(Clone, Debug)]
pub struct Offline {
    pub tube: TubeConfig,
    pub gain_report: GainReport,
}

pub fn load(path: &Path) -> Result<Experiment, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<Experiment, ConfigError> {
    let config: ExperimentConfig = serde_json::from_str(text)?;
    Experiment::new(config)
}

fn matrix(rows: &Matrix, what: &str) -> Result<DMatrix<f64>, ConfigError> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    if r == 0 || c == 0 || rows.iter().any(|x| x.len() != c) {
        return invalid(format!("{what}: rows must be nonempty and of equal length"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return invalid(format!("{what}: non-finite entry"));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn vector(v: &[f64], len: usize, what: &str) -> Result<DVector<f64>, ConfigError> {
    if v.len() != len {
        return invalid(format!("{what}: expected length {len}, got {}", v.len()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return invalid(format!("{what}: non-finite entry"));
    }
    Ok(DVector::from_column_slice(v))
}

impl SetSpec {
    pub fn build(&self, dim: usize, what: &str) -> Result<HPolytope, ConfigError> {
        match self {
            SetSpec::Box { bounds } => {
                if bounds.len() != dim {
                    return invalid(format!("{what}: box has {} bounds, expected {dim}", bounds.len()));
                }
                let mut h = DMatrix::zeros(2 * dim, dim);
                let mut rhs = DVector::zeros(2 * dim);
                for (i, [lo, hi]) in bounds.iter().enumerate() {
                    if !(lo <= hi) {
                        return invalid(format!("{what}: bound {i} has lower > upper"));
                    }
                    h[(2 * i, i)] = 1.0;
                    rhs[2 * i] = *hi;
                    h[(2 * i + 1, i)] = -1.0;
                    rhs[2 * i + 1] = -lo;
                }
                Ok(HPolytope::new(h, rhs)?)
            }
            SetSpec::Halfspaces { h, rhs } => {
                let h = matrix(h, what)?;
                if h.ncols() != dim {
                    return invalid(format!("{what}: halfspaces have {} columns, expected {dim}", h.ncols()));
                }
                let rhs = vector(rhs, h.nrows(), what)?;
                Ok(HPolytope::new(h, rhs)?)
            }
        }
    }
}

/// Rows `e_i / hi` and `−e_i / (−lo)`, per coordinate, for bounds enclosing 0.
fn normalized_bounds(bounds: &[[f64; 2]], what: &str) -> Result<DMatrix<f64>, ConfigError> {
    let d = bounds.len();
    let mut rows = DMatrix::zeros(2 * d, d);
    for (i, [lo, hi]) in bounds.iter().enumerate() {
        if !(*lo < 0.0 && *hi > 0.0) {
            return invalid(format!("{what}: bound {i} must enclose zero strictly"));
        }
        rows[(2 * i, i)] = 1.0 / hi;
        rows[(2 * i + 1, i)] = -1.0 / -lo;
    }
    Ok(rows)
}

impl ConstraintSpec {
    /// `(F, G)` with `Fx + Gu ≤ 1`.
    pub fn build(&self, n: usize, m: usize) -> Result<(DMatrix<f64>, DMatrix<f64>), ConfigError> {
        match self {
            ConstraintSpec::Bounds { state_bounds, input_bounds } => {
                if state_bounds.len() != n || input_bounds.len() != m {
                    return invalid("constraints: bound counts must match state and input sizes");
                }
                let fx = normalized_bounds(state_bounds, "state bounds")?;
                let gu = normalized_bounds(input_bounds, "input bounds")?;
                let rows = fx.nrows() + gu.nrows();
                let mut f = DMatrix::zeros(rows, n);
                let mut g = DMatrix::zeros(rows, m);
                f.view_mut((0, 0), (fx.nrows(), n)).copy_from(&fx);
                g.view_mut((fx.nrows(), 0), (gu.nrows(), m)).copy_from(&gu);
                Ok((f, g))
            }
            ConstraintSpec::Normalized { f, g } => {
                let f = matrix(f, "constraints.f")?;
                let g = matrix(g, "constraints.g")?;
                if f.ncols() != n || g.ncols() != m || f.nrows() != g.nrows() {
                    return invalid("constraints: F must be n_c×n and G n_c×m");
                }
                Ok((f, g))
            }
        }
    }
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self, ConfigError> {
        if config.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Version(config.schema_version));
        }
        let s = &config.system;
        if s.a.is_empty() || s.a.len() != s.b.len() {
            return invalid("system: need p+1 matrices in both a and b");
        }
        let a: Vec<_> = s.a.iter().map(|m| matrix(m, "system.a")).collect::<Result<_, _>>()?;
        let b: Vec<_> = s.b.iter().map(|m| matrix(m, "system.b")).collect::<Result<_, _>>()?;
        let (n, m, p) = (a[0].nrows(), b[0].ncols(), a.len() - 1);
        if p == 0 {
            return invalid("system: at least one uncertain parameter is required");
        }
        let theta = s.theta.build(p, "system.theta")?;
        let w = s.disturbance.build(n, "system.disturbance")?;
        let (f, g) = s.constraints.build(n, m)?;
        let sys = UncertainSystem::new(a, b, f, g, w.clone(), theta.clone())?;

        let t = &config.tube;
        let shape_set = t.shape.build(n, "tube.shape")?;
        let verts = t
            .vertices
            .iter()
            .map(|v| vector(v, n, "tube.vertices"))
            .collect::<Result<Vec<_>, _>>()?;
        let shape = TubeShape::new(&shape_set, verts)?;
        let gain = matrix(&t.gain, "tube.gain")?;
        if gain.nrows() != m || gain.ncols() != n {
            return invalid("tube.gain must be m×n");
        }
        if t.horizon == 0 {
            return invalid("tube.horizon must be positive");
        }
        if let Some(&bad) = t.n_hat.iter().find(|&&h| h > t.horizon) {
            return invalid(format!("tube.n_hat {bad} exceeds the horizon {}", t.horizon));
        }
        if !(t.alpha_tol > 0.0) {
            return invalid("tube.alpha_tol must be positive");
        }

        let id = &config.identification;
        let initial_set = match (&id.rows, id.n_theta) {
            (Some(rows), _) => {
                let h = matrix(rows, "identification.rows")?;
                if h.ncols() != p {
                    return invalid("identification.rows must have p columns");
                }
                let rhs = (0..h.nrows())
                    .map(|i| polytope::support(&theta, &h.row(i).transpose()))
                    .collect::<Result<Vec<_>, _>>()?;
                ParameterSet::new(HPolytope::new(h, DVector::from_vec(rhs))?)
            }
            (None, Some(count)) => ParameterSet::initial(&theta, count, id.direction_seed)?,
            (None, None) => ParameterSet::new(theta.clone()),
        };
        if id.window == 0 {
            return invalid("identification.window must be at least 1");
        }
        if !(id.mu0 > 0.0) {
            return invalid("identification.mu0 must be positive");
        }
        let theta_hat0 = vector(&id.theta_hat0, p, "identification.theta_hat0")?;
        if !polytope::contains(initial_set.polytope(), &theta_hat0, 1e-9) {
            return invalid("identification.theta_hat0 lies outside the parameter set");
        }

        let r = &config.run;
        let x0 = vector(&r.x0, n, "run.x0")?;
        let theta_star = vector(&r.theta_star, p, "run.theta_star")?;
        if !polytope::contains(&theta, &theta_star, 1e-9) {
            return invalid("run.theta_star lies outside the parameter set");
        }
        let seeds = r.seeds.seeds();
        if seeds.is_empty() {
            return invalid("run.seeds must name at least one seed");
        }
        if let DisturbanceSpec::Sequence { values } = &r.disturbance {
            for wv in values {
                let wv = vector(wv, n, "run.disturbance.values")?;
                if !polytope::contains(&w, &wv, 1e-12) {
                    return invalid("run.disturbance.values contains a point outside the disturbance set");
                }
            }
        }

        let q = matrix(&config.weights.q, "weights.q")?;
        let rr = matrix(&config.weights.r, "weights.r")?;
        if q.shape() != (n, n) || rr.shape() != (m, m) {
            return invalid("weights: Q must be n×n and R m×m");
        }
        if !is_positive_definite(&q) || !is_positive_definite(&rr) {
            return invalid("weights: Q and R must be symmetric positive definite");
        }

        let sv = &config.solver;
        if !(sv.tol > 0.0) {
            return invalid("solver.tol must be positive");
        }
        let options = MpcOptions {
            multistarts: sv.multistarts,
            max_outer: sv.max_outer,
            tol: sv.tol,
            seed: 0,
            multiplier_rows: match sv.multiplier_rows {
                RowChoice::All => MultiplierRows::All,
                RowChoice::Irredundant => MultiplierRows::Irredundant,
            },
        };

        Ok(Experiment {
            config,
            sys,
            shape,
            gain,
            initial_set,
            theta_hat0,
            theta_star,
            x0,
            weights: Weights { q, r: rr },
            options,
            seeds,
        })
    }

    pub fn horizon(&self) -> usize {
        self.config.tube.horizon
    }

    pub fn steps(&self) -> usize {
        self.config.run.steps
    }

    pub fn window(&self) -> usize {
        self.config.identification.window
    }

    pub fn mu0(&self) -> f64 {
        self.config.identification.mu0
    }

    pub fn n_hat(&self) -> &[usize] {
        &self.config.tube.n_hat
    }

    /// Gain check, terminal scaling and tightening offsets.
    pub fn offline(&self) -> Result<Offline, ConfigError> {
        let t = &self.config.tube;
        let gain_report = verify_gain(&self.sys, &self.gain, t.gain_samples, 0)?;
        let alpha_bar = compute_terminal_alpha(&self.sys, &self.shape, &self.gain, t.alpha_tol)?;
        let tube = TubeConfig::new(&self.sys, self.shape.clone(), self.gain.clone(), t.horizon, alpha_bar)?;
        Ok(Offline { tube, gain_report })
    }

    /// As [`Experiment::offline`] but with a previously computed `ᾱ`.
    pub fn offline_with_alpha(&self, alpha_bar: f64) -> Result<Offline, ConfigError> {
        let t = &self.config.tube;
        let gain_report = verify_gain(&self.sys, &self.gain, t.gain_samples, 0)?;
        let tube = TubeConfig::new(&self.sys, self.shape.clone(), self.gain.clone(), t.horizon, alpha_bar)?;
        Ok(Offline { tube, gain_report })
    }
}
