//! Passive and dual adaptive tube MPC.
//!
//! The passive controller solves one LP over the robust tube. The dual
//! controller adds a predicted tube of length `N̂` that is robust only to the
//! parameter set expected after the next measurement; because that set
//! depends on the first input, the program is bilinear and is solved by
//! alternating between two LPs (first input frozen, then the multipliers of
//! the input-dependent rows frozen), restarted from several first inputs.

mod audit;
mod cost;
mod predicted;

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

pub use audit::{audit_decision, Audit};
pub use cost::{cost_epigraph, is_positive_definite};
pub use predicted::{predict_state, predicted_blocks, predicted_set_at, PredictedParameterForm};

use crate::lp_backend::{LinearProgram, LpError, LpSolver, LpStatus, RevisedSimplex};
use crate::polytope::{self, GeometryError, HPolytope};
use crate::rng;
use crate::robust_tube::{robust_blocks, ConstraintBlock, Linearize, TubeConfig, TubeError, VarLayout};
use crate::set_membership::{ParameterSet, PointEstimate};
use crate::system_model::{ModelError, UncertainSystem};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum MpcError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
    #[error("cost weights must be symmetric positive definite")]
    WeightNotPositiveDefinite,
    #[error("LP solver failed numerically")]
    NumericalFailure,
    #[error(transparent)]
    Tube(#[from] TubeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl From<LpError> for MpcError {
    fn from(_: LpError) -> Self {
        MpcError::NumericalFailure
    }
}

/// Stage-cost weights for `‖Qx‖∞ + ‖Ru‖∞`.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

/// Which parameter-set rows receive multipliers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MultiplierRows {
    All,
    /// Only rows not implied by the others; describes the same set with
    /// fewer columns.
    Irredundant,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MpcOptions {
    pub multistarts: usize,
    pub max_outer: usize,
    pub tol: f64,
    pub seed: u64,
    pub multiplier_rows: MultiplierRows,
}

impl Default for MpcOptions {
    fn default() -> Self {
        MpcOptions {
            multistarts: 4,
            max_outer: 30,
            tol: 1e-6,
            seed: 0,
            multiplier_rows: MultiplierRows::Irredundant,
        }
    }
}

/// Everything known at time `k` that the controller may use.
#[derive(Clone, Copy, Debug)]
pub struct MpcProblem<'a> {
    pub sys: &'a UncertainSystem,
    pub tube: &'a TubeConfig,
    pub ps: &'a ParameterSet,
    pub weights: &'a Weights,
    pub x_k: &'a DVector<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Solved,
    Infeasible,
    /// Every dual start failed; the passive solution is returned instead.
    Stalled,
}

/// Values of all decision variables, extracted from an LP point.
#[derive(Clone, Debug, PartialEq)]
pub struct DualDecision {
    pub z: Vec<DVector<f64>>,
    pub alpha: Vec<f64>,
    pub v: Vec<DVector<f64>>,
    pub z_hat: Vec<DVector<f64>>,
    pub alpha_hat: Vec<f64>,
    /// Epigraph values `t_l`, `l = 0..=N`.
    pub stage_costs: Vec<f64>,
    pub layout: VarLayout,
    pub raw: Vec<f64>,
}

impl DualDecision {
    pub fn from_point(layout: &VarLayout, x: &[f64]) -> Self {
        let nn = layout.horizon;
        let vec_at = |start: usize, len: usize| DVector::from_column_slice(&x[start..start + len]);
        let z = (0..=nn).map(|l| vec_at(layout.z(l, 0), layout.n)).collect();
        let alpha = (0..=nn).map(|l| x[layout.alpha(l)]).collect();
        let v = (0..nn).map(|l| vec_at(layout.v(l, 0), layout.m)).collect();
        let (z_hat, alpha_hat) = if layout.n_hat > 0 {
            (
                (0..=layout.n_hat).map(|l| vec_at(layout.z_hat(l, 0), layout.n)).collect(),
                (0..=layout.n_hat).map(|l| x[layout.alpha_hat(l)]).collect(),
            )
        } else {
            (Vec::new(), Vec::new())
        };
        DualDecision {
            z,
            alpha,
            v,
            z_hat,
            alpha_hat,
            stage_costs: (0..=nn).map(|l| x[layout.t(l)]).collect(),
            layout: layout.clone(),
            raw: x.to_vec(),
        }
    }

    pub fn v0(&self) -> &DVector<f64> {
        &self.v[0]
    }

    /// `Λ_l^j` as an `n_x × n_θ` matrix.
    pub fn lambda(&self, l: usize, j: usize) -> DMatrix<f64> {
        let lay = &self.layout;
        DMatrix::from_fn(lay.n_x, lay.n_theta(), |r, s| self.raw[lay.lambda(l, j, r, s)])
    }

    /// `Λ̂_l^j` as an `n_x × (n_θ + n_w)` matrix.
    pub fn lambda_hat(&self, l: usize, j: usize) -> DMatrix<f64> {
        let lay = &self.layout;
        DMatrix::from_fn(lay.n_x, lay.lambda_hat_cols(), |r, s| self.raw[lay.lambda_hat(l, j, r, s)])
    }
}

/// Outcome of one dual start.
#[derive(Clone, Debug, PartialEq)]
pub struct StartOutcome {
    /// As drawn, before any pull toward the passive input.
    pub v0_init: DVector<f64>,
    /// Objective after every LP; empty if the first LP was infeasible.
    pub trace: Vec<f64>,
    pub outer_iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub v0: DVector<f64>,
    pub decision: Option<DualDecision>,
    /// Worst-case cost `Σ_l t_l`.
    pub objective: f64,
    pub outer_iterations: usize,
    /// Objective after each LP of the winning start.
    pub objective_trace: Vec<f64>,
    /// Passive-controller objective at the same state (dual solves only).
    pub passive_objective: Option<f64>,
    pub starts: Vec<StartOutcome>,
    pub lp_solves: usize,
}

impl SolveReport {
    fn infeasible(m: usize, lp_solves: usize) -> Self {
        SolveReport {
            status: SolveStatus::Infeasible,
            v0: DVector::zeros(m),
            decision: None,
            objective: f64::INFINITY,
            outer_iterations: 0,
            objective_trace: Vec::new(),
            passive_objective: None,
            starts: Vec::new(),
            lp_solves,
        }
    }
}

/// An optional external local solver for the bilinear program, tried from
/// the best alternating point. Results are accepted only if feasible and
/// strictly better.
pub trait BilinearRefiner {
    fn refine(&self, block: &ConstraintBlock, objective: &[f64], start: &[f64]) -> Option<Vec<f64>>;
}

/// LP backend plus optional bilinear refiner.
#[derive(Clone, Copy)]
pub struct MpcSolver<'s> {
    pub lp: &'s dyn LpSolver,
    pub refiner: Option<&'s dyn BilinearRefiner>,
}

pub fn solve_pampc(problem: &MpcProblem<'_>, opts: &MpcOptions) -> Result<SolveReport, MpcError> {
    let lp = RevisedSimplex::default();
    MpcSolver { lp: &lp, refiner: None }.pampc(problem, opts)
}

pub fn solve_dampc(
    problem: &MpcProblem<'_>,
    est: &PointEstimate,
    n_hat: usize,
    opts: &MpcOptions,
) -> Result<SolveReport, MpcError> {
    let lp = RevisedSimplex::default();
    MpcSolver { lp: &lp, refiner: None }.dampc(problem, est, n_hat, opts)
}

const OBJ_TIE: f64 = 1e-9;

/// Halvings toward the passive input tried for an infeasible start.
const START_PULLBACKS: usize = 4;

/// Feasible-and-optimal point of an LP, `None` if infeasible.
fn run_lp(solver: &dyn LpSolver, lp: &LinearProgram, count: &mut usize) -> Result<Option<(f64, Vec<f64>)>, MpcError> {
    *count += 1;
    let out = solver.solve(lp)?;
    match out.status {
        LpStatus::Optimal => Ok(Some((-out.value, out.point))),
        LpStatus::Infeasible => Ok(None),
        // epigraph costs are bounded below by zero
        LpStatus::Unbounded | LpStatus::NumericalFailure => Err(MpcError::NumericalFailure),
    }
}

impl<'s> MpcSolver<'s> {
    fn theta_rows(&self, ps: &ParameterSet, opts: &MpcOptions) -> Result<Vec<usize>, MpcError> {
        match opts.multiplier_rows {
            MultiplierRows::All => Ok((0..ps.n_rows()).collect()),
            MultiplierRows::Irredundant => Ok(polytope::irredundant_rows(self.lp, ps.polytope())?),
        }
    }

    fn layout(&self, p: &MpcProblem<'_>, n_hat: usize, rows: Vec<usize>) -> VarLayout {
        VarLayout::new(
            p.sys.n(),
            p.sys.m(),
            p.tube.horizon,
            n_hat,
            p.tube.shape.vertices().len(),
            p.tube.shape.n_x(),
            p.sys.n_w(),
            rows,
        )
    }

    /// Robust tube and its cost only.
    pub fn pampc(&self, p: &MpcProblem<'_>, opts: &MpcOptions) -> Result<SolveReport, MpcError> {
        let rows = self.theta_rows(p.ps, opts)?;
        let layout = self.layout(p, 0, rows);
        let mut blk = robust_blocks(p.sys, p.tube, p.ps, p.x_k, &layout)?;
        let (objective, cost) = cost_epigraph(p.tube, &p.weights.q, &p.weights.r, &layout)?;
        blk.append(cost);
        let lp = blk.to_lp(objective, Linearize::None).expect("passive program is linear");
        let mut count = 0;
        match run_lp(self.lp, &lp, &mut count)? {
            None => Ok(SolveReport::infeasible(p.sys.m(), count)),
            Some((obj, x)) => {
                let dec = DualDecision::from_point(&layout, &x);
                Ok(SolveReport {
                    status: SolveStatus::Solved,
                    v0: dec.v0().clone(),
                    decision: Some(dec),
                    objective: obj,
                    outer_iterations: 0,
                    objective_trace: vec![obj],
                    passive_objective: None,
                    starts: Vec::new(),
                    lp_solves: count,
                })
            }
        }
    }

    /// Dual controller with predicted-tube length `n_hat`; `n_hat = 0` is the
    /// passive controller.
    pub fn dampc(
        &self,
        p: &MpcProblem<'_>,
        est: &PointEstimate,
        n_hat: usize,
        opts: &MpcOptions,
    ) -> Result<SolveReport, MpcError> {
        if n_hat == 0 {
            return self.pampc(p, opts);
        }
        if n_hat > p.tube.horizon {
            return Err(MpcError::DimensionMismatch("predicted horizon exceeds the robust horizon"));
        }
        let passive = self.pampc(p, opts)?;
        let Some(passive_dec) = passive.decision.as_ref() else {
            return Ok(passive);
        };
        let mut lp_solves = passive.lp_solves;

        let layout = self.layout(p, n_hat, passive_dec.layout.theta_rows.clone());
        let form = PredictedParameterForm::new(p.sys, p.tube, p.ps, est, p.x_k)?;
        let mut blk = robust_blocks(p.sys, p.tube, p.ps, p.x_k, &layout)?;
        blk.append(predicted_blocks(p.sys, p.tube, &form, p.x_k, &layout)?);
        let (objective, cost) = cost_epigraph(p.tube, &p.weights.q, &p.weights.r, &layout)?;
        blk.append(cost);

        let mut starts = vec![passive.v0.clone()];
        starts.extend(self.sample_starts(p, &passive.v0, opts)?);

        let mut best: Option<(f64, Vec<f64>, Vec<f64>, usize, usize)> = None;
        let mut summaries = Vec::with_capacity(starts.len());
        for (idx, v0) in starts.iter().enumerate() {
            let (mut trace, mut point, mut outer) =
                self.alternate(&blk, &objective, &layout, v0, opts, &mut lp_solves)?;
            // A start whose fixed-input program is infeasible is moved toward
            // the passive input, which is always feasible.
            let mut pulled = v0.clone();
            for _ in 0..START_PULLBACKS {
                if !trace.is_empty() || idx == 0 {
                    break;
                }
                pulled = (&pulled + &passive.v0) * 0.5;
                (trace, point, outer) = self.alternate(&blk, &objective, &layout, &pulled, opts, &mut lp_solves)?;
            }
            summaries.push(StartOutcome {
                v0_init: v0.clone(),
                trace: trace.clone(),
                outer_iterations: outer,
            });
            let (Some(&obj), Some(point)) = (trace.last(), point) else {
                continue;
            };
            let better = match &best {
                None => true,
                Some((b_obj, b_point, _, _, _)) => {
                    if obj < b_obj - OBJ_TIE {
                        true
                    } else if obj <= b_obj + OBJ_TIE {
                        let norm = |x: &[f64]| (0..layout.m).map(|i| x[layout.v(0, i)].abs()).fold(0.0, f64::max);
                        norm(&point) < norm(b_point)
                    } else {
                        false
                    }
                }
            };
            if better {
                best = Some((obj, point, trace, outer, idx));
            }
        }

        let (status, obj, point, trace, outer) = match best {
            Some((obj, point, trace, outer, _)) => (SolveStatus::Solved, obj, point, trace, outer),
            None => {
                let x = lift_passive(&passive_dec, &layout);
                (SolveStatus::Stalled, passive.objective, x, Vec::new(), 0)
            }
        };
        let (obj, point) = match self.refiner {
            Some(rf) => match rf.refine(&blk, &objective, &point) {
                Some(x) if blk.max_violation(&x) <= 1e-7 => {
                    let val: f64 = -objective.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>();
                    if val < obj - OBJ_TIE {
                        (val, x)
                    } else {
                        (obj, point)
                    }
                }
                _ => (obj, point),
            },
            None => (obj, point),
        };
        let dec = DualDecision::from_point(&layout, &point);
        Ok(SolveReport {
            status,
            v0: dec.v0().clone(),
            decision: Some(dec),
            objective: obj,
            outer_iterations: outer,
            objective_trace: trace,
            passive_objective: Some(passive.objective),
            starts: summaries,
            lp_solves,
        })
    }

    /// `opts.multistarts` first-input corrections drawn uniformly from the box
    /// of inputs admissible at `x_k`, shifted by `−Kx_k`.
    fn sample_starts(
        &self,
        p: &MpcProblem<'_>,
        v_ref: &DVector<f64>,
        opts: &MpcOptions,
    ) -> Result<Vec<DVector<f64>>, MpcError> {
        if opts.multistarts == 0 {
            return Ok(Vec::new());
        }
        let m = p.sys.m();
        let rhs = DVector::from_element(p.sys.n_c(), 1.0) - p.sys.f() * p.x_k;
        let inputs = HPolytope::new(p.sys.g().clone(), rhs)?;
        let kx = &p.tube.k * p.x_k;
        let mut lo = DVector::zeros(m);
        let mut hi = DVector::zeros(m);
        for i in 0..m {
            let mut e = DVector::zeros(m);
            for (sign, slot) in [(1.0, &mut hi), (-1.0, &mut lo)] {
                e[i] = sign;
                slot[i] = match polytope::support_with(self.lp, &inputs, &e) {
                    Ok(s) => sign * s - kx[i],
                    Err(GeometryError::Unbounded) => v_ref[i] + sign,
                    Err(GeometryError::EmptySet) => v_ref[i],
                    Err(e) => return Err(e.into()),
                };
            }
        }
        let mut stream = rng::substream(opts.seed, "multistart");
        Ok((0..opts.multistarts)
            .map(|_| DVector::from_fn(m, |i, _| rng::uniform(&mut stream, lo[i], hi[i])))
            .collect())
    }

    /// Alternates the two linearizations from a fixed first input. Returns the
    /// objective trace, the final point (if any LP was feasible) and the
    /// number of completed rounds.
    fn alternate(
        &self,
        blk: &ConstraintBlock,
        objective: &[f64],
        layout: &VarLayout,
        v0: &DVector<f64>,
        opts: &MpcOptions,
        lp_solves: &mut usize,
    ) -> Result<(Vec<f64>, Option<Vec<f64>>, usize), MpcError> {
        let mut x = vec![0.0; layout.total()];
        for i in 0..layout.m {
            x[layout.v(0, i)] = v0[i];
        }
        let mut trace = Vec::new();
        let mut best: Option<Vec<f64>> = None;
        let mut rounds = 0;
        let mut prev = f64::INFINITY;
        while rounds < opts.max_outer.max(1) {
            let lp = blk.to_lp(objective.to_vec(), Linearize::FixInputs(&x)).expect("linearized");
            let Some((ja, xa)) = run_lp(self.lp, &lp, lp_solves)? else {
                break;
            };
            if ja > prev + OBJ_TIE {
                break;
            }
            trace.push(ja);
            best = Some(xa.clone());
            let lp = blk.to_lp(objective.to_vec(), Linearize::FixMultipliers(&xa)).expect("linearized");
            rounds += 1;
            let Some((jb, xb)) = run_lp(self.lp, &lp, lp_solves)? else {
                break;
            };
            if jb > ja + OBJ_TIE {
                break;
            }
            trace.push(jb);
            best = Some(xb.clone());
            x = xb;
            let improved = prev - jb;
            prev = jb;
            if improved < opts.tol {
                break;
            }
        }
        Ok((trace, best, rounds))
    }
}

/// Passive solution embedded in the dual layout: the predicted tube copies
/// the robust one and the extra multipliers are zero.
fn lift_passive(dec: &DualDecision, layout: &VarLayout) -> Vec<f64> {
    let src = &dec.layout;
    let mut x = vec![0.0; layout.total()];
    for l in 0..=layout.horizon {
        for i in 0..layout.n {
            x[layout.z(l, i)] = dec.raw[src.z(l, i)];
        }
        x[layout.alpha(l)] = dec.raw[src.alpha(l)];
        x[layout.t(l)] = dec.raw[src.t(l)];
        for j in 0..layout.n_vertices {
            x[layout.a(l, j)] = dec.raw[src.a(l, j)];
            x[layout.b(l, j)] = dec.raw[src.b(l, j)];
        }
    }
    for l in 0..layout.horizon {
        for i in 0..layout.m {
            x[layout.v(l, i)] = dec.raw[src.v(l, i)];
        }
        for j in 0..layout.n_vertices {
            for r in 0..layout.n_x {
                for s in 0..layout.n_theta() {
                    x[layout.lambda(l, j, r, s)] = dec.raw[src.lambda(l, j, r, s)];
                    if l < layout.n_hat {
                        x[layout.lambda_hat(l, j, r, s)] = dec.raw[src.lambda(l, j, r, s)];
                    }
                }
            }
        }
    }
    for l in 0..=layout.n_hat {
        for i in 0..layout.n {
            x[layout.z_hat(l, i)] = dec.raw[src.z(l, i)];
        }
        x[layout.alpha_hat(l)] = dec.raw[src.alpha(l)];
    }
    x
}
