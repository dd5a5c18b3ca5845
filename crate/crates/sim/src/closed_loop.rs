//! Receding-horizon loop against the true plant.

use std::fmt;
use std::time::Instant;

use dampc_core::dual_mpc::{solve_dampc, solve_pampc, MpcError, MpcOptions, MpcProblem, SolveStatus};
use dampc_core::rng::derive_seed;
use dampc_core::set_membership::{
    build_nonfalsified, lms_update, update_parameter_set, IdentError, MeasurementWindow, ParameterSet,
    PointEstimate, Transition,
};
use dampc_core::system_model::{step_truth, DisturbanceLaw, TruthModel};
use nalgebra::DVector;
use serde::Serialize;

use crate::config::{DisturbanceSpec, Experiment, Offline};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Controller {
    Passive,
    Dual { n_hat: usize },
}

impl Controller {
    /// `pampc` or `dampc<N̂>`.
    pub fn label(&self) -> String {
        match self {
            Controller::Passive => "pampc".into(),
            Controller::Dual { n_hat } => format!("dampc{n_hat}"),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        if s == "pampc" {
            return Some(Controller::Passive);
        }
        s.strip_prefix("dampc")?.parse().ok().map(|n_hat| Controller::Dual { n_hat })
    }
}

impl fmt::Display for Controller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Solved,
    /// No dual start succeeded; the passive tube was applied.
    Stalled,
}

/// One closed-loop step `k`: the state, the applied input, the disturbance
/// that followed, and what the controller knew and decided.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub w: DVector<f64>,
    pub theta_hat: DVector<f64>,
    /// Right-hand side of `Θ_k`; the row directions never change.
    pub h_theta: DVector<f64>,
    pub z0: DVector<f64>,
    pub alpha0: f64,
    pub z1: DVector<f64>,
    pub alpha1: f64,
    /// `‖Qx_k‖∞ + ‖Ru_k‖∞`.
    pub stage_cost: f64,
    pub status: StepStatus,
    pub objective: f64,
    pub passive_objective: Option<f64>,
    pub outer_iterations: usize,
    pub lp_solves: usize,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FailureKind {
    /// The first optimization admits no tube.
    InfeasibleStart,
    /// A later optimization admits no tube (recursive feasibility broken).
    Infeasible,
    /// The data contradict the parameter set.
    Falsified,
    Numerical(String),
}

impl FailureKind {
    pub fn label(&self) -> &'static str {
        match self {
            FailureKind::InfeasibleStart => "infeasible_start",
            FailureKind::Infeasible => "infeasible",
            FailureKind::Falsified => "falsified",
            FailureKind::Numerical(_) => "numerical_failure",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunFailure {
    pub k: usize,
    pub kind: FailureKind,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            FailureKind::InfeasibleStart => write!(f, "no feasible tube from the initial state"),
            FailureKind::Infeasible => write!(f, "optimization infeasible at step {}", self.k),
            FailureKind::Falsified => write!(f, "parameter set falsified at step {}", self.k),
            FailureKind::Numerical(m) => write!(f, "numerical failure at step {}: {m}", self.k),
        }
    }
}

/// A run, possibly cut short; `steps` holds every completed step.
#[derive(Clone, Debug)]
pub struct ClosedLoopTrace {
    pub controller: Controller,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    /// State after the last completed step.
    pub x_final: DVector<f64>,
    /// Estimate after the last update.
    pub theta_hat_final: DVector<f64>,
    /// `Θ_0, …, Θ_T`: one more entry than completed steps when the run
    /// finishes, since the last measurement still updates the set.
    pub sets: Vec<ParameterSet>,
    pub failure: Option<RunFailure>,
}

impl ClosedLoopTrace {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    /// `Σ_{k<T} ‖Qx_k‖∞ + ‖Ru_k‖∞` over the completed steps.
    pub fn cost(&self) -> f64 {
        self.steps.iter().map(|s| s.stage_cost).sum()
    }
}

fn numerical(k: usize, e: impl fmt::Display) -> RunFailure {
    RunFailure { k, kind: FailureKind::Numerical(e.to_string()) }
}

fn ident_failure(k: usize, e: IdentError) -> RunFailure {
    match e {
        IdentError::Falsified => RunFailure { k, kind: FailureKind::Falsified },
        e => numerical(k, e),
    }
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.amax()
}

/// Multistart seed for step `k` of the run seeded `seed`.
pub fn step_seed(seed: u64, k: usize) -> u64 {
    derive_seed(derive_seed(seed, "multistart"), &format!("step-{k}"))
}

/// Runs `exp.steps()` steps. At each `k ≥ 1` the previous transition enters
/// the window, `Θ_k` and `θ̂_k` are updated, then the controller is solved at
/// `x_k` and `u_k = Kx_k + v₀` is applied to the true plant.
pub fn run_closed_loop(exp: &Experiment, offline: &Offline, controller: Controller, seed: u64) -> ClosedLoopTrace {
    let sys = &exp.sys;
    let tube = &offline.tube;
    let law = match &exp.config.run.disturbance {
        DisturbanceSpec::Uniform => DisturbanceLaw::UniformOnW { seed: derive_seed(seed, "disturbance") },
        DisturbanceSpec::Sequence { values } => {
            DisturbanceLaw::Sequence(values.iter().map(|w| DVector::from_column_slice(w)).collect())
        }
    };
    let mut trace = ClosedLoopTrace {
        controller,
        seed,
        steps: Vec::with_capacity(exp.steps()),
        x_final: exp.x0.clone(),
        theta_hat_final: exp.theta_hat0.clone(),
        sets: vec![exp.initial_set.clone()],
        failure: None,
    };
    let mut truth = match TruthModel::new(sys, exp.theta_star.clone(), law) {
        Ok(t) => t,
        Err(e) => {
            trace.failure = Some(numerical(0, e));
            return trace;
        }
    };
    let mut window = MeasurementWindow::new(exp.window());
    let mut ps = exp.initial_set.clone();
    let mut est = PointEstimate::new(exp.theta_hat0.clone(), exp.mu0());
    let mut x = exp.x0.clone();
    let mut last: Option<(DVector<f64>, DVector<f64>)> = None;

    for k in 0..=exp.steps() {
        if let Some((x_prev, u_prev)) = last.take() {
            window.push(Transition { x: x_prev.clone(), u: u_prev.clone(), x_next: x.clone() });
            let updated = build_nonfalsified(sys, &window.to_vec())
                .and_then(|delta| update_parameter_set(&ps, &delta))
                .and_then(|next| {
                    let e = lms_update(&est, &next, sys, &x_prev, &u_prev, &x)?;
                    Ok((next, e))
                });
            match updated {
                Ok((next, e)) => {
                    ps = next;
                    est = e;
                    trace.sets.push(ps.clone());
                    trace.theta_hat_final = est.theta_hat.clone();
                }
                Err(e) => {
                    trace.failure = Some(ident_failure(k, e));
                    return trace;
                }
            }
        }
        if k == exp.steps() {
            break;
        }

        let opts = MpcOptions { seed: step_seed(seed, k), ..exp.options };
        let problem = MpcProblem { sys, tube, ps: &ps, weights: &exp.weights, x_k: &x };
        let started = Instant::now();
        let report = match controller {
            Controller::Passive => solve_pampc(&problem, &opts),
            Controller::Dual { n_hat } => solve_dampc(&problem, &est, n_hat, &opts),
        };
        let wall_seconds = started.elapsed().as_secs_f64();
        let report = match report {
            Ok(r) => r,
            Err(MpcError::NumericalFailure) => {
                trace.failure = Some(numerical(k, "LP solver failed"));
                return trace;
            }
            Err(e) => {
                trace.failure = Some(numerical(k, e));
                return trace;
            }
        };
        let status = match report.status {
            SolveStatus::Solved => StepStatus::Solved,
            SolveStatus::Stalled => StepStatus::Stalled,
            SolveStatus::Infeasible => {
                let kind = if k == 0 { FailureKind::InfeasibleStart } else { FailureKind::Infeasible };
                trace.failure = Some(RunFailure { k, kind });
                return trace;
            }
        };
        let dec = report.decision.as_ref().expect("solved reports carry a decision");
        let u = &tube.k * &x + &report.v0;
        let (x_next, w) = match step_truth(sys, &mut truth, &x, &u) {
            Ok(r) => r,
            Err(e) => {
                trace.failure = Some(numerical(k, e));
                return trace;
            }
        };
        trace.steps.push(StepRecord {
            k,
            x: x.clone(),
            u: u.clone(),
            w,
            theta_hat: est.theta_hat.clone(),
            h_theta: ps.rhs().clone(),
            z0: dec.z[0].clone(),
            alpha0: dec.alpha[0],
            z1: dec.z[1].clone(),
            alpha1: dec.alpha[1],
            stage_cost: inf_norm(&(&exp.weights.q * &x)) + inf_norm(&(&exp.weights.r * &u)),
            status,
            objective: report.objective,
            passive_objective: report.passive_objective,
            outer_iterations: report.outer_iterations,
            lp_solves: report.lp_solves,
            wall_seconds,
        });
        last = Some((x, u));
        x = x_next;
        trace.x_final = x.clone();
    }
    trace
}
