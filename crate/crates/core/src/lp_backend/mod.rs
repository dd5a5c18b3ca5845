//! Dense-interface linear programming.
//!
//! Problems are stated as `maximize c·x` subject to row constraints and
//! optional variable bounds. The embedded solver is a bounded revised simplex
//! over a sparse LU basis factorization; any other backend can be plugged in
//! through [`LpSolver`].

mod lu;
mod simplex;

use alloc::vec;
use alloc::vec::Vec;

pub use simplex::{RevisedSimplex, SimplexOptions};

/// Row relation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    /// `a·x ≤ b`
    Le,
    /// `a·x = b`
    Eq,
    /// `a·x ≥ b`, stored internally as `-a·x ≤ -b`
    Ge,
}

/// `maximize objective·x` subject to `rows[i]·x (senses[i]) rhs[i]` and
/// `lower ≤ x ≤ upper`. Rows are sparse `(column, coefficient)` lists.
#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Vec<(usize, f64)>>,
    pub senses: Vec<Sense>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    /// A program over `objective.len()` free variables with no rows.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram {
            objective,
            rows: Vec::new(),
            senses: Vec::new(),
            rhs: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    /// Builds a program from dense rows.
    pub fn from_dense(
        objective: Vec<f64>,
        rows: &[Vec<f64>],
        senses: &[Sense],
        rhs: &[f64],
    ) -> Result<Self, LpError> {
        let n = objective.len();
        if rows.len() != senses.len() || rows.len() != rhs.len() {
            return Err(LpError::DimensionMismatch("row, sense and rhs counts differ"));
        }
        let mut lp = LinearProgram::new(objective);
        for ((row, &s), &b) in rows.iter().zip(senses).zip(rhs) {
            if row.len() != n {
                return Err(LpError::DimensionMismatch("row length differs from column count"));
            }
            lp.add_row(
                row.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j, *v)),
                s,
                b,
            );
        }
        Ok(lp)
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_row<I>(&mut self, coeffs: I, sense: Sense, rhs: f64)
    where
        I: IntoIterator<Item = (usize, f64)>,
    {
        self.rows.push(coeffs.into_iter().collect());
        self.senses.push(sense);
        self.rhs.push(rhs);
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    pub fn set_lower(&mut self, var: usize, lower: f64) {
        self.lower[var] = lower;
    }

    pub fn set_upper(&mut self, var: usize, upper: f64) {
        self.upper[var] = upper;
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.rows.len() != self.senses.len() || self.rows.len() != self.rhs.len() {
            return Err(LpError::DimensionMismatch("row, sense and rhs counts differ"));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::DimensionMismatch("bound vectors differ from column count"));
        }
        for row in &self.rows {
            for &(j, v) in row {
                if j >= n {
                    return Err(LpError::DimensionMismatch("row references a missing column"));
                }
                if !v.is_finite() {
                    return Err(LpError::NonFinite);
                }
            }
        }
        if self.rhs.iter().chain(self.objective.iter()).any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite);
        }
        for j in 0..n {
            if self.lower[j].is_nan() || self.upper[j].is_nan() || self.lower[j] == f64::INFINITY
                || self.upper[j] == f64::NEG_INFINITY
            {
                return Err(LpError::NonFinite);
            }
        }
        Ok(())
    }

    /// Largest violation of rows and bounds at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for ((row, &s), &b) in self.rows.iter().zip(&self.senses).zip(&self.rhs) {
            let ax: f64 = row.iter().map(|&(j, v)| v * x[j]).sum();
            let viol = match s {
                Sense::Le => ax - b,
                Sense::Ge => b - ax,
                Sense::Eq => libm::fabs(ax - b),
            };
            worst = worst.max(viol);
        }
        for j in 0..x.len() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        worst
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Iteration cap hit or the basis could not be kept nonsingular.
    NumericalFailure,
}

#[derive(Clone, Debug)]
pub struct LpOutcome {
    pub status: LpStatus,
    /// Primal point; meaningful only when `status == Optimal`.
    pub point: Vec<f64>,
    pub value: f64,
    /// Row multipliers of the maximization (nonnegative on `≤` rows at an
    /// optimum); empty unless optimal.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

impl LpOutcome {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
    #[error("non-finite coefficient in linear program")]
    NonFinite,
    #[error("LP solver failed numerically")]
    NumericalFailure,
}

/// A backend able to solve [`LinearProgram`]s.
pub trait LpSolver {
    fn solve(&self, lp: &LinearProgram) -> Result<LpOutcome, LpError>;
}

impl<T: LpSolver + ?Sized> LpSolver for &T {
    fn solve(&self, lp: &LinearProgram) -> Result<LpOutcome, LpError> {
        (**self).solve(lp)
    }
}

/// Solves with the embedded revised simplex and default tolerances.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpOutcome, LpError> {
    RevisedSimplex::default().solve(lp)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Feasibility {
    Feasible(Vec<f64>),
    Infeasible,
}

/// Finds a point satisfying `rows · x (senses) rhs` over free variables.
pub fn solve_feasibility(
    rows: &[Vec<f64>],
    senses: &[Sense],
    rhs: &[f64],
) -> Result<Feasibility, LpError> {
    let n = rows.first().map_or(0, |r| r.len());
    let lp = LinearProgram::from_dense(vec![0.0; n], rows, senses, rhs)?;
    feasibility_with(&RevisedSimplex::default(), &lp)
}

/// Feasibility of an already-assembled program, ignoring its objective.
pub fn feasibility_with<S: LpSolver + ?Sized>(
    solver: &S,
    lp: &LinearProgram,
) -> Result<Feasibility, LpError> {
    let mut probe = lp.clone();
    probe.objective.iter_mut().for_each(|c| *c = 0.0);
    let out = solver.solve(&probe)?;
    match out.status {
        LpStatus::Optimal => Ok(Feasibility::Feasible(out.point)),
        LpStatus::Infeasible => Ok(Feasibility::Infeasible),
        // a zero objective cannot be unbounded
        LpStatus::Unbounded | LpStatus::NumericalFailure => Err(LpError::NumericalFailure),
    }
}
