//! Constraint rows over a [`VarLayout`](super::VarLayout), with optional
//! bilinear terms that are linearized before solving.

use alloc::vec;
use alloc::vec::Vec;

use crate::lp_backend::{LinearProgram, Sense};

/// `coef · x[multiplier] · x[input]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bilinear {
    pub multiplier: usize,
    pub input: usize,
    pub coef: f64,
}

/// Which constraint family a row belongs to, for diagnostics and audits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    StateInput { l: usize },
    Initial,
    Inclusion { l: usize, j: usize, r: usize },
    Multiplier { l: usize, j: usize, r: usize, c: usize },
    PredictedInitial,
    PredictedInclusion { l: usize, j: usize, r: usize },
    PredictedMultiplier { l: usize, j: usize, r: usize, c: usize },
    Cost { l: usize, j: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockRow {
    pub linear: Vec<(usize, f64)>,
    pub bilinear: Vec<Bilinear>,
    pub sense: Sense,
    pub rhs: f64,
    pub kind: RowKind,
}

impl BlockRow {
    /// Residual `lhs − rhs` at `x` (signed so that `≤ 0` means satisfied for
    /// `Le` rows; absolute value for `Eq`).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let mut lhs: f64 = self.linear.iter().map(|&(j, c)| c * x[j]).sum();
        lhs += self.bilinear.iter().map(|b| b.coef * x[b.multiplier] * x[b.input]).sum::<f64>();
        match self.sense {
            Sense::Le => lhs - self.rhs,
            Sense::Ge => self.rhs - lhs,
            Sense::Eq => libm::fabs(lhs - self.rhs),
        }
    }
}

/// How bilinear terms become linear.
#[derive(Clone, Copy, Debug)]
pub enum Linearize<'a> {
    /// The block must not contain bilinear terms.
    None,
    /// Freeze every `input` column at `x[input]` and fold the product into
    /// the multiplier coefficient.
    FixInputs(&'a [f64]),
    /// Freeze every `multiplier` column at `x[multiplier]` and fold the
    /// product into the input coefficient.
    FixMultipliers(&'a [f64]),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConstraintBlock {
    pub rows: Vec<BlockRow>,
    /// `(column, lower, upper)`; later entries for the same column intersect.
    pub bounds: Vec<(usize, f64, f64)>,
}

impl ConstraintBlock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, kind: RowKind, linear: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.rows.push(BlockRow {
            linear,
            bilinear: Vec::new(),
            sense,
            rhs,
            kind,
        });
    }

    pub fn bound(&mut self, col: usize, lower: f64, upper: f64) {
        self.bounds.push((col, lower, upper));
    }

    pub fn append(&mut self, other: ConstraintBlock) {
        self.rows.extend(other.rows);
        self.bounds.extend(other.bounds);
    }

    pub fn is_linear(&self) -> bool {
        self.rows.iter().all(|r| r.bilinear.is_empty())
    }

    /// Columns appearing as `input` in some bilinear term.
    pub fn bilinear_inputs(&self) -> Vec<usize> {
        let mut cols: Vec<usize> = self.rows.iter().flat_map(|r| r.bilinear.iter().map(|b| b.input)).collect();
        cols.sort_unstable();
        cols.dedup();
        cols
    }

    /// Columns appearing as `multiplier` in some bilinear term.
    pub fn bilinear_multipliers(&self) -> Vec<usize> {
        let mut cols: Vec<usize> =
            self.rows.iter().flat_map(|r| r.bilinear.iter().map(|b| b.multiplier)).collect();
        cols.sort_unstable();
        cols.dedup();
        cols
    }

    /// Largest violation of rows and bounds at `x`, including bilinear terms.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for r in &self.rows {
            worst = worst.max(r.violation(x));
        }
        for &(c, lo, hi) in &self.bounds {
            worst = worst.max(lo - x[c]).max(x[c] - hi);
        }
        worst
    }

    /// Builds `maximize objective·x` over the block, linearizing per `how`.
    /// Returns `None` when `how` is [`Linearize::None`] but the block is
    /// bilinear.
    pub fn to_lp(&self, objective: Vec<f64>, how: Linearize<'_>) -> Option<LinearProgram> {
        let n = objective.len();
        let mut lp = LinearProgram::new(objective);
        let mut fixed = vec![false; n];
        for row in &self.rows {
            let mut coeffs = row.linear.clone();
            for b in &row.bilinear {
                match how {
                    Linearize::None => return None,
                    Linearize::FixInputs(x) => {
                        coeffs.push((b.multiplier, b.coef * x[b.input]));
                        fixed[b.input] = true;
                    }
                    Linearize::FixMultipliers(x) => {
                        coeffs.push((b.input, b.coef * x[b.multiplier]));
                        fixed[b.multiplier] = true;
                    }
                }
            }
            coeffs.sort_by_key(|&(j, _)| j);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
            for (j, c) in coeffs {
                match merged.last_mut() {
                    Some((k, acc)) if *k == j => *acc += c,
                    _ => merged.push((j, c)),
                }
            }
            merged.retain(|&(_, c)| c != 0.0);
            lp.add_row(merged, row.sense, row.rhs);
        }
        for &(c, lo, hi) in &self.bounds {
            lp.lower[c] = lp.lower[c].max(lo);
            lp.upper[c] = lp.upper[c].min(hi);
        }
        let values = match how {
            Linearize::None => None,
            Linearize::FixInputs(x) | Linearize::FixMultipliers(x) => Some(x),
        };
        if let Some(x) = values {
            for (c, f) in fixed.iter().enumerate() {
                if *f {
                    lp.lower[c] = x[c];
                    lp.upper[c] = x[c];
                }
            }
        }
        Some(lp)
    }
}
