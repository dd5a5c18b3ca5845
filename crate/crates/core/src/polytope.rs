//! Halfspace-represented polytopes `{x | Hx ≤ h}` and the handful of
//! operations the controller needs on them.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::lp_backend::{LinearProgram, LpError, LpSolver, LpStatus, RevisedSimplex, Sense};

/// Vertices closer than this in the ∞-norm are merged.
pub const VERTEX_DEDUP_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("polytope is empty")]
    EmptySet,
    #[error("polytope is unbounded in the requested direction")]
    Unbounded,
    #[error("operation supports only two-dimensional polytopes")]
    Unsupported,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
    #[error("tube cross-section has a negative scaling")]
    NegativeScaling,
    #[error("non-finite polytope data")]
    NonFinite,
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct HPolytope {
    h: DMatrix<f64>,
    rhs: DVector<f64>,
}

impl HPolytope {
    pub fn new(h: DMatrix<f64>, rhs: DVector<f64>) -> Result<Self, GeometryError> {
        if h.nrows() != rhs.len() {
            return Err(GeometryError::DimensionMismatch("row count differs from rhs length"));
        }
        if h.iter().chain(rhs.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        Ok(HPolytope { h, rhs })
    }

    pub fn from_rows(rows: &[Vec<f64>], rhs: &[f64]) -> Result<Self, GeometryError> {
        let dim = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != dim) {
            return Err(GeometryError::DimensionMismatch("ragged halfspace rows"));
        }
        let h = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]);
        HPolytope::new(h, DVector::from_column_slice(rhs))
    }

    /// `{x | ‖x‖∞ ≤ radius}`.
    pub fn inf_ball(dim: usize, radius: f64) -> Self {
        let mut h = DMatrix::zeros(2 * dim, dim);
        for i in 0..dim {
            h[(2 * i, i)] = 1.0;
            h[(2 * i + 1, i)] = -1.0;
        }
        HPolytope {
            h,
            rhs: DVector::from_element(2 * dim, radius),
        }
    }

    pub fn dim(&self) -> usize {
        self.h.ncols()
    }

    pub fn n_rows(&self) -> usize {
        self.h.nrows()
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    pub fn rhs_mut(&mut self) -> &mut DVector<f64> {
        &mut self.rhs
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.h.row(i).transpose()
    }

    /// Row-stacked intersection.
    pub fn intersect(&self, other: &HPolytope) -> Result<Self, GeometryError> {
        if self.dim() != other.dim() {
            return Err(GeometryError::DimensionMismatch("intersecting polytopes of different dimension"));
        }
        let rows = self.n_rows() + other.n_rows();
        let h = DMatrix::from_fn(rows, self.dim(), |i, j| {
            if i < self.n_rows() {
                self.h[(i, j)]
            } else {
                other.h[(i - self.n_rows(), j)]
            }
        });
        let rhs = DVector::from_fn(rows, |i, _| {
            if i < self.n_rows() {
                self.rhs[i]
            } else {
                other.rhs[i - self.n_rows()]
            }
        });
        Ok(HPolytope { h, rhs })
    }

    /// Feasibility program over free variables, objective left at zero.
    pub fn to_lp(&self) -> LinearProgram {
        let mut lp = LinearProgram::new(vec![0.0; self.dim()]);
        for i in 0..self.n_rows() {
            lp.add_row(
                (0..self.dim()).filter(|&j| self.h[(i, j)] != 0.0).map(|j| (j, self.h[(i, j)])),
                Sense::Le,
                self.rhs[i],
            );
        }
        lp
    }

    pub fn is_empty_with(&self, solver: &dyn LpSolver) -> Result<bool, GeometryError> {
        let out = solver.solve(&self.to_lp())?;
        match out.status {
            LpStatus::Optimal => Ok(false),
            LpStatus::Infeasible => Ok(true),
            _ => Err(GeometryError::Lp(LpError::NumericalFailure)),
        }
    }

    pub fn is_empty(&self) -> Result<bool, GeometryError> {
        self.is_empty_with(&RevisedSimplex::default())
    }

    /// Largest violation `max_i ([H]_i x − h_i)`, negative when strictly inside.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let r = &self.h * x - &self.rhs;
        r.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `max_{x ∈ P} dir·x` with the embedded LP solver.
pub fn support(p: &HPolytope, dir: &DVector<f64>) -> Result<f64, GeometryError> {
    support_with(&RevisedSimplex::default(), p, dir)
}

pub fn support_with(
    solver: &dyn LpSolver,
    p: &HPolytope,
    dir: &DVector<f64>,
) -> Result<f64, GeometryError> {
    if dir.len() != p.dim() {
        return Err(GeometryError::DimensionMismatch("direction length differs from dimension"));
    }
    let mut lp = p.to_lp();
    lp.objective = dir.iter().copied().collect();
    let out = solver.solve(&lp)?;
    match out.status {
        LpStatus::Optimal => Ok(out.value),
        LpStatus::Infeasible => Err(GeometryError::EmptySet),
        LpStatus::Unbounded => Err(GeometryError::Unbounded),
        LpStatus::NumericalFailure => Err(GeometryError::Lp(LpError::NumericalFailure)),
    }
}

/// `Hx ≤ h + tol·1`.
pub fn contains(p: &HPolytope, x: &DVector<f64>, tol: f64) -> bool {
    x.len() == p.dim() && p.max_violation(x) <= tol
}

/// Indices of a subset of rows describing the same set. Rows are dropped one
/// at a time when the remaining rows already imply them, so duplicates and
/// rows touching the set only at a vertex go as well.
pub fn irredundant_rows(solver: &dyn LpSolver, p: &HPolytope) -> Result<Vec<usize>, GeometryError> {
    let mut keep: Vec<bool> = vec![true; p.n_rows()];
    for i in 0..p.n_rows() {
        let a = p.row(i);
        if a.amax() == 0.0 {
            keep[i] = false;
            continue;
        }
        // maximize a·x over the other kept rows, capped at h_i + 1 so the
        // program stays bounded
        let mut lp = LinearProgram::new(a.iter().copied().collect());
        for k in (0..p.n_rows()).filter(|&k| k != i && keep[k]) {
            lp.add_row((0..p.dim()).map(|j| (j, p.h[(k, j)])).filter(|e| e.1 != 0.0), Sense::Le, p.rhs[k]);
        }
        lp.add_row((0..p.dim()).map(|j| (j, p.h[(i, j)])).filter(|e| e.1 != 0.0), Sense::Le, p.rhs[i] + 1.0);
        let out = solver.solve(&lp)?;
        match out.status {
            LpStatus::Optimal => {
                if out.value <= p.rhs[i] + 1e-9 * (1.0 + libm::fabs(p.rhs[i])) {
                    keep[i] = false;
                }
            }
            LpStatus::Infeasible => return Err(GeometryError::EmptySet),
            _ => return Err(GeometryError::Lp(LpError::NumericalFailure)),
        }
    }
    Ok((0..p.n_rows()).filter(|&i| keep[i]).collect())
}

/// One cross-section `{z} ⊕ α𝕏₀` of a state tube.
#[derive(Clone, Debug, PartialEq)]
pub struct TubeCross {
    pub z: DVector<f64>,
    pub alpha: f64,
}

impl TubeCross {
    pub fn new(z: DVector<f64>, alpha: f64) -> Result<Self, GeometryError> {
        if alpha < 0.0 {
            return Err(GeometryError::NegativeScaling);
        }
        Ok(TubeCross { z, alpha })
    }

    /// Vertices `z + α x^j` for the vertices `x^j` of 𝕏₀.
    pub fn vertices(&self, shape_vertices: &[DVector<f64>]) -> Vec<DVector<f64>> {
        shape_vertices.iter().map(|xj| &self.z + xj * self.alpha).collect()
    }
}

/// Whether `inner ⊆ outer` for two scaled translates of the normalized set
/// `{x | Hx x ≤ 1}`.
pub fn cross_contains(
    outer: &TubeCross,
    inner: &TubeCross,
    hx: &DMatrix<f64>,
) -> Result<bool, GeometryError> {
    cross_contains_tol(outer, inner, hx, 1e-9)
}

pub fn cross_contains_tol(
    outer: &TubeCross,
    inner: &TubeCross,
    hx: &DMatrix<f64>,
    tol: f64,
) -> Result<bool, GeometryError> {
    if outer.alpha < 0.0 || inner.alpha < 0.0 {
        return Err(GeometryError::NegativeScaling);
    }
    if outer.z.len() != hx.ncols() || inner.z.len() != hx.ncols() {
        return Err(GeometryError::DimensionMismatch("tube center length differs from Hx columns"));
    }
    let lhs = hx * (&inner.z - &outer.z);
    let slack = outer.alpha - inner.alpha;
    Ok(lhs.iter().all(|v| *v <= slack + tol))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VertexList {
    pub vertices: Vec<[f64; 2]>,
}

impl VertexList {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Shoelace area (zero for segments and points).
    pub fn area(&self) -> f64 {
        let v = &self.vertices;
        if v.len() < 3 {
            return 0.0;
        }
        let mut s = 0.0;
        for i in 0..v.len() {
            let (a, b) = (v[i], v[(i + 1) % v.len()]);
            s += a[0] * b[1] - a[1] * b[0];
        }
        0.5 * libm::fabs(s)
    }

    pub fn as_vectors(&self) -> Vec<DVector<f64>> {
        self.vertices.iter().map(|p| DVector::from_column_slice(p)).collect()
    }
}

/// Counter-clockwise vertices of a bounded two-dimensional polytope.
///
/// The polygon is obtained by clipping a box that encloses `P` with every
/// halfplane in turn. Lower-dimensional polytopes come back as their segment
/// endpoints (or a single point).
pub fn vertices_2d(p: &HPolytope) -> Result<VertexList, GeometryError> {
    vertices_2d_with(&RevisedSimplex::default(), p)
}

pub fn vertices_2d_with(solver: &dyn LpSolver, p: &HPolytope) -> Result<VertexList, GeometryError> {
    if p.dim() != 2 {
        return Err(GeometryError::Unsupported);
    }
    let e = |i: usize, s: f64| {
        let mut d = DVector::zeros(2);
        d[i] = s;
        d
    };
    let x_hi = support_with(solver, p, &e(0, 1.0))?;
    let x_lo = -support_with(solver, p, &e(0, -1.0))?;
    let y_hi = support_with(solver, p, &e(1, 1.0))?;
    let y_lo = -support_with(solver, p, &e(1, -1.0))?;
    let scale = 1.0 + x_hi.abs().max(x_lo.abs()).max(y_hi.abs()).max(y_lo.abs());
    let pad = 1.0 + 0.5 * scale;

    let mut poly: Vec<[f64; 2]> = vec![
        [x_lo - pad, y_lo - pad],
        [x_hi + pad, y_lo - pad],
        [x_hi + pad, y_hi + pad],
        [x_lo - pad, y_hi + pad],
    ];
    let eps = 1e-10 * scale;
    for i in 0..p.n_rows() {
        let a = [p.h[(i, 0)], p.h[(i, 1)]];
        let norm = libm::hypot(a[0], a[1]);
        if norm == 0.0 {
            if p.rhs[i] < -eps {
                return Err(GeometryError::EmptySet);
            }
            continue;
        }
        let (a, b) = ([a[0] / norm, a[1] / norm], p.rhs[i] / norm);
        poly = clip(&poly, a, b, eps);
        if poly.is_empty() {
            return Err(GeometryError::EmptySet);
        }
    }
    Ok(VertexList {
        vertices: simplify(poly, VERTEX_DEDUP_TOL, eps),
    })
}

fn clip(poly: &[[f64; 2]], a: [f64; 2], b: f64, eps: f64) -> Vec<[f64; 2]> {
    let side = |p: &[f64; 2]| a[0] * p[0] + a[1] * p[1] - b;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let cur = poly[i];
        let next = poly[(i + 1) % poly.len()];
        let (sc, sn) = (side(&cur), side(&next));
        let cur_in = sc <= eps;
        let next_in = sn <= eps;
        if cur_in {
            out.push(cur);
        }
        if cur_in != next_in {
            // near-boundary crossings duplicate a kept point; `simplify` merges them
            let t = (sc / (sc - sn)).clamp(0.0, 1.0);
            out.push([cur[0] + t * (next[0] - cur[0]), cur[1] + t * (next[1] - cur[1])]);
        }
    }
    out
}

fn close(a: &[f64; 2], b: &[f64; 2], tol: f64) -> bool {
    libm::fabs(a[0] - b[0]) <= tol && libm::fabs(a[1] - b[1]) <= tol
}

fn simplify(poly: Vec<[f64; 2]>, tol: f64, eps: f64) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = Vec::with_capacity(poly.len());
    for p in poly {
        if pts.last().map_or(true, |q| !close(q, &p, tol)) {
            pts.push(p);
        }
    }
    while pts.len() > 1 && close(&pts[0], pts.last().unwrap(), tol) {
        pts.pop();
    }
    if pts.len() <= 2 {
        return pts;
    }

    // Drop points lying on the segment between their neighbours. Repeat
    // until stable because removals can expose new collinear triples.
    loop {
        if pts.len() <= 2 {
            break;
        }
        let mut removed = false;
        let mut i = 0;
        while i < pts.len() && pts.len() > 2 {
            let k = pts.len();
            let prev = pts[(i + k - 1) % k];
            let cur = pts[i];
            let next = pts[(i + 1) % k];
            let cross = (cur[0] - prev[0]) * (next[1] - prev[1]) - (cur[1] - prev[1]) * (next[0] - prev[0]);
            let len = libm::hypot(next[0] - prev[0], next[1] - prev[1]).max(1.0);
            let between = (cur[0] - prev[0]) * (next[0] - cur[0]) + (cur[1] - prev[1]) * (next[1] - cur[1]) >= 0.0;
            if between && libm::fabs(cross) <= eps.max(1e-12) * len * 10.0 {
                pts.remove(i);
                removed = true;
            } else {
                i += 1;
            }
        }
        if !removed {
            break;
        }
    }
    if pts.len() == 2 && close(&pts[0], &pts[1], tol) {
        pts.truncate(1);
    }
    pts
}
