//! Online set-membership identification of the plant parameter.
//!
//! The parameter set keeps a fixed matrix `H_θ` for all time; each update
//! recomputes only its right-hand side as support values of the previous set
//! intersected with the parameters consistent with recent measurements.

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};

use crate::lp_backend::{LpError, LpSolver, RevisedSimplex};
use crate::polytope::{self, GeometryError, HPolytope};
use crate::rng;
use crate::system_model::{ModelError, UncertainSystem};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum IdentError {
    #[error("no measurements in the window")]
    EmptyWindow,
    #[error("measurements are inconsistent with the parameter set and disturbance bound")]
    Falsified,
    #[error("projection did not converge")]
    NumericalFailure,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl From<LpError> for IdentError {
    fn from(e: LpError) -> Self {
        IdentError::Geometry(GeometryError::Lp(e))
    }
}

/// One measured transition `(x_t, u_t, x_{t+1})`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub x_next: DVector<f64>,
}

/// Sliding window of the most recent `capacity` transitions.
#[derive(Clone, Debug)]
pub struct MeasurementWindow {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl MeasurementWindow {
    pub fn new(capacity: usize) -> Self {
        MeasurementWindow {
            capacity: capacity.max(1),
            items: VecDeque::new(),
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn to_vec(&self) -> Vec<Transition> {
        self.items.iter().cloned().collect()
    }
}

/// Parameter set `{θ | H_θ θ ≤ h_θ}` with `H_θ` frozen at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet {
    set: HPolytope,
}

impl ParameterSet {
    pub fn new(set: HPolytope) -> Self {
        ParameterSet { set }
    }

    /// Builds the initial set with `n_theta` rows.
    ///
    /// The rows of `theta0` are reused as-is when their count matches; other
    /// counts get evenly spaced directions on the circle (two parameters), a
    /// seeded uniform sample of the sphere (three or more), or `±1` (one).
    /// The rhs is the support of `theta0` along each row.
    pub fn initial(theta0: &HPolytope, n_theta: usize, seed: u64) -> Result<Self, IdentError> {
        let p = theta0.dim();
        if n_theta == theta0.n_rows() {
            return Ok(ParameterSet { set: theta0.clone() });
        }
        if n_theta < p + 1 {
            return Err(IdentError::DimensionMismatch("too few parameter-set rows to bound the set"));
        }
        let h = match p {
            1 => DMatrix::from_fn(n_theta, 1, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 }),
            2 => DMatrix::from_fn(n_theta, 2, |i, j| {
                let ang = TAU * i as f64 / n_theta as f64;
                if j == 0 {
                    libm::cos(ang)
                } else {
                    libm::sin(ang)
                }
            }),
            _ => {
                let mut stream = rng::substream(seed, "parameter-directions");
                let mut h = DMatrix::zeros(n_theta, p);
                for i in 0..n_theta {
                    let mut d = DVector::from_fn(p, |_, _| rng::normal(&mut stream));
                    while d.norm() < 1e-12 {
                        d = DVector::from_fn(p, |_, _| rng::normal(&mut stream));
                    }
                    d /= d.norm();
                    h.set_row(i, &d.transpose());
                }
                h
            }
        };
        let solver = RevisedSimplex::default();
        let rhs = DVector::from_iterator(
            n_theta,
            (0..n_theta)
                .map(|i| polytope::support_with(&solver, theta0, &h.row(i).transpose()))
                .collect::<Result<Vec<_>, _>>()?,
        );
        Ok(ParameterSet {
            set: HPolytope::new(h, rhs)?,
        })
    }

    pub fn polytope(&self) -> &HPolytope {
        &self.set
    }

    pub fn h_theta(&self) -> &DMatrix<f64> {
        self.set.h()
    }

    pub fn rhs(&self) -> &DVector<f64> {
        self.set.rhs()
    }

    pub fn n_rows(&self) -> usize {
        self.set.n_rows()
    }
}

/// Parameters not contradicted by the window: `{θ | H_Δ θ ≤ h_Δ}`.
#[derive(Clone, Debug, PartialEq)]
pub struct NonFalsifiedSet {
    pub set: HPolytope,
    pub window_len: usize,
}

/// Stacks `−H_w D_t θ ≤ h_w + H_w d_{t+1}` over the window.
pub fn build_nonfalsified(sys: &UncertainSystem, window: &[Transition]) -> Result<NonFalsifiedSet, IdentError> {
    if window.is_empty() {
        return Err(IdentError::EmptyWindow);
    }
    let hw = sys.w().h();
    let nw = hw.nrows();
    let mut h = DMatrix::zeros(nw * window.len(), sys.p());
    let mut rhs = DVector::zeros(nw * window.len());
    for (t, tr) in window.iter().enumerate() {
        let d = sys.regressor(&tr.x, &tr.u)?;
        let off = sys.offset(&tr.x, &tr.u, &tr.x_next)?;
        let rows = -(hw * d);
        let r = sys.w().rhs() + hw * off;
        h.view_mut((t * nw, 0), (nw, sys.p())).copy_from(&rows);
        rhs.rows_mut(t * nw, nw).copy_from(&r);
    }
    Ok(NonFalsifiedSet {
        set: HPolytope::new(h, rhs)?,
        window_len: window.len(),
    })
}

/// Tightest rhs for the fixed `H_θ` that still covers `Θ_{k−1} ∩ Δ_k`.
pub fn update_parameter_set(ps: &ParameterSet, delta: &NonFalsifiedSet) -> Result<ParameterSet, IdentError> {
    update_parameter_set_with(&RevisedSimplex::default(), ps, delta)
}

pub fn update_parameter_set_with(
    solver: &dyn LpSolver,
    ps: &ParameterSet,
    delta: &NonFalsifiedSet,
) -> Result<ParameterSet, IdentError> {
    let both = ps.set.intersect(&delta.set)?;
    let mut rhs = DVector::zeros(ps.n_rows());
    for i in 0..ps.n_rows() {
        rhs[i] = match polytope::support_with(solver, &both, &ps.set.row(i)) {
            Ok(v) => v.min(ps.set.rhs()[i]),
            Err(GeometryError::EmptySet) => return Err(IdentError::Falsified),
            Err(e) => return Err(e.into()),
        };
    }
    Ok(ParameterSet {
        set: HPolytope::new(ps.set.h().clone(), rhs)?,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointEstimate {
    pub theta_hat: DVector<f64>,
    /// Base LMS gain; the applied step is `mu / (1 + tr(DᵀD))`.
    pub mu: f64,
}

impl PointEstimate {
    pub fn new(theta_hat: DVector<f64>, mu: f64) -> Self {
        PointEstimate { theta_hat, mu }
    }
}

/// Normalized LMS step on the one-step prediction error followed by a
/// Euclidean projection onto the current parameter set.
pub fn lms_update(
    est: &PointEstimate,
    ps: &ParameterSet,
    sys: &UncertainSystem,
    x: &DVector<f64>,
    u: &DVector<f64>,
    x_next: &DVector<f64>,
) -> Result<PointEstimate, IdentError> {
    let d = sys.regressor(x, u)?;
    let (a, b) = sys.matrices_at(&est.theta_hat)?;
    let err = x_next - a * x - b * u;
    let step = est.mu / (1.0 + (d.transpose() * &d).trace());
    let raw = &est.theta_hat + d.transpose() * err * step;
    let theta_hat = project_polytope(&raw, ps.polytope(), 1e-12)?;
    Ok(PointEstimate { theta_hat, mu: est.mu })
}

pub const PROJECTION_MAX_SWEEPS: usize = 10_000;

/// Euclidean projection onto `P` by Dykstra's alternating halfspace
/// projections. Stops when a full sweep moves neither the iterate nor any
/// correction term by `tol` or more; the iterate alone can stall early.
pub fn project_polytope(x: &DVector<f64>, p: &HPolytope, tol: f64) -> Result<DVector<f64>, IdentError> {
    if x.len() != p.dim() {
        return Err(IdentError::DimensionMismatch("point and polytope dimensions differ"));
    }
    if polytope::contains(p, x, 0.0) {
        return Ok(x.clone());
    }
    let rows: Vec<(DVector<f64>, f64, f64)> = (0..p.n_rows())
        .map(|i| {
            let a = p.row(i);
            let nn = a.norm_squared();
            (a, p.rhs()[i], nn)
        })
        .filter(|(_, _, nn)| *nn > 0.0)
        .collect();
    let mut y = x.clone();
    let mut corr: Vec<DVector<f64>> = rows.iter().map(|_| DVector::zeros(x.len())).collect();
    for _ in 0..PROJECTION_MAX_SWEEPS {
        let start = y.clone();
        let mut moved: f64 = 0.0;
        for ((a, b, nn), c) in rows.iter().zip(corr.iter_mut()) {
            let yc = &y + &*c;
            let viol = a.dot(&yc) - b;
            let proj = if viol > 0.0 { &yc - a * (viol / nn) } else { yc.clone() };
            let next = yc - &proj;
            moved = moved.max((&next - &*c).amax());
            *c = next;
            y = proj;
        }
        moved = moved.max((&y - start).amax());
        if moved < tol && p.max_violation(&y) <= tol.max(1e-12) {
            return Ok(y);
        }
    }
    Err(IdentError::NumericalFailure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn projection_examples() {
        let ball = HPolytope::inf_ball(2, 1.0);
        assert_eq!(project_polytope(&v(&[0.2, 0.3]), &ball, 1e-12).unwrap(), v(&[0.2, 0.3]));
        let p = project_polytope(&v(&[2.0, 0.0]), &ball, 1e-12).unwrap();
        assert!((p - v(&[1.0, 0.0])).amax() < 1e-9);
        let p = project_polytope(&v(&[3.0, 2.0]), &ball, 1e-12).unwrap();
        assert!((p - v(&[1.0, 1.0])).amax() < 1e-9);
    }

    #[test]
    fn initial_directions() {
        let theta0 = HPolytope::inf_ball(2, 1.0);
        let ps = ParameterSet::initial(&theta0, 58, 0).unwrap();
        assert_eq!(ps.n_rows(), 58);
        assert!((ps.h_theta()[(0, 0)] - 1.0).abs() < 1e-15 && ps.h_theta()[(0, 1)].abs() < 1e-15);
        // support of the unit box along (cos φ, sin φ) is |cos φ| + |sin φ|
        for i in 0..58 {
            let (c, s) = (ps.h_theta()[(i, 0)], ps.h_theta()[(i, 1)]);
            assert!((ps.rhs()[i] - (c.abs() + s.abs())).abs() < 1e-9);
        }
        let same = ParameterSet::initial(&theta0, 4, 0).unwrap();
        assert_eq!(same.polytope(), &theta0);
        let ps3 = ParameterSet::initial(&HPolytope::inf_ball(3, 1.0), 20, 9).unwrap();
        assert_eq!(ps3, ParameterSet::initial(&HPolytope::inf_ball(3, 1.0), 20, 9).unwrap());
        assert!(ParameterSet::initial(&theta0, 2, 0).is_err());
    }

    #[test]
    fn window_is_bounded() {
        let mut w = MeasurementWindow::new(2);
        for i in 0..5 {
            w.push(Transition { x: v(&[i as f64]), u: v(&[0.0]), x_next: v(&[0.0]) });
        }
        let items = w.to_vec();
        assert_eq!(items.len(), 2);
        assert_eq!(items[0].x, v(&[3.0]));
        assert_eq!(vec![items[1].x[0]], vec![4.0]);
    }
}
