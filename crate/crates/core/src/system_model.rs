//! The uncertain linear plant `x⁺ = A(θ)x + B(θ)u + w` with `A(θ)`, `B(θ)`
//! affine in the parameter, and a ground-truth simulator for it.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::polytope::{self, GeometryError, HPolytope};
use rand_core::SeedableRng;

use crate::rng::{self, Stream};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
    #[error("disturbance sequence exhausted after {0} steps")]
    SequenceExhausted(usize),
    #[error("invalid model: {0}")]
    Invalid(&'static str),
    #[error("true parameter lies outside the admissible parameter set")]
    ParameterOutsideSet,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Clone, Debug)]
pub struct UncertainSystem {
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
    f: DMatrix<f64>,
    g: DMatrix<f64>,
    w: HPolytope,
    theta0: HPolytope,
}

impl UncertainSystem {
    /// `a_list[0]`, `b_list[0]` are the nominal matrices; entry `i ≥ 1` is the
    /// coefficient of `θ_i`. State/input constraints read `Fx + Gu ≤ 1`.
    pub fn new(
        a_list: Vec<DMatrix<f64>>,
        b_list: Vec<DMatrix<f64>>,
        f: DMatrix<f64>,
        g: DMatrix<f64>,
        w: HPolytope,
        theta0: HPolytope,
    ) -> Result<Self, ModelError> {
        if a_list.is_empty() || a_list.len() != b_list.len() {
            return Err(ModelError::DimensionMismatch("A and B lists must have equal nonzero length"));
        }
        let n = a_list[0].nrows();
        let m = b_list[0].ncols();
        if a_list.iter().any(|a| a.nrows() != n || a.ncols() != n) {
            return Err(ModelError::DimensionMismatch("A matrices must be n×n"));
        }
        if b_list.iter().any(|b| b.nrows() != n || b.ncols() != m) {
            return Err(ModelError::DimensionMismatch("B matrices must be n×m"));
        }
        if f.ncols() != n || g.ncols() != m || f.nrows() != g.nrows() {
            return Err(ModelError::DimensionMismatch("F must be n_c×n and G n_c×m"));
        }
        if w.dim() != n {
            return Err(ModelError::DimensionMismatch("disturbance set must live in the state space"));
        }
        if theta0.dim() != a_list.len() - 1 {
            return Err(ModelError::DimensionMismatch("parameter set dimension differs from p"));
        }
        let all_finite = a_list
            .iter()
            .chain(&b_list)
            .chain([&f, &g])
            .all(|mat| mat.iter().all(|v| v.is_finite()));
        if !all_finite {
            return Err(ModelError::Invalid("non-finite system coefficient"));
        }
        // both sets must be nonempty and bounded; the bounding box checks both
        bounding_box(&w)?;
        bounding_box(&theta0)?;
        Ok(UncertainSystem { a: a_list, b: b_list, f, g, w, theta0 })
    }

    pub fn n(&self) -> usize {
        self.a[0].nrows()
    }

    pub fn m(&self) -> usize {
        self.b[0].ncols()
    }

    pub fn p(&self) -> usize {
        self.a.len() - 1
    }

    pub fn n_c(&self) -> usize {
        self.f.nrows()
    }

    pub fn n_w(&self) -> usize {
        self.w.n_rows()
    }

    pub fn a(&self, i: usize) -> &DMatrix<f64> {
        &self.a[i]
    }

    pub fn b(&self, i: usize) -> &DMatrix<f64> {
        &self.b[i]
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn w(&self) -> &HPolytope {
        &self.w
    }

    pub fn theta0(&self) -> &HPolytope {
        &self.theta0
    }

    /// `(A(θ), B(θ))`.
    pub fn matrices_at(&self, theta: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>), ModelError> {
        if theta.len() != self.p() {
            return Err(ModelError::DimensionMismatch("parameter length differs from p"));
        }
        let mut a = self.a[0].clone();
        let mut b = self.b[0].clone();
        for i in 0..self.p() {
            a += &self.a[i + 1] * theta[i];
            b += &self.b[i + 1] * theta[i];
        }
        Ok((a, b))
    }

    /// `A_i + B_i K` for `i = 0..=p`.
    pub fn closed_loop_terms(&self, k: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        self.a.iter().zip(&self.b).map(|(a, b)| a + b * k).collect()
    }

    /// `A(θ) + B(θ) K`.
    pub fn closed_loop(&self, theta: &DVector<f64>, k: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
        let (a, b) = self.matrices_at(theta)?;
        Ok(a + b * k)
    }

    fn check_xu(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<(), ModelError> {
        if x.len() != self.n() || u.len() != self.m() {
            return Err(ModelError::DimensionMismatch("state or input length"));
        }
        Ok(())
    }

    /// `D(x,u)` whose column `i` is `A_i x + B_i u`, so that
    /// `A(θ)x + B(θ)u = A₀x + B₀u + D θ`.
    pub fn regressor(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DMatrix<f64>, ModelError> {
        self.check_xu(x, u)?;
        let mut d = DMatrix::zeros(self.n(), self.p());
        for i in 0..self.p() {
            d.set_column(i, &(&self.a[i + 1] * x + &self.b[i + 1] * u));
        }
        Ok(d)
    }

    /// `A₀x + B₀u − x_next`.
    pub fn offset(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        x_next: &DVector<f64>,
    ) -> Result<DVector<f64>, ModelError> {
        self.check_xu(x, u)?;
        if x_next.len() != self.n() {
            return Err(ModelError::DimensionMismatch("successor state length"));
        }
        Ok(&self.a[0] * x + &self.b[0] * u - x_next)
    }

    /// `max_i [Fx + Gu]_i − 1`; nonpositive when the pair is admissible.
    pub fn constraint_violation(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let r = &self.f * x + &self.g * u;
        r.iter().map(|v| v - 1.0).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Componentwise bounds `(lo, hi)` of a polytope.
pub fn bounding_box(p: &HPolytope) -> Result<(DVector<f64>, DVector<f64>), GeometryError> {
    let n = p.dim();
    let mut lo = DVector::zeros(n);
    let mut hi = DVector::zeros(n);
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        hi[i] = polytope::support(p, &e)?;
        e[i] = -1.0;
        lo[i] = -polytope::support(p, &e)?;
    }
    Ok((lo, hi))
}

/// How the simulator draws `w_k`.
#[derive(Clone, Debug)]
pub enum DisturbanceLaw {
    /// Uniform on 𝕎: per-coordinate inverse CDF on the bounding box, with
    /// rejection when 𝕎 is not itself that box.
    UniformOnW { seed: u64 },
    /// Replays a fixed list, one entry per step.
    Sequence(Vec<DVector<f64>>),
}

#[derive(Clone, Debug)]
pub struct TruthModel {
    theta_star: DVector<f64>,
    law: DisturbanceLaw,
    sampler: Option<(Stream, DVector<f64>, DVector<f64>)>,
    steps: usize,
}

impl TruthModel {
    pub fn new(sys: &UncertainSystem, theta_star: DVector<f64>, law: DisturbanceLaw) -> Result<Self, ModelError> {
        if theta_star.len() != sys.p() {
            return Err(ModelError::DimensionMismatch("true parameter length differs from p"));
        }
        if !polytope::contains(sys.theta0(), &theta_star, 1e-9) {
            return Err(ModelError::ParameterOutsideSet);
        }
        let sampler = match &law {
            DisturbanceLaw::UniformOnW { seed } => {
                let (lo, hi) = bounding_box(sys.w())?;
                Some((Stream::seed_from_u64(*seed), lo, hi))
            }
            DisturbanceLaw::Sequence(ws) => {
                if ws.iter().any(|w| w.len() != sys.n()) {
                    return Err(ModelError::DimensionMismatch("disturbance sequence entry length"));
                }
                None
            }
        };
        Ok(TruthModel { theta_star, law, sampler, steps: 0 })
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        &self.theta_star
    }

    pub fn law(&self) -> &DisturbanceLaw {
        &self.law
    }

    fn draw(&mut self, w_set: &HPolytope) -> Result<DVector<f64>, ModelError> {
        match (&self.law, &mut self.sampler) {
            (DisturbanceLaw::Sequence(ws), _) => {
                ws.get(self.steps).cloned().ok_or(ModelError::SequenceExhausted(ws.len()))
            }
            (DisturbanceLaw::UniformOnW { .. }, Some((stream, lo, hi))) => loop {
                let w = DVector::from_fn(lo.len(), |i, _| rng::uniform(stream, lo[i], hi[i]));
                if polytope::contains(w_set, &w, 0.0) {
                    return Ok(w);
                }
            },
            (DisturbanceLaw::UniformOnW { .. }, None) => Err(ModelError::Invalid("sampler not initialised")),
        }
    }
}

/// Advances the true plant one step and returns `(x_next, w)`.
pub fn step_truth(
    sys: &UncertainSystem,
    truth: &mut TruthModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>), ModelError> {
    sys.check_xu(x, u)?;
    let (a, b) = sys.matrices_at(&truth.theta_star)?;
    let w = truth.draw(sys.w())?;
    truth.steps += 1;
    Ok((a * x + b * u + &w, w))
}
