//! Homothetic state tubes `{z_l} ⊕ α_l 𝕏₀` and their robust constraints.
//!
//! Offline quantities (constraint tightening `f̄`, disturbance support `w̄`,
//! terminal scaling `ᾱ`) live in [`TubeConfig`]; [`robust_blocks`] emits the
//! linear rows that keep every tube vertex admissible and every successor
//! cross-section inside the next one for all parameters in the current set.

mod block;
mod layout;

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

pub use block::{Bilinear, BlockRow, ConstraintBlock, Linearize, RowKind};
pub use layout::VarLayout;

use crate::lp_backend::Sense;
use crate::polytope::{self, GeometryError, HPolytope};
use crate::rng;
use crate::set_membership::ParameterSet;
use crate::system_model::{bounding_box, ModelError, UncertainSystem};

const SHAPE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum TubeError {
    #[error("invalid tube shape: {0}")]
    InvalidShape(&'static str),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
    #[error("prestabilizing gain fails the stability check (spectral radius {})", .0.max_radius)]
    UnstableGain(GainReport),
    #[error("no scaling of the tube shape is invariant under the disturbance")]
    NoTerminalSet,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// The normalized tube shape `𝕏₀ = {x | H_x x ≤ 1}` and its vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct TubeShape {
    hx: DMatrix<f64>,
    vertices: Vec<DVector<f64>>,
}

impl TubeShape {
    /// Accepts `{x | H x ≤ h}` with `h > 0` plus its vertex list. Rows are
    /// rescaled to unit rhs, and the vertices must lie in the set, be extreme
    /// points, and attain support 1 along every row.
    pub fn new(set: &HPolytope, vertices: Vec<DVector<f64>>) -> Result<Self, TubeError> {
        let n = set.dim();
        if vertices.is_empty() || vertices.iter().any(|v| v.len() != n) {
            return Err(TubeError::InvalidShape("vertex list empty or of wrong dimension"));
        }
        if set.rhs().iter().any(|h| *h <= 0.0) {
            return Err(TubeError::InvalidShape("origin must lie in the interior"));
        }
        let mut hx = set.h().clone();
        for i in 0..hx.nrows() {
            let h = set.rhs()[i];
            hx.row_mut(i).scale_mut(1.0 / h);
        }
        for v in &vertices {
            let s = &hx * v;
            if s.iter().any(|x| *x > 1.0 + SHAPE_TOL) {
                return Err(TubeError::InvalidShape("vertex outside the halfspace description"));
            }
            let tight: Vec<usize> = (0..hx.nrows()).filter(|&i| (s[i] - 1.0).abs() <= SHAPE_TOL).collect();
            let active = DMatrix::from_fn(tight.len(), n, |i, j| hx[(tight[i], j)]);
            if tight.len() < n || active.rank(1e-9) < n {
                return Err(TubeError::InvalidShape("listed vertex is not an extreme point"));
            }
        }
        for i in 0..hx.nrows() {
            let vmax = vertices.iter().map(|v| hx.row(i).dot(&v.transpose())).fold(f64::NEG_INFINITY, f64::max);
            let lp_max = polytope::support(&HPolytope::new(hx.clone(), DVector::from_element(hx.nrows(), 1.0))?, &hx.row(i).transpose())?;
            if (vmax - 1.0).abs() > SHAPE_TOL || (lp_max - 1.0).abs() > SHAPE_TOL {
                return Err(TubeError::InvalidShape("vertices do not span the halfspace description"));
            }
        }
        Ok(TubeShape { hx, vertices })
    }

    pub fn hx(&self) -> &DMatrix<f64> {
        &self.hx
    }

    pub fn vertices(&self) -> &[DVector<f64>] {
        &self.vertices
    }

    pub fn n_x(&self) -> usize {
        self.hx.nrows()
    }

    pub fn dim(&self) -> usize {
        self.hx.ncols()
    }

    pub fn polytope(&self) -> HPolytope {
        HPolytope::new(self.hx.clone(), DVector::from_element(self.n_x(), 1.0)).expect("finite by construction")
    }
}

/// Everything the online tube constraints need.
#[derive(Clone, Debug, PartialEq)]
pub struct TubeConfig {
    pub shape: TubeShape,
    pub k: DMatrix<f64>,
    pub horizon: usize,
    pub f_bar: DVector<f64>,
    pub w_bar: DVector<f64>,
    pub alpha_bar: f64,
}

impl TubeConfig {
    pub fn new(
        sys: &UncertainSystem,
        shape: TubeShape,
        k: DMatrix<f64>,
        horizon: usize,
        alpha_bar: f64,
    ) -> Result<Self, TubeError> {
        check_gain(sys, &k)?;
        if shape.dim() != sys.n() {
            return Err(TubeError::DimensionMismatch("tube shape dimension differs from n"));
        }
        if horizon == 0 {
            return Err(TubeError::DimensionMismatch("horizon must be at least one step"));
        }
        if !(alpha_bar >= 0.0) {
            return Err(TubeError::InvalidShape("terminal scaling must be nonnegative"));
        }
        let (f_bar, w_bar) = compute_offline(sys, &shape, &k)?;
        Ok(TubeConfig { shape, k, horizon, f_bar, w_bar, alpha_bar })
    }
}

fn check_gain(sys: &UncertainSystem, k: &DMatrix<f64>) -> Result<(), TubeError> {
    if k.nrows() != sys.m() || k.ncols() != sys.n() {
        return Err(TubeError::DimensionMismatch("gain must be m×n"));
    }
    Ok(())
}

/// `[f̄]_i = max_j [F + GK]_i x^j` and `[w̄]_r = max_{w∈𝕎} [H_x]_r w`.
pub fn compute_offline(
    sys: &UncertainSystem,
    shape: &TubeShape,
    k: &DMatrix<f64>,
) -> Result<(DVector<f64>, DVector<f64>), TubeError> {
    check_gain(sys, k)?;
    let fk = sys.f() + sys.g() * k;
    // Support of the normalized shape along each row of F+GK, by LP on the
    // halfspace form; the vertex list is only used for validation.
    let set = shape.polytope();
    let f_bar = DVector::from_iterator(
        fk.nrows(),
        (0..fk.nrows())
            .map(|i| polytope::support(&set, &fk.row(i).transpose()))
            .collect::<Result<Vec<_>, _>>()?,
    );
    let w_bar = DVector::from_iterator(
        shape.n_x(),
        (0..shape.n_x())
            .map(|r| polytope::support(sys.w(), &shape.hx.row(r).transpose()))
            .collect::<Result<Vec<_>, _>>()?,
    );
    Ok((f_bar, w_bar))
}

/// Extreme points of a parameter set: exact polygon vertices for two
/// parameters, bounding-box corners (a superset, hence conservative for
/// affine checks) otherwise. The flag is `true` when exact.
pub fn parameter_vertices(theta: &HPolytope) -> Result<(Vec<DVector<f64>>, bool), TubeError> {
    if theta.dim() == 2 {
        return Ok((polytope::vertices_2d(theta)?.as_vectors(), true));
    }
    let (lo, hi) = bounding_box(theta)?;
    let p = theta.dim();
    let corners = (0..1usize << p)
        .map(|mask| DVector::from_fn(p, |i, _| if mask >> i & 1 == 1 { hi[i] } else { lo[i] }))
        .collect();
    Ok((corners, p == 1))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GainReport {
    pub max_radius: f64,
    pub worst_theta: DVector<f64>,
    pub vertices_checked: usize,
    pub samples_checked: usize,
    /// Vertex enumeration used exact parameter-set vertices (two parameters
    /// or one); otherwise only random samples were tried.
    pub exact_vertices: bool,
}

impl GainReport {
    pub fn passed(&self) -> bool {
        self.max_radius < 1.0
    }
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|c| libm::hypot(c.re, c.im)).fold(0.0, f64::max)
}

/// Checks `ρ(A(θ) + B(θ)K) < 1` at the parameter-set vertices and at
/// `samples` random parameters drawn uniformly from it. Passing is necessary,
/// not sufficient, for robust stability.
pub fn verify_gain(
    sys: &UncertainSystem,
    k: &DMatrix<f64>,
    samples: usize,
    seed: u64,
) -> Result<GainReport, TubeError> {
    check_gain(sys, k)?;
    let (verts, exact) = parameter_vertices(sys.theta0())?;
    let mut report = GainReport {
        max_radius: f64::NEG_INFINITY,
        worst_theta: DVector::zeros(sys.p()),
        vertices_checked: 0,
        samples_checked: 0,
        exact_vertices: exact,
    };
    let check = |theta: &DVector<f64>, report: &mut GainReport| -> Result<(), TubeError> {
        let rho = spectral_radius(&sys.closed_loop(theta, k)?);
        if rho > report.max_radius {
            report.max_radius = rho;
            report.worst_theta = theta.clone();
        }
        Ok(())
    };
    if exact {
        for th in &verts {
            check(th, &mut report)?;
            report.vertices_checked += 1;
        }
    }
    let (lo, hi) = bounding_box(sys.theta0())?;
    let mut stream = rng::substream(seed, "gain-samples");
    let mut tries = 0usize;
    while report.samples_checked < samples && tries < samples.saturating_mul(1000) {
        tries += 1;
        let th = DVector::from_fn(sys.p(), |i, _| rng::uniform(&mut stream, lo[i], hi[i]));
        if polytope::contains(sys.theta0(), &th, 0.0) {
            check(&th, &mut report)?;
            report.samples_checked += 1;
        }
    }
    if report.vertices_checked + report.samples_checked == 0 {
        report.max_radius = spectral_radius(&sys.closed_loop(&DVector::zeros(sys.p()), k)?);
    }
    if report.passed() {
        Ok(report)
    } else {
        Err(TubeError::UnstableGain(report))
    }
}

/// Worst-case terminal slack `min (ᾱ·1 − H_x A_cl(θ) ᾱ x^j − w̄)` over
/// parameter vertices and shape vertices.
fn invariance_slack(hx_acl_x: &[DVector<f64>], w_bar: &DVector<f64>, alpha: f64) -> f64 {
    let mut slack = f64::INFINITY;
    for s in hx_acl_x {
        for r in 0..s.len() {
            slack = slack.min(alpha - alpha * s[r] - w_bar[r]);
        }
    }
    slack
}

/// Largest `ᾱ` on a bisection grid of resolution `tol` such that
/// `A_cl(θ)(ᾱ𝕏₀) ⊕ 𝕎 ⊆ ᾱ𝕏₀` for all `θ ∈ Θ` (within `tol`) and
/// `(F + GK)ᾱx^j ≤ 1` for every shape vertex.
///
/// Invariance is only imposed at `α⁺ = ᾱ`: for `0 ≤ α < ᾱ`,
/// `A_cl(α𝕏₀) ⊕ 𝕎 ⊆ (α/ᾱ)[A_cl(ᾱ𝕏₀) ⊕ 𝕎] ⊕ (1 − α/ᾱ)𝕎` because `0 ∈ 𝕎`,
/// and both bracketed pieces lie in `ᾱ𝕏₀`. Only vertices of `Θ` are checked
/// since `A_cl(θ)x` is affine in `θ`. Returns 0 when admissibility caps the
/// scaling below what invariance needs.
pub fn compute_terminal_alpha(
    sys: &UncertainSystem,
    shape: &TubeShape,
    k: &DMatrix<f64>,
    tol: f64,
) -> Result<f64, TubeError> {
    check_gain(sys, k)?;
    let tol = if tol > 0.0 { tol } else { 1e-3 };
    let (f_bar, w_bar) = compute_offline(sys, shape, k)?;
    let (thetas, _) = parameter_vertices(sys.theta0())?;
    let mut hx_acl_x = Vec::new();
    for th in &thetas {
        let acl = sys.closed_loop(th, k)?;
        for xj in shape.vertices() {
            hx_acl_x.push(shape.hx() * (&acl * xj));
        }
    }
    let admissible = |alpha: f64| f_bar.iter().all(|f| alpha * f <= 1.0);

    const CAP: f64 = 1e6;
    let mut hi = 1.0;
    while admissible(hi) && hi < CAP {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    if admissible(hi) {
        lo = hi;
    } else {
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if admissible(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    if invariance_slack(&hx_acl_x, &w_bar, lo) >= -tol {
        return Ok(lo);
    }
    // Invariance needs a larger scaling than admissibility allows, or none
    // exists at all (some row of H_x A_cl x^j reaches 1).
    let grows = hx_acl_x.iter().all(|s| s.iter().all(|v| *v < 1.0));
    if grows && invariance_slack(&hx_acl_x, &w_bar, CAP) >= -tol {
        Ok(0.0)
    } else {
        Err(TubeError::NoTerminalSet)
    }
}

/// Checks the terminal inequality at `alpha` for every parameter vertex and
/// shape vertex; returns the worst slack.
pub fn terminal_slack(
    sys: &UncertainSystem,
    tube: &TubeConfig,
    alpha: f64,
) -> Result<f64, TubeError> {
    let (thetas, _) = parameter_vertices(sys.theta0())?;
    let mut pts = Vec::new();
    for th in &thetas {
        let acl = sys.closed_loop(th, &tube.k)?;
        for xj in tube.shape.vertices() {
            pts.push(tube.shape.hx() * (&acl * xj));
        }
    }
    Ok(invariance_slack(&pts, &tube.w_bar, alpha))
}

/// Precomputed products shared by the robust and predicted blocks.
pub(crate) struct TubeTerms {
    /// `H_x (A_c + B_c K)` and `H_x B_c` for `c = 0..=p`.
    pub hx_acl: Vec<DMatrix<f64>>,
    pub hx_b: Vec<DMatrix<f64>>,
    /// `H_x (A_c + B_c K) x^j`, indexed `[c][j]`.
    pub hx_acl_x: Vec<Vec<DVector<f64>>>,
}

impl TubeTerms {
    pub fn new(sys: &UncertainSystem, tube: &TubeConfig) -> Self {
        let hx = tube.shape.hx();
        let acl = sys.closed_loop_terms(&tube.k);
        let hx_acl: Vec<DMatrix<f64>> = acl.iter().map(|a| hx * a).collect();
        let hx_b = (0..=sys.p()).map(|c| hx * sys.b(c)).collect();
        let hx_acl_x = hx_acl
            .iter()
            .map(|m| tube.shape.vertices().iter().map(|x| m * x).collect())
            .collect();
        TubeTerms { hx_acl, hx_b, hx_acl_x }
    }
}

/// Multiplier rows used by default: every row of the parameter set.
pub fn all_rows(ps: &ParameterSet) -> Vec<usize> {
    (0..ps.n_rows()).collect()
}

/// Push `Σ_k coefs[k]·x[col(k)]` entries of a dense row into `out`.
pub(crate) fn push_dense(out: &mut Vec<(usize, f64)>, first_col: usize, coefs: impl Iterator<Item = f64>) {
    for (k, c) in coefs.enumerate() {
        if c != 0.0 {
            out.push((first_col + k, c));
        }
    }
}

/// Robust tube constraints over `layout` for measured state `x_k`: stage
/// admissibility, initial containment, successor inclusion via multipliers
/// `Λ ≥ 0`, and the terminal conditions `z_N = 0`, `0 ≤ α_N ≤ ᾱ`.
pub fn robust_blocks(
    sys: &UncertainSystem,
    tube: &TubeConfig,
    ps: &ParameterSet,
    x_k: &DVector<f64>,
    layout: &VarLayout,
) -> Result<ConstraintBlock, TubeError> {
    let (n, m, nn) = (sys.n(), sys.m(), tube.horizon);
    let nv = tube.shape.vertices().len();
    let nx = tube.shape.n_x();
    if layout.n != n || layout.m != m || layout.horizon != nn || layout.n_vertices != nv || layout.n_x != nx {
        return Err(TubeError::DimensionMismatch("layout does not match the tube"));
    }
    if x_k.len() != n {
        return Err(TubeError::DimensionMismatch("state length"));
    }
    if layout.theta_rows.iter().any(|&r| r >= ps.n_rows()) {
        return Err(TubeError::DimensionMismatch("multiplier row outside the parameter set"));
    }
    let terms = TubeTerms::new(sys, tube);
    let hx = tube.shape.hx();
    let fk = sys.f() + sys.g() * &tube.k;
    let h_theta = ps.h_theta();
    let h_rhs = ps.rhs();
    let mut blk = ConstraintBlock::new();

    for l in 0..nn {
        for i in 0..sys.n_c() {
            let mut row = Vec::with_capacity(n + m + 1);
            push_dense(&mut row, layout.z(l, 0), fk.row(i).iter().copied());
            row.push((layout.alpha(l), tube.f_bar[i]));
            push_dense(&mut row, layout.v(l, 0), sys.g().row(i).iter().copied());
            blk.push(RowKind::StateInput { l }, row, Sense::Le, 1.0);
        }
    }

    let hx_xk = hx * x_k;
    for r in 0..nx {
        let mut row = Vec::with_capacity(n + 1);
        push_dense(&mut row, layout.z(0, 0), hx.row(r).iter().map(|v| -v));
        row.push((layout.alpha(0), -1.0));
        blk.push(RowKind::Initial, row, Sense::Le, -hx_xk[r]);
    }

    let nt = layout.n_theta();
    for l in 0..nn {
        for j in 0..nv {
            for r in 0..nx {
                let mut row = Vec::with_capacity(nt + 2 * n + m + 2);
                for (s, &tr) in layout.theta_rows.iter().enumerate() {
                    row.push((layout.lambda(l, j, r, s), h_rhs[tr]));
                }
                push_dense(&mut row, layout.z(l, 0), terms.hx_acl[0].row(r).iter().copied());
                row.push((layout.alpha(l), terms.hx_acl_x[0][j][r]));
                push_dense(&mut row, layout.v(l, 0), terms.hx_b[0].row(r).iter().copied());
                push_dense(&mut row, layout.z(l + 1, 0), hx.row(r).iter().map(|v| -v));
                row.push((layout.alpha(l + 1), -1.0));
                row.retain(|&(_, c)| c != 0.0);
                blk.push(RowKind::Inclusion { l, j, r }, row, Sense::Le, -tube.w_bar[r]);

                for c in 0..sys.p() {
                    let mut row = Vec::with_capacity(nt + n + m + 1);
                    for (s, &tr) in layout.theta_rows.iter().enumerate() {
                        let h = h_theta[(tr, c)];
                        if h != 0.0 {
                            row.push((layout.lambda(l, j, r, s), h));
                        }
                    }
                    push_dense(&mut row, layout.z(l, 0), terms.hx_acl[c + 1].row(r).iter().map(|v| -v));
                    let ax = terms.hx_acl_x[c + 1][j][r];
                    if ax != 0.0 {
                        row.push((layout.alpha(l), -ax));
                    }
                    push_dense(&mut row, layout.v(l, 0), terms.hx_b[c + 1].row(r).iter().map(|v| -v));
                    blk.push(RowKind::Multiplier { l, j, r, c }, row, Sense::Eq, 0.0);
                }
            }
        }
    }

    for l in 0..=nn {
        blk.bound(layout.alpha(l), 0.0, f64::INFINITY);
    }
    blk.bound(layout.alpha(nn), 0.0, tube.alpha_bar);
    for i in 0..n {
        blk.bound(layout.z(nn, i), 0.0, 0.0);
    }
    for c in layout.lambda_range() {
        blk.bound(c, 0.0, f64::INFINITY);
    }
    Ok(blk)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn shape_validation() {
        let ball = HPolytope::inf_ball(2, 2.0);
        let verts = |r: f64| {
            vec![
                DVector::from_column_slice(&[r, r]),
                DVector::from_column_slice(&[-r, r]),
                DVector::from_column_slice(&[-r, -r]),
                DVector::from_column_slice(&[r, -r]),
            ]
        };
        let shape = TubeShape::new(&ball, verts(2.0)).unwrap();
        assert!((shape.hx()[(0, 0)] - 0.5).abs() < 1e-15);
        assert!(TubeShape::new(&ball, verts(1.0)).is_err());
        assert!(TubeShape::new(&ball, verts(3.0)).is_err());
        let mut v = verts(2.0);
        v.push(DVector::from_column_slice(&[2.0, 0.0]));
        assert!(TubeShape::new(&ball, v).is_err());
    }

    #[test]
    fn spectral_radius_of_rotation_and_scaling() {
        let r = DMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        assert!((spectral_radius(&r) - 0.5).abs() < 1e-12);
        let d = DMatrix::from_row_slice(2, 2, &[0.3, 1.0, 0.0, -0.9]);
        assert!((spectral_radius(&d) - 0.9).abs() < 1e-12);
    }
}
