//! Brute-force references shared by the property tests and the acceptance
//! target. Random instances are drawn from a seeded stream so that both
//! callers see identical cases for a given seed.

#![allow(dead_code)]

use dampc_core::lp_backend::{LinearProgram, LpOutcome, LpStatus, Sense};
use dampc_core::polytope::{self, HPolytope};
use dampc_core::rng::{self, Stream};
use dampc_core::robust_tube::{all_rows, robust_blocks, Linearize, TubeConfig, TubeShape, VarLayout};
use dampc_core::dual_mpc::{predicted_blocks, predicted_set_at, PredictedParameterForm};
use dampc_core::set_membership::{
    build_nonfalsified, update_parameter_set, ParameterSet, PointEstimate, Transition,
};
use dampc_core::system_model::UncertainSystem;
use nalgebra::{DMatrix, DVector};

fn u(s: &mut Stream, lo: f64, hi: f64) -> f64 {
    rng::uniform(s, lo, hi)
}

fn rand_mat(s: &mut Stream, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| u(s, -scale, scale))
}

// ---------------------------------------------------------------- LP

/// A feasible LP with at most eight variables that is bounded either by
/// finite variable bounds or by explicit box rows.
pub fn random_lp(seed: u64) -> LinearProgram {
    let mut s = rng::substream(seed, "lp-instance");
    let n = 1 + (u(&mut s, 0.0, 8.0) as usize).min(7);
    let m = (u(&mut s, 0.0, 10.0) as usize).min(9);
    let x0: Vec<f64> = (0..n).map(|_| u(&mut s, -2.0, 2.0)).collect();
    let mut lp = LinearProgram::new((0..n).map(|_| u(&mut s, -3.0, 3.0)).collect());
    for _ in 0..m {
        let row: Vec<f64> = (0..n)
            .map(|_| if u(&mut s, 0.0, 1.0) < 0.3 { 0.0 } else { u(&mut s, -2.0, 2.0) })
            .collect();
        let ax: f64 = row.iter().zip(&x0).map(|(a, x)| a * x).sum();
        let kind = u(&mut s, 0.0, 1.0);
        let (sense, rhs) = if kind < 0.6 {
            (Sense::Le, ax + u(&mut s, 0.0, 1.0))
        } else if kind < 0.85 {
            (Sense::Ge, ax - u(&mut s, 0.0, 1.0))
        } else {
            (Sense::Eq, ax)
        };
        lp.add_row(row.into_iter().enumerate().filter(|(_, a)| *a != 0.0), sense, rhs);
    }
    let boxed_by_rows = u(&mut s, 0.0, 1.0) < 0.5;
    for j in 0..n {
        let lo = x0[j] - u(&mut s, 0.1, 3.0);
        let hi = x0[j] + u(&mut s, 0.1, 3.0);
        if boxed_by_rows {
            lp.add_row([(j, 1.0)], Sense::Le, hi);
            lp.add_row([(j, 1.0)], Sense::Ge, lo);
        } else {
            lp.set_bounds(j, lo, hi);
        }
    }
    lp
}

/// Checks an optimality certificate assembled from the reported duals:
/// primal feasibility, sign-correct duals, reduced costs consistent with the
/// bounds, and equal primal and dual values.
pub fn duality_gap(lp: &LinearProgram, out: &LpOutcome) -> Result<f64, String> {
    if out.status != LpStatus::Optimal {
        return Err(format!("status {:?}", out.status));
    }
    let viol = lp.max_violation(&out.point);
    if viol > 1e-7 {
        return Err(format!("primal violation {viol}"));
    }
    let y = &out.duals;
    if y.len() != lp.rows.len() {
        return Err("dual length".into());
    }
    for (i, (&yi, sense)) in y.iter().zip(&lp.senses).enumerate() {
        let bad = match sense {
            Sense::Le => yi < -1e-7,
            Sense::Ge => yi > 1e-7,
            Sense::Eq => false,
        };
        if bad {
            return Err(format!("dual sign on row {i}: {yi}"));
        }
    }
    let n = lp.objective.len();
    let mut d = lp.objective.clone();
    for (row, &yi) in lp.rows.iter().zip(y) {
        for &(j, a) in row {
            d[j] -= a * yi;
        }
    }
    let mut dual_value: f64 = lp.rhs.iter().zip(y).map(|(b, yi)| b * yi).sum();
    for j in 0..n {
        if d[j] > 1e-7 {
            if !lp.upper[j].is_finite() {
                return Err(format!("reduced cost {} on variable {j} without upper bound", d[j]));
            }
            dual_value += d[j] * lp.upper[j];
        } else if d[j] < -1e-7 {
            if !lp.lower[j].is_finite() {
                return Err(format!("reduced cost {} on variable {j} without lower bound", d[j]));
            }
            dual_value += d[j] * lp.lower[j];
        }
    }
    let gap = (dual_value - out.value).abs();
    if gap > 1e-6 * (1.0 + out.value.abs()) {
        return Err(format!("primal {} dual {dual_value}", out.value));
    }
    Ok(gap)
}

// ---------------------------------------------------------- tube oracles

pub fn unit_box_shape() -> TubeShape {
    TubeShape::new(
        &HPolytope::inf_ball(2, 1.0),
        vec![
            DVector::from_column_slice(&[1.0, 1.0]),
            DVector::from_column_slice(&[-1.0, 1.0]),
            DVector::from_column_slice(&[-1.0, -1.0]),
            DVector::from_column_slice(&[1.0, -1.0]),
        ],
    )
    .unwrap()
}

/// Polytope in `p ∈ {1, 2}` dimensions with at most eight rows containing
/// the origin in its interior.
pub fn random_parameter_polytope(s: &mut Stream, p: usize) -> HPolytope {
    if p == 1 {
        let h = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        return HPolytope::new(h, DVector::from_column_slice(&[u(s, 0.2, 1.5), u(s, 0.2, 1.5)])).unwrap();
    }
    let rows = 3 + (u(s, 0.0, 6.0) as usize).min(5);
    let off = u(s, 0.0, core::f64::consts::TAU);
    let mut h = DMatrix::zeros(rows, 2);
    let mut rhs = DVector::zeros(rows);
    for i in 0..rows {
        let ang = off + core::f64::consts::TAU * (i as f64 + u(s, -0.2, 0.2)) / rows as f64;
        h[(i, 0)] = ang.cos();
        h[(i, 1)] = ang.sin();
        rhs[i] = u(s, 0.3, 1.5);
    }
    HPolytope::new(h, rhs).unwrap()
}

/// Exact vertices in one or two dimensions.
pub fn polytope_vertices(p: &HPolytope) -> Vec<DVector<f64>> {
    if p.dim() == 1 {
        let e = DVector::from_element(1, 1.0);
        let hi = polytope::support(p, &e).unwrap();
        let lo = -polytope::support(p, &(-e)).unwrap();
        return vec![DVector::from_element(1, lo), DVector::from_element(1, hi)];
    }
    polytope::vertices_2d(p).unwrap().as_vectors()
}

/// A small uncertain system with `n = m = 2` and the given parameter count.
pub fn random_system(s: &mut Stream, p: usize) -> UncertainSystem {
    let a: Vec<_> = (0..=p).map(|i| rand_mat(s, 2, 2, if i == 0 { 0.8 } else { 0.2 })).collect();
    let b: Vec<_> = (0..=p).map(|i| rand_mat(s, 2, 2, if i == 0 { 0.8 } else { 0.2 })).collect();
    // loose constraints: the oracles test inclusion, not admissibility
    let f = DMatrix::from_row_slice(2, 2, &[1e-3, 0.0, 0.0, 1e-3]);
    let g = DMatrix::zeros(2, 2);
    let w = HPolytope::inf_ball(2, u(s, 0.01, 0.2));
    let theta = random_parameter_polytope(s, p);
    UncertainSystem::new(a, b, f, g, w, theta).unwrap()
}

/// Largest `[H_x]_r(A(θ)x^j + B(θ)u^j − z⁺) + w̄_r` over the given parameter
/// vertices and tube-cross vertices; the successor scaling must be at least
/// this for the one-step inclusion to hold.
pub fn inclusion_threshold(
    sys: &UncertainSystem,
    tube: &TubeConfig,
    thetas: &[DVector<f64>],
    z: &DVector<f64>,
    alpha: f64,
    v: &DVector<f64>,
    z_next: &DVector<f64>,
) -> f64 {
    let hx = tube.shape.hx();
    let mut worst = f64::NEG_INFINITY;
    for th in thetas {
        let (a, b) = sys.matrices_at(th).unwrap();
        for xj in tube.shape.vertices() {
            let x = z + xj * alpha;
            let uu = &tube.k * &x + v;
            let r = hx * (&a * &x + &b * &uu - z_next) + &tube.w_bar;
            worst = worst.max(r.max());
        }
    }
    worst
}

/// Outcome of one multiplier-versus-vertex comparison.
#[derive(Debug)]
pub struct OracleCase {
    pub multiplier_feasible: bool,
    pub vertex_feasible: bool,
    pub margin: f64,
}

fn fix(blk: &mut dampc_core::robust_tube::ConstraintBlock, col: usize, val: f64) {
    blk.bound(col, val, val);
}

fn block_feasible(blk: &dampc_core::robust_tube::ConstraintBlock, total: usize, how: Linearize<'_>) -> bool {
    let lp = blk.to_lp(vec![0.0; total], how).expect("linear once inputs are fixed");
    let out = dampc_core::lp_backend::solve_lp(&lp).unwrap();
    match out.status {
        LpStatus::Optimal => true,
        LpStatus::Infeasible => false,
        s => panic!("unexpected LP status {s:?}"),
    }
}

/// Robust one-step inclusion with fixed tube variables: multiplier rows
/// feasible versus the successor scaling clearing the vertex threshold.
pub fn robust_inclusion_case(seed: u64) -> OracleCase {
    let mut s = rng::substream(seed, "robust-inclusion");
    let p = if u(&mut s, 0.0, 1.0) < 0.5 { 1 } else { 2 };
    let sys = random_system(&mut s, p);
    let k = rand_mat(&mut s, 2, 2, 0.3);
    let tube = TubeConfig::new(&sys, unit_box_shape(), k, 1, 1e6).unwrap();
    let ps = ParameterSet::new(sys.theta0().clone());
    let z0 = DVector::from_fn(2, |_, _| u(&mut s, -1.0, 1.0));
    let a0 = u(&mut s, 0.0, 1.0);
    let v0 = DVector::from_fn(2, |_, _| u(&mut s, -1.0, 1.0));
    let z1 = DVector::zeros(2);
    let thetas = polytope_vertices(sys.theta0());
    let need = inclusion_threshold(&sys, &tube, &thetas, &z0, a0, &v0, &z1);
    let delta = u(&mut s, 1e-4, 0.05) * if u(&mut s, 0.0, 1.0) < 0.5 { -1.0 } else { 1.0 };
    let a1 = (need + delta).max(0.0);

    let layout = VarLayout::new(2, 2, 1, 0, 4, 4, sys.n_w(), all_rows(&ps));
    let mut blk = robust_blocks(&sys, &tube, &ps, &z0, &layout).unwrap();
    for i in 0..2 {
        fix(&mut blk, layout.z(0, i), z0[i]);
        fix(&mut blk, layout.v(0, i), v0[i]);
    }
    fix(&mut blk, layout.alpha(0), a0);
    fix(&mut blk, layout.alpha(1), a1);
    OracleCase {
        multiplier_feasible: block_feasible(&blk, layout.total(), Linearize::None),
        vertex_feasible: a1 >= need,
        margin: (a1 - need).abs(),
    }
}

/// Predicted one-step inclusion at a fixed first input, robust to the
/// input-dependent parameter set.
pub fn predicted_inclusion_case(seed: u64) -> OracleCase {
    let mut s = rng::substream(seed, "predicted-inclusion");
    let p = if u(&mut s, 0.0, 1.0) < 0.5 { 1 } else { 2 };
    let sys = random_system(&mut s, p);
    let k = rand_mat(&mut s, 2, 2, 0.3);
    let tube = TubeConfig::new(&sys, unit_box_shape(), k, 1, 1e6).unwrap();
    let ps = ParameterSet::new(sys.theta0().clone());
    let verts = polytope_vertices(sys.theta0());
    // a convex combination of vertices lies inside the set
    let mut theta_hat = DVector::zeros(p);
    let mut wsum = 0.0;
    for vtx in &verts {
        let wt = u(&mut s, 0.0, 1.0);
        theta_hat += vtx * wt;
        wsum += wt;
    }
    theta_hat /= wsum;
    let est = PointEstimate::new(theta_hat, 0.5);
    let x_k = DVector::from_fn(2, |_, _| u(&mut s, -1.5, 1.5));
    let v0 = DVector::from_fn(2, |_, _| u(&mut s, -2.0, 2.0));
    let a0 = u(&mut s, 0.0, 0.5);
    let z1 = DVector::from_fn(2, |_, _| u(&mut s, -0.5, 0.5));

    let form = PredictedParameterForm::new(&sys, &tube, &ps, &est, &x_k).unwrap();
    let thetas = polytope_vertices(&predicted_set_at(&form, &v0));
    let need = inclusion_threshold(&sys, &tube, &thetas, &x_k, a0, &v0, &z1);
    let delta = u(&mut s, 1e-4, 0.05) * if u(&mut s, 0.0, 1.0) < 0.5 { -1.0 } else { 1.0 };
    let a1 = (need + delta).max(0.0);

    let layout = VarLayout::new(2, 2, 1, 1, 4, 4, sys.n_w(), all_rows(&ps));
    let mut blk = predicted_blocks(&sys, &tube, &form, &x_k, &layout).unwrap();
    for i in 0..2 {
        fix(&mut blk, layout.z_hat(0, i), x_k[i]);
        fix(&mut blk, layout.z_hat(1, i), z1[i]);
    }
    fix(&mut blk, layout.alpha_hat(0), a0);
    fix(&mut blk, layout.alpha_hat(1), a1);
    let mut point = vec![0.0; layout.total()];
    for i in 0..2 {
        point[layout.v(0, i)] = v0[i];
    }
    OracleCase {
        multiplier_feasible: block_feasible(&blk, layout.total(), Linearize::FixInputs(&point)),
        vertex_feasible: a1 >= need,
        margin: (a1 - need).abs(),
    }
}

// ------------------------------------------------------ identification

/// Largest mismatch between the updated rhs and the support of
/// `Θ_{k−1} ∩ Δ_k` computed from that intersection's polygon vertices.
pub fn update_tightness_error(seed: u64) -> f64 {
    let mut s = rng::substream(seed, "update-tightness");
    let sys = random_system(&mut s, 2);
    let prev = ParameterSet::new(random_parameter_polytope(&mut s, 2));
    let verts = polytope_vertices(prev.polytope());
    let theta_star = &verts[0] * u(&mut s, 0.0, 0.9);
    let (a, b) = sys.matrices_at(&theta_star).unwrap();
    let (lo, hi) = dampc_core::system_model::bounding_box(sys.w()).unwrap();
    let steps = 1 + (u(&mut s, 0.0, 4.0) as usize).min(3);
    let mut window = Vec::new();
    let mut x = DVector::from_fn(2, |_, _| u(&mut s, -2.0, 2.0));
    for _ in 0..steps {
        let uu = DVector::from_fn(2, |_, _| u(&mut s, -2.0, 2.0));
        let w = DVector::from_fn(2, |i, _| u(&mut s, lo[i], hi[i]));
        let x_next = &a * &x + &b * &uu + w;
        window.push(Transition { x: x.clone(), u: uu, x_next: x_next.clone() });
        x = x_next;
    }
    let delta = build_nonfalsified(&sys, &window).unwrap();
    let next = update_parameter_set(&prev, &delta).unwrap();
    let both = prev.polytope().intersect(&delta.set).unwrap();
    let corners = polytope::vertices_2d(&both).unwrap().as_vectors();
    let mut worst: f64 = 0.0;
    for i in 0..prev.n_rows() {
        let dir = prev.polytope().row(i);
        let sup = corners.iter().map(|c| dir.dot(c)).fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max((next.rhs()[i] - sup.min(prev.rhs()[i])).abs());
    }
    worst
}

// ------------------------------------------------------- start feasibility

/// Smallest terminal scaling `α_N` reachable with `z_N = 0` from `x_k`,
/// written directly over parameter vertices and tube-cross vertices (no
/// multipliers). `None` if even the stage constraints cannot be met.
pub fn vertex_form_min_terminal_scaling(sys: &UncertainSystem, tube: &TubeConfig, x_k: &DVector<f64>) -> Option<f64> {
    let (n, m, nn) = (sys.n(), sys.m(), tube.horizon);
    let z = |l: usize, i: usize| l * n + i;
    let al = |l: usize| (nn + 1) * n + l;
    let vv = |l: usize, i: usize| (nn + 1) * (n + 1) + l * m + i;
    let total = (nn + 1) * (n + 1) + nn * m;
    let mut obj = vec![0.0; total];
    obj[al(nn)] = -1.0;
    let mut lp = LinearProgram::new(obj);
    let hx = tube.shape.hx();
    let thetas = polytope_vertices(sys.theta0());
    let fk = sys.f() + sys.g() * &tube.k;
    for l in 0..=nn {
        lp.set_lower(al(l), 0.0);
    }
    for i in 0..n {
        lp.set_bounds(z(nn, i), 0.0, 0.0);
    }
    // x_k − z_0 ∈ α_0 𝕏₀
    for r in 0..hx.nrows() {
        let mut row: Vec<(usize, f64)> = (0..n).map(|i| (z(0, i), -hx[(r, i)])).collect();
        row.push((al(0), -1.0));
        lp.add_row(row, Sense::Le, -(hx.row(r) * x_k)[0]);
    }
    for l in 0..nn {
        for xj in tube.shape.vertices() {
            // x = z + α xʲ, u = K x + v
            for c in 0..sys.n_c() {
                let mut row: Vec<(usize, f64)> = (0..n).map(|i| (z(l, i), fk[(c, i)])).collect();
                row.push((al(l), (fk.row(c) * xj)[0]));
                row.extend((0..m).map(|i| (vv(l, i), sys.g()[(c, i)])));
                lp.add_row(row, Sense::Le, 1.0);
            }
            for th in &thetas {
                let (a, b) = sys.matrices_at(th).unwrap();
                let acl = &a + &b * &tube.k;
                let m1 = hx * &acl;
                let m2 = hx * &b;
                for r in 0..hx.nrows() {
                    let mut row: Vec<(usize, f64)> = (0..n).map(|i| (z(l, i), m1[(r, i)])).collect();
                    row.push((al(l), (m1.row(r) * xj)[0]));
                    row.extend((0..m).map(|i| (vv(l, i), m2[(r, i)])));
                    row.extend((0..n).map(|i| (z(l + 1, i), -hx[(r, i)])));
                    row.push((al(l + 1), -1.0));
                    lp.add_row(row, Sense::Le, -tube.w_bar[r]);
                }
            }
        }
    }
    let out = dampc_core::lp_backend::solve_lp(&lp).unwrap();
    match out.status {
        LpStatus::Optimal => Some(-out.value),
        _ => None,
    }
}
