mod common;

use common::oracles::{polytope_vertices, random_parameter_polytope, update_tightness_error};
use common::{example_parameter_set, example_system, v};
use dampc_core::polytope::{contains, vertices_2d, HPolytope};
use dampc_core::rng;
use dampc_core::set_membership::{
    build_nonfalsified, lms_update, project_polytope, update_parameter_set, MeasurementWindow, ParameterSet,
    PointEstimate, Transition,
};
use dampc_core::system_model::{step_truth, DisturbanceLaw, TruthModel, UncertainSystem};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn update_equals_polygon_support(seed in any::<u64>()) {
        prop_assert!(update_tightness_error(seed) <= 1e-7);
    }

    #[test]
    fn trajectory_keeps_true_parameter_and_shrinks(seed in any::<u64>()) {
        let sys = example_system();
        let theta_star = v(&[0.95, 0.3]);
        let mut truth = TruthModel::new(&sys, theta_star.clone(), DisturbanceLaw::UniformOnW { seed }).unwrap();
        let mut ps = ParameterSet::initial(sys.theta0(), 16, 0).unwrap();
        let mut est = PointEstimate::new(v(&[0.5, 0.5]), 0.5);
        let mut window = MeasurementWindow::new(4);
        let mut s = rng::substream(seed, "inputs");
        let mut x = v(&[1.0, 1.5]);
        for _ in 0..6 {
            let u = v(&[rng::uniform(&mut s, -0.5, 1.0), rng::uniform(&mut s, -2.0, 2.0)]);
            let (x_next, _) = step_truth(&sys, &mut truth, &x, &u).unwrap();
            window.push(Transition { x: x.clone(), u: u.clone(), x_next: x_next.clone() });
            let delta = build_nonfalsified(&sys, &window.to_vec()).unwrap();
            let next = update_parameter_set(&ps, &delta).unwrap();
            prop_assert!((next.rhs() - ps.rhs()).max() <= 1e-9);
            prop_assert!(contains(next.polytope(), &theta_star, 1e-7));
            let both = ps.polytope().intersect(&delta.set).unwrap();
            for c in vertices_2d(&both).unwrap().as_vectors() {
                prop_assert!(contains(next.polytope(), &c, 1e-7));
            }
            est = lms_update(&est, &next, &sys, &x, &u, &x_next).unwrap();
            prop_assert!(contains(next.polytope(), &est.theta_hat, 1e-6));
            ps = next;
            x = x_next;
        }
    }

    #[test]
    fn projection_beats_boundary_samples(seed in any::<u64>(), x in prop::array::uniform2(-3.0f64..3.0)) {
        let mut s = rng::substream(seed, "projection");
        let p = random_parameter_polytope(&mut s, 2);
        let x = v(&x);
        let proj = project_polytope(&x, &p, 1e-12).unwrap();
        prop_assert!(contains(&p, &proj, 1e-7));
        let verts = polytope_vertices(&p);
        let mut best = f64::INFINITY;
        for i in 0..verts.len() {
            let (a, b) = (&verts[i], &verts[(i + 1) % verts.len()]);
            for k in 0..=2000 {
                let t = k as f64 / 2000.0;
                let q = a * (1.0 - t) + b * t;
                best = best.min((&x - q).norm());
            }
        }
        if contains(&p, &x, 0.0) {
            prop_assert!((&proj - &x).norm() == 0.0);
        } else {
            prop_assert!(((&x - &proj).norm() - best).abs() < 1e-4);
        }
    }
}

#[test]
fn repeated_data_is_idempotent() {
    let sys = example_system();
    let ps = example_parameter_set(&sys);
    let (x, u) = (v(&[1.0, 1.5]), v(&[0.2, 1.0]));
    let (a, b) = sys.matrices_at(&v(&[0.95, 0.3])).unwrap();
    let x_next = &a * &x + &b * &u + v(&[0.03, -0.07]);
    let tr = Transition { x, u, x_next };
    let once = update_parameter_set(&ps, &build_nonfalsified(&sys, &[tr.clone()]).unwrap()).unwrap();
    let twice = update_parameter_set(&once, &build_nonfalsified(&sys, &[tr.clone(), tr]).unwrap()).unwrap();
    assert!((once.rhs() - twice.rhs()).amax() < 1e-9);
}

#[test]
fn vacuous_data_leaves_the_set_alone() {
    let sys = example_system();
    let ps = example_parameter_set(&sys);
    let tr = Transition { x: v(&[0.0, 0.0]), u: v(&[0.0, 0.0]), x_next: v(&[0.05, -0.05]) };
    let next = update_parameter_set(&ps, &build_nonfalsified(&sys, &[tr]).unwrap()).unwrap();
    assert_eq!(next.rhs(), ps.rhs());
}

#[test]
fn noise_free_measurement_keeps_truth_and_cuts_far_points() {
    let sys = example_system();
    let ps = example_parameter_set(&sys);
    let theta_star = v(&[0.95, 0.3]);
    let (x, u) = (v(&[1.0, 1.5]), v(&[0.0, 1.0]));
    let (a, b) = sys.matrices_at(&theta_star).unwrap();
    let x_next = &a * &x + &b * &u;
    let delta = build_nonfalsified(&sys, &[Transition { x, u, x_next }]).unwrap();
    assert!(contains(&delta.set, &theta_star, 1e-12));
    assert!(!contains(&delta.set, &v(&[-0.5, -0.8]), 0.0));
    let next = update_parameter_set(&ps, &delta).unwrap();
    assert!(contains(next.polytope(), &theta_star, 1e-9));
}

#[test]
fn lms_contracts_on_a_scalar_parameter() {
    // x⁺ = θ u with θ* = 0.6; D = u, so the error shrinks by |1 − μ u²/(1+u²)| per step
    let sys = UncertainSystem::new(
        vec![DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)],
        vec![DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, 1.0)],
        DMatrix::from_element(1, 1, 0.1),
        DMatrix::from_element(1, 1, 0.1),
        HPolytope::inf_ball(1, 0.1),
        HPolytope::inf_ball(1, 1.0),
    )
    .unwrap();
    let ps = ParameterSet::new(sys.theta0().clone());
    let mut est = PointEstimate::new(DVector::from_element(1, -0.5), 0.3);
    let x = DVector::zeros(1);
    let mut err = (est.theta_hat[0] - 0.6_f64).abs();
    for k in 0..20 {
        let u = DVector::from_element(1, if k % 2 == 0 { 1.0 } else { -0.7 });
        let x_next = DVector::from_element(1, 0.6 * u[0]);
        est = lms_update(&est, &ps, &sys, &x, &u, &x_next).unwrap();
        let factor = (1.0 - 0.3 * u[0] * u[0] / (1.0 + u[0] * u[0])).abs();
        let new_err = (est.theta_hat[0] - 0.6).abs();
        assert!(new_err < err);
        assert!((new_err - factor * err).abs() < 1e-12);
        err = new_err;
    }
}

#[test]
fn lms_projects_onto_a_shrunken_set() {
    let sys = example_system();
    let small = ParameterSet::new(HPolytope::inf_ball(2, 0.2));
    let est = PointEstimate::new(v(&[0.9, 0.0]), 0.5);
    let x = DVector::zeros(2);
    let u = DVector::zeros(2);
    let out = lms_update(&est, &small, &sys, &x, &u, &DVector::zeros(2)).unwrap();
    assert!((out.theta_hat - v(&[0.2, 0.0])).amax() < 1e-9);
}
