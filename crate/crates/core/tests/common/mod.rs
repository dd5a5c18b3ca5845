#![allow(dead_code)]

use dampc_core::dual_mpc::Weights;
use dampc_core::polytope::HPolytope;
use dampc_core::robust_tube::{compute_terminal_alpha, TubeConfig, TubeShape};
use dampc_core::set_membership::{ParameterSet, PointEstimate};
use dampc_core::system_model::UncertainSystem;
use nalgebra::{DMatrix, DVector};

pub fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

pub fn mat(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

pub fn example_system() -> UncertainSystem {
    let f = mat(8, 2, &[
        0.1, 0.0, -0.1, 0.0, 0.0, 0.1, 0.0, -0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
    ]);
    let g = mat(8, 2, &[
        0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -2.0, 0.0, 0.0, 0.5, 0.0, -0.5,
    ]);
    UncertainSystem::new(
        vec![
            mat(2, 2, &[0.85, 0.5, 0.2, 0.6]),
            mat(2, 2, &[0.1, 0.0, 0.0, 0.1]),
            mat(2, 2, &[0.0, 0.0, 0.0, 0.0]),
        ],
        vec![
            mat(2, 2, &[1.0, 0.4, 0.2, 0.4]),
            mat(2, 2, &[0.0, 0.0, 0.0, 0.0]),
            mat(2, 2, &[0.0, 0.5, 0.0, 0.4]),
        ],
        f,
        g,
        HPolytope::inf_ball(2, 0.1),
        HPolytope::inf_ball(2, 1.0),
    )
    .unwrap()
}

pub fn unit_box_shape() -> TubeShape {
    TubeShape::new(
        &HPolytope::inf_ball(2, 1.0),
        vec![v(&[1.0, 1.0]), v(&[-1.0, 1.0]), v(&[-1.0, -1.0]), v(&[1.0, -1.0])],
    )
    .unwrap()
}

pub fn example_gain() -> DMatrix<f64> {
    mat(2, 2, &[-0.5625, 0.0, 0.0, 0.0])
}

pub fn example_tube(sys: &UncertainSystem) -> TubeConfig {
    let shape = unit_box_shape();
    let k = example_gain();
    let alpha = compute_terminal_alpha(sys, &shape, &k, 1e-3).unwrap();
    TubeConfig::new(sys, shape, k, 8, alpha).unwrap()
}

pub fn example_parameter_set(sys: &UncertainSystem) -> ParameterSet {
    ParameterSet::initial(sys.theta0(), 58, 0).unwrap()
}

pub fn example_estimate() -> PointEstimate {
    PointEstimate::new(v(&[0.5, 0.5]), 0.5)
}

pub fn identity_weights() -> Weights {
    Weights { q: DMatrix::identity(2, 2), r: DMatrix::identity(2, 2) }
}
pub mod oracles;
