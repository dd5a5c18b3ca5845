mod common;

use common::oracles::{duality_gap, random_lp};
use dampc_core::lp_backend::{solve_lp, LinearProgram, LpStatus, Sense};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn primal_and_dual_values_agree(seed in any::<u64>()) {
        let lp = random_lp(seed);
        let out = solve_lp(&lp).unwrap();
        prop_assert!(duality_gap(&lp, &out).is_ok(), "{:?}", duality_gap(&lp, &out));
    }

    #[test]
    fn repeated_solves_are_identical(seed in any::<u64>()) {
        let lp = random_lp(seed);
        let a = solve_lp(&lp).unwrap();
        let b = solve_lp(&lp).unwrap();
        prop_assert_eq!(a.status, b.status);
        prop_assert_eq!(a.value.to_bits(), b.value.to_bits());
        prop_assert_eq!(a.iterations, b.iterations);
        prop_assert!(a.point.iter().zip(&b.point).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn degenerate_vertex_terminates() {
    // many constraints through the optimum (0, 0)
    let mut lp = LinearProgram::new(vec![-1.0, -1.0]);
    for k in 0..20 {
        let a = k as f64 / 19.0;
        lp.add_row([(0, -a), (1, -(1.0 - a))], Sense::Le, 0.0);
    }
    let out = solve_lp(&lp).unwrap();
    assert_eq!(out.status, LpStatus::Optimal);
    assert!(out.value.abs() < 1e-12);
    assert!(duality_gap(&lp, &out).is_ok());
}

#[test]
fn infeasible_equalities() {
    let mut lp = LinearProgram::new(vec![1.0, 0.0]);
    lp.add_row([(0, 1.0), (1, 1.0)], Sense::Eq, 1.0);
    lp.add_row([(0, 1.0), (1, 1.0)], Sense::Eq, 2.0);
    assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Infeasible);
}
