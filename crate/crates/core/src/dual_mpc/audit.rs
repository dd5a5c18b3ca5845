//! Re-checks a returned decision against the tube conditions using dense
//! matrix arithmetic on the extracted variables, independently of the row
//! generators that built the LPs.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::robust_tube::TubeConfig;
use crate::set_membership::ParameterSet;
use crate::system_model::UncertainSystem;

use super::predicted::{predicted_set_at, PredictedParameterForm};
use super::DualDecision;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Audit {
    pub max_violation: f64,
    pub worst: &'static str,
}

impl Audit {
    fn note(&mut self, v: f64, what: &'static str) {
        if v > self.max_violation {
            self.max_violation = v;
            self.worst = what;
        }
    }
}

/// Largest violation of admissibility, containment, inclusion, terminal and
/// sign conditions of both tubes at the decision's own `v₀`.
pub fn audit_decision(
    sys: &UncertainSystem,
    tube: &TubeConfig,
    ps: &ParameterSet,
    form: Option<&PredictedParameterForm>,
    x_k: &DVector<f64>,
    dec: &DualDecision,
) -> Audit {
    let mut out = Audit { max_violation: 0.0, worst: "none" };
    let hx = tube.shape.hx();
    let nn = tube.horizon;
    let fk = sys.f() + sys.g() * &tube.k;

    for l in 0..nn {
        let s = &fk * &dec.z[l] + sys.g() * &dec.v[l] + &tube.f_bar * dec.alpha[l];
        out.note(s.max() - 1.0, "state/input constraint");
    }
    out.note((hx * (x_k - &dec.z[0])).max() - dec.alpha[0], "initial containment");
    out.note(dec.z[nn].amax(), "terminal center");
    out.note(dec.alpha[nn] - tube.alpha_bar, "terminal scaling");
    for a in &dec.alpha {
        out.note(-a, "negative scaling");
    }

    let theta_h = ps.h_theta().select_rows(dec.layout.theta_rows.iter());
    let theta_rhs = ps.rhs().select_rows(dec.layout.theta_rows.iter());
    check_tube(
        sys,
        tube,
        &dec.z,
        &dec.alpha,
        &dec.v,
        nn,
        &theta_h,
        &theta_rhs,
        |l, j| dec.lambda(l, j),
        "robust",
        &mut out,
    );

    if let Some(form) = form {
        let nh = dec.layout.n_hat;
        if nh > 0 {
            out.note((hx * (x_k - &dec.z_hat[0])).max() - dec.alpha_hat[0], "predicted initial containment");
            for a in &dec.alpha_hat {
                out.note(-a, "negative predicted scaling");
            }
            let full = predicted_set_at(form, &dec.v[0]);
            let rows: Vec<usize> = dec
                .layout
                .theta_rows
                .iter()
                .copied()
                .chain(ps.n_rows()..full.n_rows())
                .collect();
            let h = full.h().select_rows(rows.iter());
            let rhs = full.rhs().select_rows(rows.iter());
            check_tube(
                sys,
                tube,
                &dec.z_hat,
                &dec.alpha_hat,
                &dec.v,
                nh,
                &h,
                &rhs,
                |l, j| dec.lambda_hat(l, j),
                "predicted",
                &mut out,
            );
        }
    }
    out
}

/// For stages `l < steps`: `Λ h + H_x d − α_{l+1} ≤ −w̄` and `Λ H_θ = H_x D`
/// per vertex, plus `Λ ≥ 0`.
#[allow(clippy::too_many_arguments)]
fn check_tube(
    sys: &UncertainSystem,
    tube: &TubeConfig,
    z: &[DVector<f64>],
    alpha: &[f64],
    v: &[DVector<f64>],
    steps: usize,
    h_theta: &DMatrix<f64>,
    h_rhs: &DVector<f64>,
    lambda: impl Fn(usize, usize) -> DMatrix<f64>,
    which: &'static str,
    out: &mut Audit,
) {
    let hx = tube.shape.hx();
    let (inc, mul, neg) = match which {
        "robust" => ("robust inclusion", "robust multiplier identity", "negative robust multiplier"),
        _ => ("predicted inclusion", "predicted multiplier identity", "negative predicted multiplier"),
    };
    for l in 0..steps {
        for (j, xj) in tube.shape.vertices().iter().enumerate() {
            let x = &z[l] + xj * alpha[l];
            let u = &tube.k * &x + &v[l];
            let d = sys.a(0) * &x + sys.b(0) * &u - &z[l + 1];
            let dd = sys.regressor(&x, &u).expect("dimensions checked at build time");
            let lam = lambda(l, j);
            let lhs = &lam * h_rhs + hx * d;
            for r in 0..lhs.len() {
                out.note(lhs[r] - alpha[l + 1] + tube.w_bar[r], inc);
            }
            out.note((&lam * h_theta - hx * dd).amax(), mul);
            out.note(-lam.min(), neg);
        }
    }
}
