//! The parameter set anticipated after the next measurement, as an affine
//! function of the first input correction `v₀`, and the predicted tube that
//! must be robust with respect to it.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::lp_backend::Sense;
use crate::polytope::HPolytope;
use crate::robust_tube::{push_dense, Bilinear, BlockRow, ConstraintBlock, RowKind, TubeConfig, TubeTerms, VarLayout};
use crate::set_membership::{ParameterSet, PointEstimate};
use crate::system_model::{ModelError, UncertainSystem};

use super::MpcError;

/// `x̂ = A(θ̂)x_k + B(θ̂)u_k`.
pub fn predict_state(
    sys: &UncertainSystem,
    est: &PointEstimate,
    x_k: &DVector<f64>,
    u_k: &DVector<f64>,
) -> Result<DVector<f64>, ModelError> {
    if x_k.len() != sys.n() || u_k.len() != sys.m() {
        return Err(ModelError::DimensionMismatch("state or input length"));
    }
    let (a, b) = sys.matrices_at(&est.theta_hat)?;
    Ok(a * x_k + b * u_k)
}

/// `Θ̂(v₀) = Θ_k ∩ {θ | −H_w D θ ≤ h_w − H_w D θ̂}` with
/// `D = D(x_k, Kx_k + v₀)`.
///
/// `H_w D` is stored split as `e + Σ_i g_i [v₀]_i`: `e[(q, c)]` is the row-`q`,
/// column-`c` entry at `v₀ = 0` and `g[c][(q, i)]` its sensitivity to `[v₀]_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictedParameterForm {
    pub base: HPolytope,
    pub theta_hat: DVector<f64>,
    pub h_w: DVector<f64>,
    pub e: DMatrix<f64>,
    pub g: Vec<DMatrix<f64>>,
}

impl PredictedParameterForm {
    pub fn new(
        sys: &UncertainSystem,
        tube: &TubeConfig,
        ps: &ParameterSet,
        est: &PointEstimate,
        x_k: &DVector<f64>,
    ) -> Result<Self, MpcError> {
        if x_k.len() != sys.n() || est.theta_hat.len() != sys.p() {
            return Err(MpcError::DimensionMismatch("state or estimate length"));
        }
        let hw = sys.w().h();
        let u_nom = &tube.k * x_k;
        let d = sys.regressor(x_k, &u_nom)?;
        let e = hw * d;
        let g = (1..=sys.p()).map(|c| hw * sys.b(c)).collect();
        Ok(PredictedParameterForm {
            base: ps.polytope().clone(),
            theta_hat: est.theta_hat.clone(),
            h_w: sys.w().rhs().clone(),
            e,
            g,
        })
    }

    pub fn n_w(&self) -> usize {
        self.h_w.len()
    }

    pub fn p(&self) -> usize {
        self.theta_hat.len()
    }

    /// `H_w D(x_k, Kx_k + v₀)`.
    pub fn hw_d(&self, v0: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.e.clone();
        for c in 0..self.p() {
            let col = &self.g[c] * v0;
            for q in 0..self.n_w() {
                m[(q, c)] += col[q];
            }
        }
        m
    }

    /// The appended rows alone.
    pub fn appended_at(&self, v0: &DVector<f64>) -> HPolytope {
        let hd = self.hw_d(v0);
        let rhs = &self.h_w - &hd * &self.theta_hat;
        HPolytope::new(-hd, rhs).expect("finite inputs give finite rows")
    }
}

/// `Θ̂_k` evaluated at a concrete `v₀`.
pub fn predicted_set_at(form: &PredictedParameterForm, v0: &DVector<f64>) -> HPolytope {
    form.base
        .intersect(&form.appended_at(v0))
        .expect("appended rows share the parameter dimension")
}

/// Predicted tube rows for stages `0..layout.n_hat`: initial containment,
/// successor inclusion robust to `Θ̂(v₀)` via multipliers `Λ̂ ≥ 0`. Products of
/// `Λ̂` with `v₀` are emitted as bilinear terms.
pub fn predicted_blocks(
    sys: &UncertainSystem,
    tube: &TubeConfig,
    form: &PredictedParameterForm,
    x_k: &DVector<f64>,
    layout: &VarLayout,
) -> Result<ConstraintBlock, MpcError> {
    let mut blk = ConstraintBlock::new();
    let nh = layout.n_hat;
    if nh == 0 {
        return Ok(blk);
    }
    if nh > tube.horizon || layout.horizon != tube.horizon {
        return Err(MpcError::DimensionMismatch("predicted horizon exceeds the robust horizon"));
    }
    if layout.n_w != form.n_w() || layout.theta_rows.iter().any(|&r| r >= form.base.n_rows()) {
        return Err(MpcError::DimensionMismatch("layout does not match the predicted parameter form"));
    }
    let (n, m) = (sys.n(), sys.m());
    let nv = tube.shape.vertices().len();
    let nx = tube.shape.n_x();
    let terms = TubeTerms::new(sys, tube);
    let hx = tube.shape.hx();
    let nt = layout.n_theta();
    let h_theta = form.base.h();
    let h_rhs = form.base.rhs();
    // ĥ_q(v₀) = const_q − Σ_i sens[(q, i)] [v₀]_i
    let ehat = &form.e * &form.theta_hat;
    let mut sens = DMatrix::zeros(form.n_w(), m);
    for c in 0..form.p() {
        sens += &form.g[c] * form.theta_hat[c];
    }

    let hx_xk = hx * x_k;
    for r in 0..nx {
        let mut row = Vec::with_capacity(n + 1);
        push_dense(&mut row, layout.z_hat(0, 0), hx.row(r).iter().map(|v| -v));
        row.push((layout.alpha_hat(0), -1.0));
        blk.push(RowKind::PredictedInitial, row, Sense::Le, -hx_xk[r]);
    }

    for l in 0..nh {
        for j in 0..nv {
            for r in 0..nx {
                let mut lin = Vec::new();
                let mut bil = Vec::new();
                for (s, &tr) in layout.theta_rows.iter().enumerate() {
                    lin.push((layout.lambda_hat(l, j, r, s), h_rhs[tr]));
                }
                for q in 0..form.n_w() {
                    let col = layout.lambda_hat(l, j, r, nt + q);
                    lin.push((col, form.h_w[q] - ehat[q]));
                    for i in 0..m {
                        if sens[(q, i)] != 0.0 {
                            bil.push(Bilinear { multiplier: col, input: layout.v(0, i), coef: -sens[(q, i)] });
                        }
                    }
                }
                push_dense(&mut lin, layout.z_hat(l, 0), terms.hx_acl[0].row(r).iter().copied());
                lin.push((layout.alpha_hat(l), terms.hx_acl_x[0][j][r]));
                push_dense(&mut lin, layout.v(l, 0), terms.hx_b[0].row(r).iter().copied());
                push_dense(&mut lin, layout.z_hat(l + 1, 0), hx.row(r).iter().map(|v| -v));
                lin.push((layout.alpha_hat(l + 1), -1.0));
                lin.retain(|&(_, c)| c != 0.0);
                blk.rows.push(BlockRow {
                    linear: lin,
                    bilinear: bil,
                    sense: Sense::Le,
                    rhs: -tube.w_bar[r],
                    kind: RowKind::PredictedInclusion { l, j, r },
                });

                for c in 0..sys.p() {
                    let mut lin = Vec::new();
                    let mut bil = Vec::new();
                    for (s, &tr) in layout.theta_rows.iter().enumerate() {
                        let h = h_theta[(tr, c)];
                        if h != 0.0 {
                            lin.push((layout.lambda_hat(l, j, r, s), h));
                        }
                    }
                    for q in 0..form.n_w() {
                        let col = layout.lambda_hat(l, j, r, nt + q);
                        if form.e[(q, c)] != 0.0 {
                            lin.push((col, -form.e[(q, c)]));
                        }
                        for i in 0..m {
                            let gq = form.g[c][(q, i)];
                            if gq != 0.0 {
                                bil.push(Bilinear { multiplier: col, input: layout.v(0, i), coef: -gq });
                            }
                        }
                    }
                    push_dense(&mut lin, layout.z_hat(l, 0), terms.hx_acl[c + 1].row(r).iter().map(|v| -v));
                    let ax = terms.hx_acl_x[c + 1][j][r];
                    if ax != 0.0 {
                        lin.push((layout.alpha_hat(l), -ax));
                    }
                    push_dense(&mut lin, layout.v(l, 0), terms.hx_b[c + 1].row(r).iter().map(|v| -v));
                    blk.rows.push(BlockRow {
                        linear: lin,
                        bilinear: bil,
                        sense: Sense::Eq,
                        rhs: 0.0,
                        kind: RowKind::PredictedMultiplier { l, j, r, c },
                    });
                }
            }
        }
    }
    for l in 0..=nh {
        blk.bound(layout.alpha_hat(l), 0.0, f64::INFINITY);
    }
    for c in layout.lambda_hat_range() {
        blk.bound(c, 0.0, f64::INFINITY);
    }
    Ok(blk)
}
