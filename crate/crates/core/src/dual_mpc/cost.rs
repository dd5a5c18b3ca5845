//! Worst-case stage cost `max_j ‖Q x^j‖∞ + ‖R u^j‖∞` over tube vertices,
//! written as an epigraph.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::lp_backend::Sense;
use crate::robust_tube::{push_dense, ConstraintBlock, RowKind, TubeConfig, VarLayout};

use super::MpcError;

/// Symmetric with positive leading principal minors.
pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    if !m.is_square() || m.nrows() == 0 {
        return false;
    }
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * (1.0 + m[(i, j)].abs()) {
                return false;
            }
        }
    }
    (1..=n).all(|k| m.view((0, 0), (k, k)).clone_owned().determinant() > 0.0)
}

/// Objective (to maximize, i.e. `−Σ_l t_l`) and epigraph rows for every
/// stage `l ∈ 0..=N`. Stages `l ≤ N̂` read the predicted tube when one exists;
/// the terminal stage carries no input correction.
pub fn cost_epigraph(
    tube: &TubeConfig,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    layout: &VarLayout,
) -> Result<(Vec<f64>, ConstraintBlock), MpcError> {
    if !is_positive_definite(q) || !is_positive_definite(r) {
        return Err(MpcError::WeightNotPositiveDefinite);
    }
    let (n, m) = (layout.n, layout.m);
    if q.nrows() != n || r.nrows() != m {
        return Err(MpcError::DimensionMismatch("weight matrix size"));
    }
    let rk = r * &tube.k;
    let mut blk = ConstraintBlock::new();
    for l in 0..=layout.horizon {
        let (zc, ac) = layout.cost_cross(l);
        for (j, xj) in tube.shape.vertices().iter().enumerate() {
            let qx = q * xj;
            let rkx = &rk * xj;
            for sign in [1.0, -1.0] {
                for i in 0..n {
                    let mut row = Vec::with_capacity(n + 2);
                    push_dense(&mut row, zc, q.row(i).iter().map(|v| sign * v));
                    row.push((ac, sign * qx[i]));
                    row.push((layout.a(l, j), -1.0));
                    row.retain(|&(_, c)| c != 0.0);
                    blk.push(RowKind::Cost { l, j }, row, Sense::Le, 0.0);
                }
                for i in 0..m {
                    let mut row = Vec::with_capacity(n + m + 2);
                    push_dense(&mut row, zc, rk.row(i).iter().map(|v| sign * v));
                    row.push((ac, sign * rkx[i]));
                    if l < layout.horizon {
                        push_dense(&mut row, layout.v(l, 0), r.row(i).iter().map(|v| sign * v));
                    }
                    row.push((layout.b(l, j), -1.0));
                    row.retain(|&(_, c)| c != 0.0);
                    blk.push(RowKind::Cost { l, j }, row, Sense::Le, 0.0);
                }
            }
            blk.push(
                RowKind::Cost { l, j },
                vec![(layout.a(l, j), 1.0), (layout.b(l, j), 1.0), (layout.t(l), -1.0)],
                Sense::Le,
                0.0,
            );
        }
    }
    let mut objective = vec![0.0; layout.total()];
    for l in 0..=layout.horizon {
        objective[layout.t(l)] = -1.0;
    }
    Ok((objective, blk))
}
