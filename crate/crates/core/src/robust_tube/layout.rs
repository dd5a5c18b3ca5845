//! Column layout of the stacked MPC decision vector.
//!
//! Blocks are laid out in this order, each contiguous and row-major in its
//! indices:
//!
//! | block | index | count |
//! |---|---|---|
//! | `z[l][i]` | `l ∈ 0..=N`, `i < n` | `(N+1)·n` |
//! | `alpha[l]` | `l ∈ 0..=N` | `N+1` |
//! | `v[l][i]` | `l < N`, `i < m` | `N·m` |
//! | `lambda[l][j][r][s]` | `l < N`, `j < n_v`, `r < n_x`, `s < n_θ` | |
//! | `z_hat[l][i]` | `l ∈ 0..=N̂` | |
//! | `alpha_hat[l]` | `l ∈ 0..=N̂` | |
//! | `lambda_hat[l][j][r][s]` | `l < N̂`, `s < n_θ + n_w` | |
//! | `t[l]` | `l ∈ 0..=N` | stage-cost epigraph |
//! | `a[l][j]`, `b[l][j]` | `l ∈ 0..=N`, `j < n_v` | state / input parts |
//!
//! `s` indexes `theta_rows`, the subset of parameter-set rows that carry a
//! multiplier; for `lambda_hat`, `s ≥ theta_rows.len()` addresses the
//! disturbance rows appended by the predicted measurement.

use alloc::vec::Vec;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarLayout {
    pub n: usize,
    pub m: usize,
    pub horizon: usize,
    pub n_hat: usize,
    pub n_vertices: usize,
    pub n_x: usize,
    pub n_w: usize,
    pub theta_rows: Vec<usize>,
    z0: usize,
    alpha0: usize,
    v0: usize,
    lambda0: usize,
    zhat0: usize,
    alphahat0: usize,
    lamhat0: usize,
    t0: usize,
    a0: usize,
    b0: usize,
    total: usize,
}

impl VarLayout {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        m: usize,
        horizon: usize,
        n_hat: usize,
        n_vertices: usize,
        n_x: usize,
        n_w: usize,
        theta_rows: Vec<usize>,
    ) -> Self {
        let nt = theta_rows.len();
        let z0 = 0;
        let alpha0 = z0 + (horizon + 1) * n;
        let v0 = alpha0 + horizon + 1;
        let lambda0 = v0 + horizon * m;
        let zhat0 = lambda0 + horizon * n_vertices * n_x * nt;
        let (zh, ah, lh) = if n_hat == 0 {
            (0, 0, 0)
        } else {
            ((n_hat + 1) * n, n_hat + 1, n_hat * n_vertices * n_x * (nt + n_w))
        };
        let alphahat0 = zhat0 + zh;
        let lamhat0 = alphahat0 + ah;
        let t0 = lamhat0 + lh;
        let a0 = t0 + horizon + 1;
        let b0 = a0 + (horizon + 1) * n_vertices;
        let total = b0 + (horizon + 1) * n_vertices;
        VarLayout {
            n,
            m,
            horizon,
            n_hat,
            n_vertices,
            n_x,
            n_w,
            theta_rows,
            z0,
            alpha0,
            v0,
            lambda0,
            zhat0,
            alphahat0,
            lamhat0,
            t0,
            a0,
            b0,
            total,
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn n_theta(&self) -> usize {
        self.theta_rows.len()
    }

    pub fn z(&self, l: usize, i: usize) -> usize {
        debug_assert!(l <= self.horizon && i < self.n);
        self.z0 + l * self.n + i
    }

    pub fn alpha(&self, l: usize) -> usize {
        debug_assert!(l <= self.horizon);
        self.alpha0 + l
    }

    pub fn v(&self, l: usize, i: usize) -> usize {
        debug_assert!(l < self.horizon && i < self.m);
        self.v0 + l * self.m + i
    }

    pub fn lambda(&self, l: usize, j: usize, r: usize, s: usize) -> usize {
        debug_assert!(l < self.horizon && j < self.n_vertices && r < self.n_x && s < self.n_theta());
        self.lambda0 + ((l * self.n_vertices + j) * self.n_x + r) * self.n_theta() + s
    }

    pub fn lambda_range(&self) -> core::ops::Range<usize> {
        self.lambda0..self.zhat0
    }

    pub fn z_hat(&self, l: usize, i: usize) -> usize {
        debug_assert!(l <= self.n_hat && self.n_hat > 0 && i < self.n);
        self.zhat0 + l * self.n + i
    }

    pub fn alpha_hat(&self, l: usize) -> usize {
        debug_assert!(l <= self.n_hat && self.n_hat > 0);
        self.alphahat0 + l
    }

    pub fn lambda_hat_cols(&self) -> usize {
        self.n_theta() + self.n_w
    }

    pub fn lambda_hat(&self, l: usize, j: usize, r: usize, s: usize) -> usize {
        debug_assert!(l < self.n_hat && j < self.n_vertices && r < self.n_x && s < self.lambda_hat_cols());
        self.lamhat0 + ((l * self.n_vertices + j) * self.n_x + r) * self.lambda_hat_cols() + s
    }

    pub fn lambda_hat_range(&self) -> core::ops::Range<usize> {
        self.lamhat0..self.t0
    }

    pub fn t(&self, l: usize) -> usize {
        debug_assert!(l <= self.horizon);
        self.t0 + l
    }

    pub fn a(&self, l: usize, j: usize) -> usize {
        self.a0 + l * self.n_vertices + j
    }

    pub fn b(&self, l: usize, j: usize) -> usize {
        self.b0 + l * self.n_vertices + j
    }

    /// Column of the `(z, α)` pair that the cost reads at stage `l`:
    /// predicted for `l ≤ N̂` when a predicted tube exists, robust otherwise.
    pub fn cost_cross(&self, l: usize) -> (usize, usize) {
        if self.n_hat > 0 && l <= self.n_hat {
            (self.z_hat(l, 0), self.alpha_hat(l))
        } else {
            (self.z(l, 0), self.alpha(l))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn columns_are_distinct_and_dense() {
        let lay = VarLayout::new(2, 2, 3, 2, 4, 4, 4, vec![0, 1, 2]);
        let mut seen = vec![false; lay.total()];
        let mut mark = |c: usize| {
            assert!(!seen[c], "column {c} reused");
            seen[c] = true;
        };
        for l in 0..=3 {
            (0..2).for_each(|i| mark(lay.z(l, i)));
            mark(lay.alpha(l));
            mark(lay.t(l));
            for j in 0..4 {
                mark(lay.a(l, j));
                mark(lay.b(l, j));
            }
        }
        for l in 0..3 {
            (0..2).for_each(|i| mark(lay.v(l, i)));
            for j in 0..4 {
                for r in 0..4 {
                    (0..3).for_each(|s| mark(lay.lambda(l, j, r, s)));
                }
            }
        }
        for l in 0..=2 {
            (0..2).for_each(|i| mark(lay.z_hat(l, i)));
            mark(lay.alpha_hat(l));
        }
        for l in 0..2 {
            for j in 0..4 {
                for r in 0..4 {
                    (0..7).for_each(|s| mark(lay.lambda_hat(l, j, r, s)));
                }
            }
        }
        assert!(seen.iter().all(|s| *s));
    }
}
