//! Sparse LU factorization of a simplex basis with a product-form eta file.
//!
//! The basis is factorized column by column (left-looking, threshold partial
//! pivoting with a row-count tie-break). Subsequent basis changes are
//! appended as eta columns until the next refactorization.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

const UNSET: usize = usize::MAX;
const PIVOT_THRESHOLD: f64 = 0.1;
const SINGULAR_TOL: f64 = 1e-11;
const DROP_TOL: f64 = 1e-14;

/// Basis positions whose columns turned out dependent, paired with rows that
/// never received a pivot.
#[derive(Debug)]
pub(crate) struct Singular {
    pub dependent_positions: Vec<usize>,
    pub free_rows: Vec<usize>,
}

#[derive(Debug, Default)]
struct Packed {
    start: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl Packed {
    fn with_capacity(cols: usize, nnz: usize) -> Self {
        let mut start = Vec::with_capacity(cols + 1);
        start.push(0);
        Packed {
            start,
            idx: Vec::with_capacity(nnz),
            val: Vec::with_capacity(nnz),
        }
    }

    fn push(&mut self, i: usize, v: f64) {
        self.idx.push(i);
        self.val.push(v);
    }

    fn close(&mut self) {
        self.start.push(self.idx.len());
    }

    fn col(&self, k: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.start[k], self.start[k + 1]);
        (&self.idx[a..b], &self.val[a..b])
    }

    fn len(&self) -> usize {
        self.start.len() - 1
    }

    fn nnz(&self) -> usize {
        self.idx.len()
    }
}

#[derive(Debug)]
pub(crate) struct LuFactors {
    m: usize,
    prow: Vec<usize>,
    qcol: Vec<usize>,
    lower: Packed,
    upper: Packed,
    diag: Vec<f64>,
    eta_pos: Vec<usize>,
    eta_pivot: Vec<f64>,
    etas: Packed,
    work: Vec<f64>,
}

impl LuFactors {
    /// Factorizes the `m × m` matrix whose column at basis position `p` is
    /// `cols[p]` given as `(row, value)` pairs.
    pub(crate) fn factorize(m: usize, cols: &[(&[usize], &[f64])]) -> Result<Self, Singular> {
        debug_assert_eq!(cols.len(), m);
        let mut row_count = vec![0usize; m];
        let mut total = 0;
        for (rows, _) in cols {
            for &r in rows.iter() {
                row_count[r] += 1;
            }
            total += rows.len();
        }

        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by_key(|&p| (cols[p].0.len(), p));

        let mut pinv = vec![UNSET; m];
        let mut prow = Vec::with_capacity(m);
        let mut qcol = Vec::with_capacity(m);
        let mut lower = Packed::with_capacity(m, total);
        let mut upper = Packed::with_capacity(m, total);
        let mut diag = Vec::with_capacity(m);
        let mut dependent = Vec::new();

        let mut x = vec![0.0f64; m];
        let mut in_pattern = vec![false; m];
        let mut pattern: Vec<usize> = Vec::new();
        let mut heap: BinaryHeap<Reverse<usize>> = BinaryHeap::new();

        for &pos in &order {
            let (rows, vals) = cols[pos];
            let mut scale = 0.0f64;
            for (&r, &v) in rows.iter().zip(vals.iter()) {
                if !in_pattern[r] {
                    in_pattern[r] = true;
                    pattern.push(r);
                    if pinv[r] != UNSET {
                        heap.push(Reverse(pinv[r]));
                    }
                }
                x[r] += v;
                scale = scale.max(libm::fabs(v));
            }

            // Eliminate with earlier L columns in step order; L is lower
            // triangular in that order so a min-heap is a valid topological
            // schedule.
            while let Some(Reverse(step)) = heap.pop() {
                let xr = x[prow[step]];
                if xr == 0.0 {
                    continue;
                }
                let (li, lv) = lower.col(step);
                for (&r, &l) in li.iter().zip(lv.iter()) {
                    if !in_pattern[r] {
                        in_pattern[r] = true;
                        pattern.push(r);
                        if pinv[r] != UNSET {
                            heap.push(Reverse(pinv[r]));
                        }
                    }
                    x[r] -= l * xr;
                }
            }

            let mut best_abs = 0.0f64;
            for &r in &pattern {
                if pinv[r] == UNSET {
                    best_abs = best_abs.max(libm::fabs(x[r]));
                }
            }

            if best_abs <= SINGULAR_TOL * scale.max(1.0) {
                dependent.push(pos);
                for &r in &pattern {
                    x[r] = 0.0;
                    in_pattern[r] = false;
                }
                pattern.clear();
                continue;
            }

            let mut pivot = UNSET;
            for &r in &pattern {
                if pinv[r] != UNSET {
                    continue;
                }
                let a = libm::fabs(x[r]);
                if a < PIVOT_THRESHOLD * best_abs {
                    continue;
                }
                pivot = if pivot == UNSET {
                    r
                } else {
                    let key = (row_count[r], Reverse(OrdAbs(a)), r);
                    let cur = (row_count[pivot], Reverse(OrdAbs(libm::fabs(x[pivot]))), pivot);
                    if key < cur {
                        r
                    } else {
                        pivot
                    }
                };
            }

            let step = prow.len();
            let d = x[pivot];
            for &r in &pattern {
                let v = x[r];
                if r == pivot || v == 0.0 {
                    continue;
                }
                if pinv[r] != UNSET {
                    upper.push(pinv[r], v);
                } else if libm::fabs(v) > DROP_TOL * best_abs {
                    lower.push(r, v / d);
                }
            }
            lower.close();
            upper.close();
            diag.push(d);
            pinv[pivot] = step;
            prow.push(pivot);
            qcol.push(pos);

            for &r in &pattern {
                x[r] = 0.0;
                in_pattern[r] = false;
            }
            pattern.clear();
        }

        if !dependent.is_empty() {
            let free_rows = (0..m).filter(|&r| pinv[r] == UNSET).collect();
            return Err(Singular {
                dependent_positions: dependent,
                free_rows,
            });
        }

        Ok(LuFactors {
            m,
            prow,
            qcol,
            lower,
            upper,
            diag,
            eta_pos: Vec::new(),
            eta_pivot: Vec::new(),
            etas: Packed::with_capacity(64, 0),
            work: vec![0.0; m],
        })
    }

    pub(crate) fn eta_count(&self) -> usize {
        self.eta_pos.len()
    }

    pub(crate) fn eta_nnz(&self) -> usize {
        self.etas.nnz()
    }

    pub(crate) fn factor_nnz(&self) -> usize {
        self.lower.nnz() + self.upper.nnz() + self.m
    }

    /// Solves `B y = a`. `a` is row-indexed on entry; on exit `a` holds `y`
    /// indexed by basis position.
    pub(crate) fn ftran(&mut self, a: &mut [f64]) {
        let m = self.m;
        for k in 0..m {
            let wk = a[self.prow[k]];
            if wk == 0.0 {
                continue;
            }
            let (li, lv) = self.lower.col(k);
            for (&r, &l) in li.iter().zip(lv.iter()) {
                a[r] -= l * wk;
            }
        }
        let t = &mut self.work;
        for k in 0..m {
            t[k] = a[self.prow[k]];
        }
        for k in (0..m).rev() {
            let tk = t[k] / self.diag[k];
            t[k] = tk;
            if tk == 0.0 {
                continue;
            }
            let (ui, uv) = self.upper.col(k);
            for (&j, &u) in ui.iter().zip(uv.iter()) {
                t[j] -= u * tk;
            }
        }
        for k in 0..m {
            a[self.qcol[k]] = t[k];
        }
        for e in 0..self.eta_pos.len() {
            let r = self.eta_pos[e];
            let yr = a[r] / self.eta_pivot[e];
            a[r] = yr;
            if yr == 0.0 {
                continue;
            }
            let (ei, ev) = self.etas.col(e);
            for (&i, &v) in ei.iter().zip(ev.iter()) {
                a[i] -= v * yr;
            }
        }
    }

    /// Solves `Bᵀ y = c`. `c` is position-indexed on entry; on exit it holds
    /// `y` indexed by row.
    pub(crate) fn btran(&mut self, c: &mut [f64]) {
        let m = self.m;
        for e in (0..self.eta_pos.len()).rev() {
            let r = self.eta_pos[e];
            let (ei, ev) = self.etas.col(e);
            let mut s = c[r];
            for (&i, &v) in ei.iter().zip(ev.iter()) {
                s -= v * c[i];
            }
            c[r] = s / self.eta_pivot[e];
        }
        let g = &mut self.work;
        for k in 0..m {
            g[k] = c[self.qcol[k]];
        }
        for k in 0..m {
            let (ui, uv) = self.upper.col(k);
            let mut s = g[k];
            for (&j, &u) in ui.iter().zip(uv.iter()) {
                s -= u * g[j];
            }
            g[k] = s / self.diag[k];
        }
        for k in (0..m).rev() {
            let (li, lv) = self.lower.col(k);
            let mut s = g[k];
            for (&r, &l) in li.iter().zip(lv.iter()) {
                s -= l * c[r];
            }
            c[self.prow[k]] = s;
        }
    }

    /// Records the replacement of the column at `pos` by a column whose
    /// basis representation is `alpha` (the FTRAN of the entering column).
    pub(crate) fn push_eta(&mut self, pos: usize, alpha: &[f64]) {
        let piv = alpha[pos];
        let scale = alpha.iter().fold(0.0f64, |acc, v| acc.max(libm::fabs(*v)));
        for (i, &v) in alpha.iter().enumerate() {
            if i != pos && libm::fabs(v) > DROP_TOL * scale {
                self.etas.push(i, v);
            }
        }
        self.etas.close();
        self.eta_pos.push(pos);
        self.eta_pivot.push(piv);
        debug_assert_eq!(self.etas.len(), self.eta_pos.len());
    }
}

#[derive(PartialEq, PartialOrd)]
struct OrdAbs(f64);

impl Eq for OrdAbs {}

impl Ord for OrdAbs {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        self.0.partial_cmp(&other.0).unwrap_or(core::cmp::Ordering::Equal)
    }
}
