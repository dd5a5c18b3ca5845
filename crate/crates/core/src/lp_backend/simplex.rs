//! Bounded primal revised simplex.
//!
//! Internally the program is `minimize -c·x` over `x` with bounds and one
//! slack per row, so the all-slack basis always exists. Phase one minimizes
//! the sum of bound violations of the basic variables and hands over to phase
//! two as soon as the basic solution is feasible. Pricing is Dantzig's rule
//! with a Harris two-pass ratio test; after a run of degenerate pivots the
//! solver switches to Bland's rule until it makes progress again.

use alloc::vec;
use alloc::vec::Vec;

use super::lu::LuFactors;
use super::{LinearProgram, LpError, LpOutcome, LpSolver, LpStatus, Sense};

const UNSET: usize = usize::MAX;
const DEGENERATE_STEP: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct SimplexOptions {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub pivot_tol: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
    /// Hard cap on pivots; `None` derives one from the problem size.
    pub max_iterations: Option<usize>,
    pub refactor_every: usize,
    /// Power-of-two row and column equilibration.
    pub scale: bool,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            feasibility_tol: 1e-8,
            optimality_tol: 1e-8,
            pivot_tol: 1e-9,
            bland_after: 500,
            max_iterations: None,
            refactor_every: 80,
            scale: true,
        }
    }
}

/// The embedded LP backend.
#[derive(Clone, Debug, Default)]
pub struct RevisedSimplex {
    pub options: SimplexOptions,
}

impl RevisedSimplex {
    pub fn new(options: SimplexOptions) -> Self {
        RevisedSimplex { options }
    }
}

impl LpSolver for RevisedSimplex {
    fn solve(&self, lp: &LinearProgram) -> Result<LpOutcome, LpError> {
        lp.validate()?;
        let mut solver = Solver::new(lp, &self.options);
        let status = solver.run();
        Ok(solver.outcome(lp, status))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum State {
    Basic,
    Lower,
    Upper,
    Free,
    Fixed,
}

struct Solver<'o> {
    opts: &'o SimplexOptions,
    m: usize,
    n: usize,
    col_start: Vec<usize>,
    col_idx: Vec<usize>,
    col_val: Vec<f64>,
    row_scale: Vec<f64>,
    col_scale: Vec<f64>,
    row_flip: Vec<bool>,
    lo: Vec<f64>,
    up: Vec<f64>,
    cost: Vec<f64>,
    b: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    lu: Option<LuFactors>,
    y: Vec<f64>,
    alpha: Vec<f64>,
    iterations: usize,
}

fn pow2_near(v: f64) -> f64 {
    if !(v.is_finite() && v > 0.0) {
        return 1.0;
    }
    let e = libm::round(libm::log2(v)).clamp(-60.0, 60.0);
    libm::exp2(e)
}

impl<'o> Solver<'o> {
    fn new(lp: &LinearProgram, opts: &'o SimplexOptions) -> Self {
        let m = lp.num_rows();
        let n = lp.num_vars();

        let row_flip: Vec<bool> = lp.senses.iter().map(|s| *s == Sense::Ge).collect();
        let mut row_scale = vec![1.0; m];
        if opts.scale {
            for (i, row) in lp.rows.iter().enumerate() {
                let big = row.iter().fold(0.0f64, |a, &(_, v)| a.max(libm::fabs(v)));
                row_scale[i] = pow2_near(1.0 / big);
            }
        }

        // Column-major copy, merging duplicate entries within a row.
        let mut counts = vec![0usize; n + 1];
        for row in &lp.rows {
            for &(j, _) in row {
                counts[j + 1] += 1;
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let nnz = counts[n];
        let mut fill = counts.clone();
        let mut col_idx = vec![0usize; nnz];
        let mut col_val = vec![0.0f64; nnz];
        for (i, row) in lp.rows.iter().enumerate() {
            let sign = if row_flip[i] { -1.0 } else { 1.0 };
            for &(j, v) in row {
                let k = fill[j];
                col_idx[k] = i;
                col_val[k] = sign * v * row_scale[i];
                fill[j] += 1;
            }
        }
        let mut col_start = Vec::with_capacity(n + 1);
        col_start.push(0);
        let mut idx = Vec::with_capacity(nnz);
        let mut val = Vec::with_capacity(nnz);
        let mut mark = vec![UNSET; m];
        for j in 0..n {
            let begin = idx.len();
            for k in counts[j]..counts[j + 1] {
                let r = col_idx[k];
                if mark[r] != UNSET && mark[r] >= begin {
                    val[mark[r]] += col_val[k];
                } else {
                    mark[r] = idx.len();
                    idx.push(r);
                    val.push(col_val[k]);
                }
            }
            col_start.push(idx.len());
        }

        let mut col_scale = vec![1.0; n];
        if opts.scale {
            for j in 0..n {
                let big = val[col_start[j]..col_start[j + 1]]
                    .iter()
                    .fold(0.0f64, |a, v| a.max(libm::fabs(*v)));
                col_scale[j] = pow2_near(1.0 / big);
                for v in &mut val[col_start[j]..col_start[j + 1]] {
                    *v *= col_scale[j];
                }
            }
        }

        let mut lo = Vec::with_capacity(n + m);
        let mut up = Vec::with_capacity(n + m);
        let mut cost = Vec::with_capacity(n + m);
        for j in 0..n {
            lo.push(lp.lower[j] / col_scale[j]);
            up.push(lp.upper[j] / col_scale[j]);
            cost.push(-lp.objective[j] * col_scale[j]);
        }
        for s in &lp.senses {
            lo.push(0.0);
            up.push(if *s == Sense::Eq { 0.0 } else { f64::INFINITY });
            cost.push(0.0);
        }
        let b: Vec<f64> = (0..m)
            .map(|i| {
                let sign = if row_flip[i] { -1.0 } else { 1.0 };
                sign * lp.rhs[i] * row_scale[i]
            })
            .collect();

        let mut x = vec![0.0; n + m];
        let mut state = vec![State::Basic; n + m];
        for j in 0..n {
            let (l, u) = (lo[j], up[j]);
            let (s, v) = if l == u {
                (State::Fixed, l)
            } else if l.is_finite() {
                (State::Lower, l)
            } else if u.is_finite() {
                (State::Upper, u)
            } else {
                (State::Free, 0.0)
            };
            state[j] = s;
            x[j] = v;
        }
        let basis: Vec<usize> = (n..n + m).collect();

        Solver {
            opts,
            m,
            n,
            col_start,
            col_idx: idx,
            col_val: val,
            row_scale,
            col_scale,
            row_flip,
            lo,
            up,
            cost,
            b,
            x,
            state,
            basis,
            lu: None,
            y: vec![0.0; m],
            alpha: vec![0.0; m],
            iterations: 0,
        }
    }

    fn iteration_cap(&self) -> usize {
        self.opts
            .max_iterations
            .unwrap_or_else(|| 20_000usize.max(30 * (self.m + self.n)))
    }

    /// Factorizes the current basis, swapping dependent columns for slacks.
    fn refactor(&mut self) -> bool {
        for _attempt in 0..4 {
            let slack_rows: Vec<usize> = (0..self.m).collect();
            let cols: Vec<(&[usize], &[f64])> = self
                .basis
                .iter()
                .map(|&j| {
                    if j < self.n {
                        let (a, b) = (self.col_start[j], self.col_start[j + 1]);
                        (&self.col_idx[a..b], &self.col_val[a..b])
                    } else {
                        (core::slice::from_ref(&slack_rows[j - self.n]), &[1.0f64][..])
                    }
                })
                .collect();
            match LuFactors::factorize(self.m, &cols) {
                Ok(lu) => {
                    self.lu = Some(lu);
                    self.recompute_basics();
                    return true;
                }
                Err(sing) => {
                    drop(cols);
                    for (&pos, &row) in sing.dependent_positions.iter().zip(sing.free_rows.iter()) {
                        let out = self.basis[pos];
                        self.make_nonbasic_snapped(out);
                        let slack = self.n + row;
                        self.basis[pos] = slack;
                        self.state[slack] = State::Basic;
                    }
                }
            }
        }
        false
    }

    fn make_nonbasic_snapped(&mut self, j: usize) {
        let (l, u, v) = (self.lo[j], self.up[j], self.x[j]);
        let (s, val) = if l == u {
            (State::Fixed, l)
        } else if l.is_finite() && (!u.is_finite() || libm::fabs(v - l) <= libm::fabs(v - u)) {
            (State::Lower, l)
        } else if u.is_finite() {
            (State::Upper, u)
        } else {
            (State::Free, v)
        };
        self.state[j] = s;
        self.x[j] = val;
    }

    fn recompute_basics(&mut self) {
        let mut w = self.b.clone();
        for j in 0..self.n + self.m {
            if self.state[j] == State::Basic || self.x[j] == 0.0 {
                continue;
            }
            let xj = self.x[j];
            if j < self.n {
                for k in self.col_start[j]..self.col_start[j + 1] {
                    w[self.col_idx[k]] -= self.col_val[k] * xj;
                }
            } else {
                w[j - self.n] -= xj;
            }
        }
        if let Some(lu) = self.lu.as_mut() {
            lu.ftran(&mut w);
        }
        for (pos, &j) in self.basis.iter().enumerate() {
            self.x[j] = w[pos];
        }
    }

    fn needs_refactor(&self) -> bool {
        match &self.lu {
            None => true,
            Some(lu) => {
                lu.eta_count() >= self.opts.refactor_every
                    || lu.eta_nnz() > 4 * lu.factor_nnz() + 4 * self.m
            }
        }
    }

    fn run(&mut self) -> LpStatus {
        let tol = self.opts.feasibility_tol;
        let dtol = self.opts.optimality_tol;
        let cap = self.iteration_cap();
        let mut degenerate = 0usize;
        let mut bland = false;
        let mut cb = vec![0.0; self.m];

        loop {
            if self.iterations >= cap {
                return LpStatus::NumericalFailure;
            }
            if self.needs_refactor() && !self.refactor() {
                return LpStatus::NumericalFailure;
            }

            let mut phase_one = false;
            for (pos, &j) in self.basis.iter().enumerate() {
                let v = self.x[j];
                cb[pos] = if v < self.lo[j] - tol {
                    phase_one = true;
                    -1.0
                } else if v > self.up[j] + tol {
                    phase_one = true;
                    1.0
                } else {
                    0.0
                };
            }
            if !phase_one {
                for (pos, &j) in self.basis.iter().enumerate() {
                    cb[pos] = self.cost[j];
                }
            }
            self.y.copy_from_slice(&cb);
            if let Some(lu) = self.lu.as_mut() {
                lu.btran(&mut self.y);
            }

            // Pricing.
            let mut entering = UNSET;
            let mut increase = true;
            let mut best = 0.0f64;
            for j in 0..self.n + self.m {
                let st = self.state[j];
                if st == State::Basic || st == State::Fixed {
                    continue;
                }
                let c = if phase_one { 0.0 } else { self.cost[j] };
                let d = if j < self.n {
                    let mut s = c;
                    for k in self.col_start[j]..self.col_start[j + 1] {
                        s -= self.y[self.col_idx[k]] * self.col_val[k];
                    }
                    s
                } else {
                    c - self.y[j - self.n]
                };
                let (ok, inc) = match st {
                    State::Lower => (d < -dtol, true),
                    State::Upper => (d > dtol, false),
                    State::Free => (libm::fabs(d) > dtol, d < 0.0),
                    _ => (false, true),
                };
                if !ok {
                    continue;
                }
                if bland {
                    entering = j;
                    increase = inc;
                    break;
                }
                if libm::fabs(d) > best {
                    best = libm::fabs(d);
                    entering = j;
                    increase = inc;
                }
            }

            if entering == UNSET {
                let fresh = self.lu.as_ref().map_or(false, |lu| lu.eta_count() == 0);
                if !fresh {
                    if !self.refactor() {
                        return LpStatus::NumericalFailure;
                    }
                    continue;
                }
                return if phase_one {
                    LpStatus::Infeasible
                } else {
                    LpStatus::Optimal
                };
            }

            // FTRAN of the entering column.
            self.alpha.iter_mut().for_each(|v| *v = 0.0);
            {
                let (rows, vals) = if entering < self.n {
                    let (a, b) = (self.col_start[entering], self.col_start[entering + 1]);
                    (&self.col_idx[a..b], &self.col_val[a..b])
                } else {
                    (&[][..], &[][..])
                };
                if entering < self.n {
                    for (&r, &v) in rows.iter().zip(vals.iter()) {
                        self.alpha[r] += v;
                    }
                } else {
                    self.alpha[entering - self.n] = 1.0;
                }
            }
            if let Some(lu) = self.lu.as_mut() {
                lu.ftran(&mut self.alpha);
            }

            let dir = if increase { 1.0 } else { -1.0 };
            let (step, leave) = self.ratio_test(dir, phase_one, bland);
            let flip = self.up[entering] - self.lo[entering];

            if step.is_infinite() && flip.is_infinite() {
                if phase_one {
                    // sum of infeasibilities is bounded below; this is breakdown
                    return LpStatus::NumericalFailure;
                }
                return LpStatus::Unbounded;
            }

            self.iterations += 1;
            let (t, is_flip) = if flip <= step { (flip, true) } else { (step, false) };

            self.x[entering] += dir * t;
            for pos in 0..self.m {
                let g = -dir * self.alpha[pos];
                if g != 0.0 {
                    let j = self.basis[pos];
                    self.x[j] += g * t;
                }
            }

            if is_flip {
                self.state[entering] = if increase { State::Upper } else { State::Lower };
                self.x[entering] = if increase { self.up[entering] } else { self.lo[entering] };
            } else {
                let (pos, target) = leave;
                let out = self.basis[pos];
                self.x[out] = target.value;
                self.state[out] = if self.lo[out] == self.up[out] {
                    State::Fixed
                } else if target.upper {
                    State::Upper
                } else {
                    State::Lower
                };
                self.basis[pos] = entering;
                self.state[entering] = State::Basic;
                let alpha = core::mem::take(&mut self.alpha);
                if let Some(lu) = self.lu.as_mut() {
                    lu.push_eta(pos, &alpha);
                }
                self.alpha = alpha;
            }

            if t <= DEGENERATE_STEP {
                degenerate += 1;
                if degenerate >= self.opts.bland_after {
                    bland = true;
                }
            } else {
                degenerate = 0;
                bland = false;
            }
        }
    }

    /// Returns the step length and, for a basis change, the leaving
    /// position with the bound it lands on. An infinite step means no basic
    /// variable blocks.
    fn ratio_test(&self, dir: f64, phase_one: bool, bland: bool) -> (f64, (usize, Target)) {
        let tol = self.opts.feasibility_tol;
        let ptol = self.opts.pivot_tol;

        let blocking = |pos: usize| -> Option<(f64, Target)> {
            let g = -dir * self.alpha[pos];
            if libm::fabs(g) <= ptol {
                return None;
            }
            let j = self.basis[pos];
            let (v, l, u) = (self.x[j], self.lo[j], self.up[j]);
            let target = if phase_one && v < l - tol {
                (g > 0.0).then_some(Target { value: l, upper: false })
            } else if phase_one && v > u + tol {
                (g < 0.0).then_some(Target { value: u, upper: true })
            } else if g > 0.0 {
                u.is_finite().then_some(Target { value: u, upper: true })
            } else {
                l.is_finite().then_some(Target { value: l, upper: false })
            }?;
            Some((g, target))
        };

        let none = (f64::INFINITY, (UNSET, Target { value: 0.0, upper: false }));

        if bland {
            let mut best_ratio = f64::INFINITY;
            for pos in 0..self.m {
                if let Some((g, t)) = blocking(pos) {
                    let r = ((t.value - self.x[self.basis[pos]]) / g).max(0.0);
                    best_ratio = best_ratio.min(r);
                }
            }
            if best_ratio.is_infinite() {
                return none;
            }
            let mut chosen = UNSET;
            let mut chosen_target = none.1 .1;
            for pos in 0..self.m {
                if let Some((g, t)) = blocking(pos) {
                    let r = ((t.value - self.x[self.basis[pos]]) / g).max(0.0);
                    if r <= best_ratio + DEGENERATE_STEP
                        && (chosen == UNSET || self.basis[pos] < self.basis[chosen])
                    {
                        chosen = pos;
                        chosen_target = t;
                    }
                }
            }
            return (best_ratio, (chosen, chosen_target));
        }

        let mut t_max = f64::INFINITY;
        for pos in 0..self.m {
            if let Some((g, t)) = blocking(pos) {
                let v = self.x[self.basis[pos]];
                let relaxed = if g > 0.0 {
                    (t.value - v + tol) / g
                } else {
                    (t.value - v - tol) / g
                };
                t_max = t_max.min(relaxed);
            }
        }
        if t_max.is_infinite() {
            return none;
        }
        let mut chosen = UNSET;
        let mut chosen_g = 0.0f64;
        let mut chosen_ratio = 0.0;
        let mut chosen_target = none.1 .1;
        for pos in 0..self.m {
            if let Some((g, t)) = blocking(pos) {
                let r = (t.value - self.x[self.basis[pos]]) / g;
                if r <= t_max && libm::fabs(g) > chosen_g {
                    chosen = pos;
                    chosen_g = libm::fabs(g);
                    chosen_ratio = r;
                    chosen_target = t;
                }
            }
        }
        (chosen_ratio.max(0.0), (chosen, chosen_target))
    }

    fn outcome(&mut self, lp: &LinearProgram, status: LpStatus) -> LpOutcome {
        if status != LpStatus::Optimal {
            return LpOutcome {
                status,
                point: Vec::new(),
                value: match status {
                    LpStatus::Unbounded => f64::INFINITY,
                    _ => f64::NAN,
                },
                duals: Vec::new(),
                iterations: self.iterations,
            };
        }
        let point: Vec<f64> = (0..self.n)
            .map(|j| {
                let v = self.x[j] * self.col_scale[j];
                v.clamp(lp.lower[j], lp.upper[j])
            })
            .collect();
        let duals: Vec<f64> = (0..self.m)
            .map(|i| {
                let sign = if self.row_flip[i] { 1.0 } else { -1.0 };
                sign * self.y[i] * self.row_scale[i]
            })
            .collect();
        LpOutcome {
            status,
            value: lp.objective_at(&point),
            point,
            duals,
            iterations: self.iterations,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Target {
    value: f64,
    upper: bool,
}
