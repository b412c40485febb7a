//! Bounded primal revised simplex.
//!
//! Internally every row `i` gets a logical variable `r_i = a_i x` so the
//! system reads `A x - r = 0` with bounds on both `x` and `r`. Phase one
//! minimizes the sum of bound violations of basic variables, phase two the
//! (scaled, minimization-form) objective. Both share the same pivoting code.

#![allow(clippy::needless_range_loop)]

use alloc::vec;
use alloc::vec::Vec;

use super::lu::{Column, LuFactor};
use super::{LinearProgram, LpSolution, LpStatus, Relation, Sense, SimplexOptions};

const PIVOT_TOL: f64 = 1e-9;
const HUGE: f64 = 1e30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum VarState {
    Basic,
    Lower,
    Upper,
    /// Nonbasic free variable held at zero.
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Basis {
    pub head: Vec<usize>,
    pub state: Vec<VarState>,
}

pub(crate) struct Engine {
    n: usize,
    m: usize,
    col_start: Vec<usize>,
    col_entries: Vec<(usize, f64)>,
    logical_cols: Vec<[(usize, f64); 1]>,
    cost: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    col_scale: Vec<f64>,
    row_scale: Vec<f64>,
    obj_scale: f64,
    negate: bool,
    offset: f64,

    x: Vec<f64>,
    head: Vec<usize>,
    pos_of: Vec<usize>,
    state: Vec<VarState>,
    lu: LuFactor,
    opts: SimplexOptions,
    pub(crate) iterations: usize,

    work_m: Vec<f64>,
    scratch: Vec<f64>,
}

fn pow2_round(s: f64) -> f64 {
    if !(s.is_finite()) || s <= 0.0 {
        return 1.0;
    }
    let e = libm::round(libm::log2(s)).clamp(-60.0, 60.0);
    libm::exp2(e)
}

impl Engine {
    pub(crate) fn new(lp: &LinearProgram, opts: &SimplexOptions) -> Self {
        let n = lp.vars.len();
        let m = lp.constraints.len();

        // column-wise copy of A with duplicate entries merged
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, c) in lp.constraints.iter().enumerate() {
            for &(j, a) in &c.coeffs {
                if a != 0.0 {
                    cols[j.0].push((i, a));
                }
            }
        }
        for col in &mut cols {
            col.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(col.len());
            for &(i, a) in col.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == i => last.1 += a,
                    _ => merged.push((i, a)),
                }
            }
            merged.retain(|e| e.1 != 0.0);
            *col = merged;
        }

        // geometric scaling, powers of two
        let mut row_scale = vec![1.0f64; m];
        let mut col_scale = vec![1.0f64; n];
        for _ in 0..4 {
            let mut rmin = vec![f64::INFINITY; m];
            let mut rmax = vec![0.0f64; m];
            for (j, col) in cols.iter().enumerate() {
                for &(i, a) in col {
                    let v = a.abs() * col_scale[j];
                    rmin[i] = rmin[i].min(v);
                    rmax[i] = rmax[i].max(v);
                }
            }
            for i in 0..m {
                if rmax[i] > 0.0 {
                    row_scale[i] = pow2_round(1.0 / libm::sqrt(rmin[i] * rmax[i]));
                }
            }
            for (j, col) in cols.iter().enumerate() {
                let mut cmin = f64::INFINITY;
                let mut cmax = 0.0f64;
                for &(i, a) in col {
                    let v = a.abs() * row_scale[i];
                    cmin = cmin.min(v);
                    cmax = cmax.max(v);
                }
                if cmax > 0.0 {
                    col_scale[j] = pow2_round(1.0 / libm::sqrt(cmin * cmax));
                }
            }
        }

        let mut col_start = Vec::with_capacity(n + 1);
        let mut col_entries = Vec::new();
        col_start.push(0);
        for (j, col) in cols.iter().enumerate() {
            for &(i, a) in col {
                col_entries.push((i, a * row_scale[i] * col_scale[j]));
            }
            col_start.push(col_entries.len());
        }

        let negate = lp.sense == Sense::Maximize;
        let mut cost = vec![0.0f64; n + m];
        let mut cmax = 0.0f64;
        for (j, v) in lp.vars.iter().enumerate() {
            let c = if negate { -v.cost } else { v.cost } * col_scale[j];
            cost[j] = c;
            cmax = cmax.max(c.abs());
        }
        let obj_scale = if cmax > 0.0 { pow2_round(cmax) } else { 1.0 };
        for c in cost.iter_mut().take(n) {
            *c /= obj_scale;
        }

        let mut lo = vec![0.0f64; n + m];
        let mut hi = vec![0.0f64; n + m];
        for (j, v) in lp.vars.iter().enumerate() {
            lo[j] = scale_bound(v.lower, 1.0 / col_scale[j]);
            hi[j] = scale_bound(v.upper, 1.0 / col_scale[j]);
        }
        for (i, c) in lp.constraints.iter().enumerate() {
            let b = c.rhs * row_scale[i];
            let (l, h) = match c.relation {
                Relation::Le => (f64::NEG_INFINITY, b),
                Relation::Ge => (b, f64::INFINITY),
                Relation::Eq => (b, b),
            };
            lo[n + i] = l;
            hi[n + i] = h;
        }

        let logical_cols = (0..m).map(|i| [(i, -1.0)]).collect();
        let mut engine = Engine {
            n,
            m,
            col_start,
            col_entries,
            logical_cols,
            cost,
            lo,
            hi,
            col_scale,
            row_scale,
            obj_scale,
            negate,
            offset: lp.offset,
            x: vec![0.0; n + m],
            head: (n..n + m).collect(),
            pos_of: vec![usize::MAX; n + m],
            state: vec![VarState::Lower; n + m],
            lu: LuFactor::default(),
            opts: *opts,
            iterations: 0,
            work_m: vec![0.0; m],
            scratch: Vec::new(),
        };
        for p in 0..m {
            engine.pos_of[n + p] = p;
            engine.state[n + p] = VarState::Basic;
        }
        for j in 0..n {
            engine.state[j] = engine.resting_state(j, VarState::Lower);
        }
        engine.refactor();
        engine
    }

    fn resting_state(&self, j: usize, preferred: VarState) -> VarState {
        let (l, h) = (self.lo[j], self.hi[j]);
        match preferred {
            VarState::Upper if h.is_finite() => VarState::Upper,
            VarState::Lower if l.is_finite() => VarState::Lower,
            _ => {
                if l.is_finite() {
                    VarState::Lower
                } else if h.is_finite() {
                    VarState::Upper
                } else {
                    VarState::Zero
                }
            }
        }
    }

    fn column(&self, j: usize) -> Column<'_> {
        if j < self.n {
            &self.col_entries[self.col_start[j]..self.col_start[j + 1]]
        } else {
            &self.logical_cols[j - self.n]
        }
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.state[j] {
            VarState::Lower => self.lo[j],
            VarState::Upper => self.hi[j],
            VarState::Zero => 0.0,
            VarState::Basic => self.x[j],
        }
    }

    pub(crate) fn basis(&self) -> Basis {
        Basis {
            head: self.head.clone(),
            state: self.state.clone(),
        }
    }

    pub(crate) fn set_basis(&mut self, basis: &Basis) {
        self.head.clone_from(&basis.head);
        self.state.clone_from(&basis.state);
        for p in self.pos_of.iter_mut() {
            *p = usize::MAX;
        }
        for (p, &j) in self.head.iter().enumerate() {
            self.pos_of[j] = p;
        }
        for j in 0..self.n + self.m {
            if self.state[j] != VarState::Basic {
                self.state[j] = self.resting_state(j, self.state[j]);
            }
        }
        self.refactor();
    }

    /// Changes the bounds of structural variable `j` (problem units). The
    /// next [`Engine::run`] repairs primal feasibility from the current basis.
    pub(crate) fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        let s = 1.0 / self.col_scale[j];
        self.lo[j] = scale_bound(lower, s);
        self.hi[j] = scale_bound(upper, s);
        if self.state[j] != VarState::Basic {
            self.state[j] = self.resting_state(j, self.state[j]);
        }
    }

    fn refactor(&mut self) {
        let cols: Vec<Column<'_>> = self.head.iter().map(|&j| self.column(j)).collect();
        let (lu, repairs) = LuFactor::factorize(&cols, self.m);
        self.lu = lu;
        for (pos, row) in repairs {
            let old = self.head[pos];
            // the factor already holds -e_row at this position
            let logical = self.n + row;
            self.pos_of[old] = usize::MAX;
            self.state[old] = self.resting_state(old, VarState::Lower);
            self.head[pos] = logical;
            self.pos_of[logical] = pos;
            self.state[logical] = VarState::Basic;
        }
    }

    fn compute_primal(&mut self) {
        let m = self.m;
        let mut rhs = core::mem::take(&mut self.work_m);
        rhs.clear();
        rhs.resize(m, 0.0);
        for j in 0..self.n + self.m {
            if self.state[j] == VarState::Basic {
                continue;
            }
            let v = self.nonbasic_value(j);
            self.x[j] = v;
            if v != 0.0 {
                for &(i, a) in self.column(j) {
                    rhs[i] -= a * v;
                }
            }
        }
        self.lu.ftran(&mut rhs, &mut self.scratch);
        for p in 0..m {
            self.x[self.head[p]] = rhs[p];
        }
        self.work_m = rhs;
    }

    /// Runs the simplex from the current basis.
    pub(crate) fn run(&mut self) -> LpStatus {
        let n_total = self.n + self.m;
        let max_iter = self.opts.max_iterations.unwrap_or_else(|| 20_000usize.max(40 * n_total));
        let tol_p = self.opts.feasibility_tol;
        let tol_d = self.opts.optimality_tol;

        self.compute_primal();
        let mut fresh = true;
        let mut degenerate_run = 0usize;
        let mut bland = false;
        let mut cb = vec![0.0f64; self.m];
        let mut y = vec![0.0f64; self.m];
        let mut alpha = vec![0.0f64; self.m];
        let start_iter = self.iterations;

        loop {
            if self.iterations - start_iter >= max_iter {
                return LpStatus::IterationLimit;
            }
            if self.lu.eta_count() >= self.opts.refactor_every {
                self.refactor();
                self.compute_primal();
                fresh = true;
            }

            // phase costs
            let mut phase_one = false;
            for p in 0..self.m {
                let j = self.head[p];
                let c = if self.x[j] < self.lo[j] - tol_p {
                    -1.0
                } else if self.x[j] > self.hi[j] + tol_p {
                    1.0
                } else {
                    0.0
                };
                if c != 0.0 {
                    phase_one = true;
                }
                cb[p] = c;
            }
            if !phase_one {
                for p in 0..self.m {
                    cb[p] = self.cost[self.head[p]];
                }
            }
            y.copy_from_slice(&cb);
            self.lu.btran(&mut y, &mut self.scratch);

            // pricing
            let mut entering: Option<(usize, f64, f64)> = None; // (var, dir, score)
            for j in 0..n_total {
                let st = self.state[j];
                if st == VarState::Basic || self.lo[j] == self.hi[j] {
                    continue;
                }
                let cj = if phase_one { 0.0 } else { self.cost[j] };
                let mut d = cj;
                for &(i, a) in self.column(j) {
                    d -= a * y[i];
                }
                let dir = match st {
                    VarState::Lower if d < -tol_d => 1.0,
                    VarState::Upper if d > tol_d => -1.0,
                    VarState::Zero if d.abs() > tol_d => -d.signum(),
                    _ => continue,
                };
                let score = d.abs();
                let better = match entering {
                    None => true,
                    Some((_, _, s)) => !bland && score > s,
                };
                if better {
                    entering = Some((j, dir, score));
                    if bland {
                        break;
                    }
                }
            }

            let Some((q, dir, _)) = entering else {
                if !fresh {
                    self.refactor();
                    self.compute_primal();
                    fresh = true;
                    continue;
                }
                return if phase_one { LpStatus::Infeasible } else { LpStatus::Optimal };
            };

            // column of the entering variable in basis coordinates
            for v in alpha.iter_mut() {
                *v = 0.0;
            }
            for &(i, a) in self.column(q) {
                alpha[i] = a;
            }
            self.lu.ftran(&mut alpha, &mut self.scratch);

            // ratio test
            let ratio_of = |x: f64, lo: f64, hi: f64, rate: f64, relax: f64| -> Option<(f64, f64, bool)> {
                // returns (exact ratio, relaxed ratio, leaves at upper)
                if rate > 0.0 {
                    let target = if phase_one && x < lo - tol_p { lo } else { hi };
                    if !target.is_finite() {
                        return None;
                    }
                    let at_upper = target == hi;
                    Some(((target - x) / rate, (target - x + relax) / rate, at_upper))
                } else {
                    let target = if phase_one && x > hi + tol_p { hi } else { lo };
                    if !target.is_finite() {
                        return None;
                    }
                    let at_upper = target == hi;
                    Some(((target - x) / rate, (target - x - relax) / rate, at_upper))
                }
            };

            let mut t_relaxed = f64::INFINITY;
            for p in 0..self.m {
                let a = alpha[p];
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let j = self.head[p];
                let rate = -dir * a;
                let relax = if bland { 0.0 } else { tol_p };
                if let Some((_, r, _)) = ratio_of(self.x[j], self.lo[j], self.hi[j], rate, relax) {
                    t_relaxed = t_relaxed.min(r.max(0.0));
                }
            }
            let mut leave: Option<(usize, f64, bool)> = None; // (pos, ratio, at_upper)
            if t_relaxed.is_finite() {
                let mut best_piv = 0.0f64;
                let mut best_var = usize::MAX;
                for p in 0..self.m {
                    let a = alpha[p];
                    if a.abs() <= PIVOT_TOL {
                        continue;
                    }
                    let j = self.head[p];
                    let rate = -dir * a;
                    if let Some((r, _, at_upper)) = ratio_of(self.x[j], self.lo[j], self.hi[j], rate, 0.0) {
                        let r = r.max(0.0);
                        if r <= t_relaxed {
                            let take = if bland {
                                // textbook: smallest ratio, ties by variable index
                                match leave {
                                    None => true,
                                    Some((_, lr, _)) => r < lr || (r == lr && j < best_var),
                                }
                            } else {
                                a.abs() > best_piv
                            };
                            if take {
                                best_piv = a.abs();
                                best_var = j;
                                leave = Some((p, r, at_upper));
                            }
                        }
                    }
                }
            }

            let range = self.hi[q] - self.lo[q];
            let flip = range.is_finite() && leave.is_none_or(|(_, r, _)| range <= r);
            if flip {
                // bound flip of the entering variable
                let t = range;
                for p in 0..self.m {
                    if alpha[p] != 0.0 {
                        let j = self.head[p];
                        self.x[j] -= dir * alpha[p] * t;
                    }
                }
                self.state[q] = if dir > 0.0 { VarState::Upper } else { VarState::Lower };
                self.x[q] = self.nonbasic_value(q);
                self.iterations += 1;
                degenerate_run = 0;
                bland = false;
                fresh = false;
                continue;
            }

            let Some((p_leave, t, at_upper)) = leave else {
                if phase_one {
                    // cannot happen in exact arithmetic; start over from a clean factor
                    if !fresh {
                        self.refactor();
                        self.compute_primal();
                        fresh = true;
                        continue;
                    }
                    return LpStatus::IterationLimit;
                }
                return LpStatus::Unbounded;
            };
            if alpha[p_leave].abs() < 1e-7 && !fresh {
                // pivot looks unreliable: refresh the factor and retry
                self.refactor();
                self.compute_primal();
                fresh = true;
                continue;
            }

            // step
            if t > 0.0 {
                for p in 0..self.m {
                    if alpha[p] != 0.0 {
                        let j = self.head[p];
                        self.x[j] -= dir * alpha[p] * t;
                    }
                }
                self.x[q] += dir * t;
            }
            let leaving = self.head[p_leave];
            self.state[leaving] = if at_upper { VarState::Upper } else { VarState::Lower };
            if self.lo[leaving] == self.hi[leaving] {
                self.state[leaving] = VarState::Lower;
            }
            self.x[leaving] = self.nonbasic_value(leaving);
            self.pos_of[leaving] = usize::MAX;
            self.head[p_leave] = q;
            self.pos_of[q] = p_leave;
            self.state[q] = VarState::Basic;
            self.lu.update(p_leave, &alpha);
            self.iterations += 1;
            fresh = false;

            if t <= 1e-12 {
                degenerate_run += 1;
                if degenerate_run > self.opts.bland_after {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
                bland = false;
            }
        }
    }

    /// Current primal values of the structural variables in problem units.
    pub(crate) fn primal(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x[j] * self.col_scale[j]).collect()
    }

    /// Objective of the current point in the problem's own sense.
    pub(crate) fn objective(&self) -> f64 {
        let internal: f64 = (0..self.n).map(|j| self.cost[j] * self.x[j]).sum::<f64>() * self.obj_scale;
        self.offset + if self.negate { -internal } else { internal }
    }

    /// Duals of the rows and reduced costs of the structural variables, in
    /// problem units and the problem's own sense.
    pub(crate) fn duals(&mut self) -> (Vec<f64>, Vec<f64>) {
        let mut y: Vec<f64> = self.head.iter().map(|&j| self.cost[j]).collect();
        self.lu.btran(&mut y, &mut self.scratch);
        let sign = if self.negate { -1.0 } else { 1.0 };
        let mut d = vec![0.0f64; self.n];
        for (j, dj) in d.iter_mut().enumerate() {
            let mut v = self.cost[j];
            for &(i, a) in self.column(j) {
                v -= a * y[i];
            }
            if self.state[j] == VarState::Basic {
                v = 0.0;
            }
            *dj = sign * v * self.obj_scale / self.col_scale[j];
        }
        let duals = y
            .iter()
            .enumerate()
            .map(|(i, &yi)| sign * yi * self.row_scale[i] * self.obj_scale)
            .collect();
        (duals, d)
    }
}

fn scale_bound(b: f64, s: f64) -> f64 {
    if b.is_finite() {
        b * s
    } else {
        b
    }
}

/// Dual objective `sum_i y_i b_i + sum_j d_j * bound_j` where each reduced
/// cost is paired with the bound it prices. Reduced costs pointing at an
/// infinite bound are treated as zero (they are within tolerance at an
/// optimum).
pub(crate) fn dual_objective(lp: &LinearProgram, duals: &[f64], reduced: &[f64]) -> f64 {
    let mut obj = lp.offset;
    for (c, &y) in lp.constraints.iter().zip(duals) {
        obj += y * c.rhs;
    }
    let maximize = lp.sense == Sense::Maximize;
    for (v, &d) in lp.vars.iter().zip(reduced) {
        // minimization: d > 0 prices the lower bound; maximization flips
        let prices_lower = if maximize { d < 0.0 } else { d > 0.0 };
        let bound = if prices_lower { v.lower } else { v.upper };
        if bound.is_finite() && bound.abs() < HUGE {
            obj += d * bound;
        }
    }
    obj
}

pub(crate) fn solve(lp: &LinearProgram, opts: &SimplexOptions) -> LpSolution {
    let mut engine = Engine::new(lp, opts);
    let status = engine.run();
    finish(lp, &mut engine, status)
}

pub(crate) fn finish(lp: &LinearProgram, engine: &mut Engine, status: LpStatus) -> LpSolution {
    let x = engine.primal();
    let (duals, reduced_costs) = if status == LpStatus::Optimal {
        engine.duals()
    } else {
        (vec![0.0; lp.constraints.len()], vec![0.0; lp.vars.len()])
    };
    let objective = match status {
        LpStatus::Optimal => lp.objective_value(&x),
        LpStatus::Infeasible => match lp.sense {
            Sense::Minimize => f64::INFINITY,
            Sense::Maximize => f64::NEG_INFINITY,
        },
        LpStatus::Unbounded => match lp.sense {
            Sense::Minimize => f64::NEG_INFINITY,
            Sense::Maximize => f64::INFINITY,
        },
        LpStatus::IterationLimit => f64::NAN,
    };
    let dual_objective = if status == LpStatus::Optimal {
        dual_objective(lp, &duals, &reduced_costs)
    } else {
        f64::NAN
    };
    LpSolution {
        status,
        x,
        duals,
        reduced_costs,
        objective,
        dual_objective,
        iterations: engine.iterations,
    }
}
