//! Bounded-variable revised simplex.
//!
//! Every row `i` gets a logical variable `s_i = a_i x` whose bounds encode the
//! row sense, so the working system is `[A  -I] (x, s) = 0` with bounds on all
//! `n + m` columns. The engine keeps a basis, an LU factorization of it and
//! the current point. It offers a primal method (composite phase 1 followed
//! by phase 2, Harris ratio test, Bland's rule after a long run of degenerate
//! pivots) and a dual method used to reoptimize after bound changes.

use crate::lu::LuFactor;
use crate::problem::{LpProblem, Sense};

const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 100;
const BLAND_AFTER: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum VarState {
    Basic,
    Lower,
    Upper,
    /// Nonbasic free variable (held at its current value, normally zero).
    Free,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum LpOutcome {
    Optimal,
    Infeasible,
    Unbounded,
    /// Dual simplex stopped because the objective exceeded the cutoff.
    Cutoff,
    IterationLimit,
}

/// Compact copy of a basis used to warm start later solves.
#[derive(Clone, Debug)]
pub(crate) struct BasisSnapshot {
    head: Vec<u32>,
    state: Vec<VarState>,
}

/// Scaled standard-form copy of an [`LpProblem`].
#[derive(Clone, Debug)]
pub(crate) struct Model {
    m: usize,
    n: usize,
    col_start: Vec<usize>,
    col_row: Vec<usize>,
    col_val: Vec<f64>,
    row_start: Vec<usize>,
    row_col: Vec<usize>,
    row_val: Vec<f64>,
    cost: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    col_scale: Vec<f64>,
    row_scale: Vec<f64>,
    senses: Vec<Sense>,
    obj_scale: f64,
    obj_offset: f64,
}

fn pow2_round(x: f64) -> f64 {
    if !(x.is_finite() && x > 0.0) {
        return 1.0;
    }
    2f64.powi(x.log2().round() as i32)
}

impl Model {
    pub fn new(lp: &LpProblem) -> Model {
        let n = lp.num_vars();
        let m = lp.num_constraints();
        let rows = lp.constraints();

        // Geometric scaling passes followed by column equilibration.
        let mut row_scale = vec![1.0; m];
        let mut col_scale = vec![1.0; n];
        for _ in 0..4 {
            let mut cmin = vec![f64::INFINITY; n];
            let mut cmax = vec![0.0f64; n];
            for (i, row) in rows.iter().enumerate() {
                let mut rmin = f64::INFINITY;
                let mut rmax = 0.0f64;
                for &(v, a) in &row.coeffs {
                    let s = (a * col_scale[v.0]).abs();
                    rmin = rmin.min(s);
                    rmax = rmax.max(s);
                }
                if rmax > 0.0 {
                    row_scale[i] = pow2_round(1.0 / (rmin * rmax).sqrt());
                }
                for &(v, a) in &row.coeffs {
                    let s = (a * row_scale[i] * col_scale[v.0]).abs();
                    cmin[v.0] = cmin[v.0].min(s);
                    cmax[v.0] = cmax[v.0].max(s);
                }
            }
            for j in 0..n {
                if cmax[j] > 0.0 {
                    col_scale[j] *= pow2_round(1.0 / (cmin[j] * cmax[j]).sqrt());
                }
            }
        }
        {
            let mut cmax = vec![0.0f64; n];
            for (i, row) in rows.iter().enumerate() {
                for &(v, a) in &row.coeffs {
                    cmax[v.0] = cmax[v.0].max((a * row_scale[i] * col_scale[v.0]).abs());
                }
            }
            for j in 0..n {
                if cmax[j] > 0.0 {
                    col_scale[j] *= pow2_round(1.0 / cmax[j]);
                }
            }
        }

        let mut counts = vec![0usize; n];
        let mut row_start = vec![0usize; m + 1];
        let mut row_col = Vec::new();
        let mut row_val = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            for &(v, a) in &row.coeffs {
                counts[v.0] += 1;
                row_col.push(v.0);
                row_val.push(a * row_scale[i] * col_scale[v.0]);
            }
            row_start[i + 1] = row_col.len();
        }
        let mut col_start = vec![0usize; n + 1];
        for j in 0..n {
            col_start[j + 1] = col_start[j] + counts[j];
        }
        let mut fill = col_start.clone();
        let mut col_row = vec![0usize; row_col.len()];
        let mut col_val = vec![0.0; row_col.len()];
        for i in 0..m {
            for p in row_start[i]..row_start[i + 1] {
                let j = row_col[p];
                col_row[fill[j]] = i;
                col_val[fill[j]] = row_val[p];
                fill[j] += 1;
            }
        }

        let cmax = (0..n).fold(0.0f64, |acc, j| {
            acc.max((lp.cost()[j] * col_scale[j]).abs())
        });
        let obj_scale = if cmax > 0.0 {
            pow2_round(1.0 / cmax)
        } else {
            1.0
        };

        let mut cost = vec![0.0; n + m];
        let mut lb = vec![0.0; n + m];
        let mut ub = vec![0.0; n + m];
        for j in 0..n {
            cost[j] = lp.cost()[j] * col_scale[j] * obj_scale;
            lb[j] = lp.lower()[j] / col_scale[j];
            ub[j] = lp.upper()[j] / col_scale[j];
        }
        for (i, row) in rows.iter().enumerate() {
            let r = row.rhs * row_scale[i];
            let (lo, hi) = match row.sense {
                Sense::Le => (f64::NEG_INFINITY, r),
                Sense::Ge => (r, f64::INFINITY),
                Sense::Eq => (r, r),
            };
            lb[n + i] = lo;
            ub[n + i] = hi;
        }

        Model {
            m,
            n,
            col_start,
            col_row,
            col_val,
            row_start,
            row_col,
            row_val,
            cost,
            lb,
            ub,
            col_scale,
            row_scale,
            senses: rows.iter().map(|r| r.sense).collect(),
            obj_scale,
            obj_offset: lp.objective_offset(),
        }
    }
}

pub(crate) struct Simplex {
    model: Model,
    lb: Vec<f64>,
    ub: Vec<f64>,
    x: Vec<f64>,
    d: Vec<f64>,
    head: Vec<usize>,
    state: Vec<VarState>,
    pos: Vec<usize>,
    lu: LuFactor,
    factored: bool,
    pub iterations: usize,
    iteration_limit: usize,
    // scratch
    col: Vec<f64>,
    rowvec: Vec<f64>,
    alpha_row: Vec<f64>,
    touched: Vec<usize>,
}

impl Simplex {
    pub fn new(model: Model) -> Simplex {
        let n = model.n;
        let m = model.m;
        let total = n + m;
        let lb = model.lb.clone();
        let ub = model.ub.clone();
        let mut state = vec![VarState::Basic; total];
        let mut x = vec![0.0; total];
        for j in 0..n {
            let (s, v) = nonbasic_default(lb[j], ub[j]);
            state[j] = s;
            x[j] = v;
        }
        let head: Vec<usize> = (n..total).collect();
        let mut pos = vec![usize::MAX; total];
        for (k, &j) in head.iter().enumerate() {
            pos[j] = k;
        }
        let iteration_limit = 20 * (n + m) + 20_000;
        Simplex {
            model,
            lb,
            ub,
            x,
            d: vec![0.0; total],
            head,
            state,
            pos,
            lu: LuFactor::default(),
            factored: false,
            iterations: 0,
            iteration_limit,
            col: vec![0.0; m],
            rowvec: vec![0.0; m],
            alpha_row: vec![0.0; total],
            touched: Vec::new(),
        }
    }

    fn m(&self) -> usize {
        self.model.m
    }

    fn n(&self) -> usize {
        self.model.n
    }

    /// Replaces the bounds of structural `j` (given in unscaled units).
    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        let s = self.model.col_scale[j];
        self.lb[j] = lo / s;
        self.ub[j] = hi / s;
        if self.state[j] != VarState::Basic {
            let (st, v) = match self.state[j] {
                VarState::Upper if self.ub[j].is_finite() => (VarState::Upper, self.ub[j]),
                _ => nonbasic_default(self.lb[j], self.ub[j]),
            };
            self.state[j] = st;
            self.x[j] = v;
        }
    }

    /// Replaces the right-hand side of row `i` (unscaled units).
    pub fn set_rhs(&mut self, i: usize, rhs: f64) {
        let r = rhs * self.model.row_scale[i];
        let (lo, hi) = match self.model.senses[i] {
            Sense::Le => (f64::NEG_INFINITY, r),
            Sense::Ge => (r, f64::INFINITY),
            Sense::Eq => (r, r),
        };
        let j = self.model.n + i;
        self.lb[j] = lo;
        self.ub[j] = hi;
        if self.state[j] != VarState::Basic {
            let (st, v) = match self.state[j] {
                VarState::Upper if hi.is_finite() => (VarState::Upper, hi),
                _ => nonbasic_default(lo, hi),
            };
            self.state[j] = st;
            self.x[j] = v;
        }
    }

    pub fn snapshot(&self) -> BasisSnapshot {
        BasisSnapshot {
            head: self.head.iter().map(|&j| j as u32).collect(),
            state: self.state.clone(),
        }
    }

    pub fn restore(&mut self, snap: &BasisSnapshot) {
        self.head = snap.head.iter().map(|&j| j as usize).collect();
        self.state = snap.state.clone();
        for p in self.pos.iter_mut() {
            *p = usize::MAX;
        }
        for (k, &j) in self.head.iter().enumerate() {
            self.pos[j] = k;
        }
        for j in 0..self.state.len() {
            match self.state[j] {
                VarState::Basic => {}
                VarState::Lower if self.lb[j].is_finite() => self.x[j] = self.lb[j],
                VarState::Upper if self.ub[j].is_finite() => self.x[j] = self.ub[j],
                VarState::Free if !self.lb[j].is_finite() && !self.ub[j].is_finite() => {
                    self.x[j] = 0.0
                }
                _ => {
                    let (s, v) = nonbasic_default(self.lb[j], self.ub[j]);
                    self.state[j] = s;
                    self.x[j] = v;
                }
            }
        }
        self.factored = false;
    }

    /// Structural values in unscaled units.
    pub fn values(&self) -> Vec<f64> {
        (0..self.n())
            .map(|j| self.x[j] * self.model.col_scale[j])
            .collect()
    }

    /// Objective of the current point in unscaled units.
    pub fn objective(&self) -> f64 {
        let scaled: f64 = (0..self.n()).map(|j| self.model.cost[j] * self.x[j]).sum();
        scaled / self.model.obj_scale + self.model.obj_offset
    }

    /// Row multipliers (Lagrange multipliers of `a_i x = s_i`) in unscaled units.
    pub fn duals(&mut self) -> Vec<f64> {
        let m = self.m();
        let mut y = vec![0.0; m];
        for k in 0..m {
            y[k] = self.model.cost[self.head[k]];
        }
        self.lu.btran(&mut y);
        (0..m)
            .map(|i| y[i] * self.model.row_scale[i] / self.model.obj_scale)
            .collect()
    }

    fn load_column(&self, j: usize, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = 0.0;
        }
        let n = self.n();
        if j < n {
            for p in self.model.col_start[j]..self.model.col_start[j + 1] {
                out[self.model.col_row[p]] = self.model.col_val[p];
            }
        } else {
            out[j - n] = -1.0;
        }
    }

    fn column_dot(&self, j: usize, y: &[f64]) -> f64 {
        let n = self.n();
        if j < n {
            let mut s = 0.0;
            for p in self.model.col_start[j]..self.model.col_start[j + 1] {
                s += self.model.col_val[p] * y[self.model.col_row[p]];
            }
            s
        } else {
            -y[j - n]
        }
    }

    fn refactor(&mut self) {
        let m = self.m();
        let n = self.n();
        loop {
            let mut start = Vec::with_capacity(m + 1);
            let mut rows = Vec::new();
            let mut vals = Vec::new();
            start.push(0);
            for &j in &self.head {
                if j < n {
                    for p in self.model.col_start[j]..self.model.col_start[j + 1] {
                        rows.push(self.model.col_row[p]);
                        vals.push(self.model.col_val[p]);
                    }
                } else {
                    rows.push(j - n);
                    vals.push(-1.0);
                }
                start.push(rows.len());
            }
            match LuFactor::factorize(m, &start, &rows, &vals) {
                Ok(lu) => {
                    self.lu = lu;
                    self.factored = true;
                    return;
                }
                Err(sing) => {
                    log::debug!(
                        "repairing singular basis ({} columns)",
                        sing.positions.len()
                    );
                    for (&k, &r) in sing.positions.iter().zip(&sing.rows) {
                        let out = self.head[k];
                        let (s, v) = nonbasic_default(self.lb[out], self.ub[out]);
                        self.state[out] = s;
                        self.x[out] = if s == VarState::Free { 0.0 } else { v };
                        self.pos[out] = usize::MAX;
                        let logical = n + r;
                        self.head[k] = logical;
                        self.state[logical] = VarState::Basic;
                        self.pos[logical] = k;
                    }
                }
            }
        }
    }

    fn compute_primal(&mut self) {
        let m = self.m();
        let n = self.n();
        let mut rhs = vec![0.0; m];
        for j in 0..n + m {
            if self.state[j] == VarState::Basic {
                continue;
            }
            let xj = self.x[j];
            if xj == 0.0 {
                continue;
            }
            if j < n {
                for p in self.model.col_start[j]..self.model.col_start[j + 1] {
                    rhs[self.model.col_row[p]] -= self.model.col_val[p] * xj;
                }
            } else {
                rhs[j - n] += xj;
            }
        }
        self.lu.ftran(&mut rhs);
        for k in 0..m {
            self.x[self.head[k]] = rhs[k];
        }
    }

    /// Reduced costs for `cost` (basic entries zero).
    fn compute_reduced(&mut self, cost: &[f64]) {
        let m = self.m();
        let mut y = vec![0.0; m];
        for k in 0..m {
            y[k] = cost[self.head[k]];
        }
        self.lu.btran(&mut y);
        for j in 0..self.state.len() {
            self.d[j] = if self.state[j] == VarState::Basic {
                0.0
            } else {
                cost[j] - self.column_dot(j, &y)
            };
        }
    }

    fn ensure_factored(&mut self) {
        if !self.factored || self.lu.num_etas() >= REFACTOR_EVERY {
            self.refactor();
            self.compute_primal();
        }
    }

    fn primal_infeasibility(&self, k: usize) -> f64 {
        let j = self.head[k];
        let x = self.x[j];
        if x < self.lb[j] - feas_tol(self.lb[j]) {
            self.lb[j] - x
        } else if x > self.ub[j] + feas_tol(self.ub[j]) {
            x - self.ub[j]
        } else {
            0.0
        }
    }

    fn pivot(&mut self, r: usize, q: usize, leaving_state: VarState, leaving_value: f64) {
        let out = self.head[r];
        self.lu.push_eta(r, &self.col);
        self.head[r] = q;
        self.pos[q] = r;
        self.state[q] = VarState::Basic;
        self.pos[out] = usize::MAX;
        self.state[out] = leaving_state;
        self.x[out] = leaving_value;
    }

    /// Primal simplex from the current basis.
    pub fn solve_primal(&mut self) -> LpOutcome {
        let limit = self.iterations + self.iteration_limit;
        let total = self.n() + self.m();
        let m = self.m();
        self.refactor();
        self.compute_primal();
        let mut phase1_cost = vec![0.0; total];
        let mut degenerate_run = 0usize;
        let mut bland = false;
        loop {
            if self.iterations >= limit {
                return LpOutcome::IterationLimit;
            }
            self.ensure_factored();

            let mut infeasible = false;
            for c in phase1_cost.iter_mut() {
                *c = 0.0;
            }
            for k in 0..m {
                let j = self.head[k];
                let x = self.x[j];
                if x < self.lb[j] - feas_tol(self.lb[j]) {
                    phase1_cost[j] = -1.0;
                    infeasible = true;
                } else if x > self.ub[j] + feas_tol(self.ub[j]) {
                    phase1_cost[j] = 1.0;
                    infeasible = true;
                }
            }
            if infeasible {
                self.compute_reduced(&phase1_cost);
            } else {
                let cost = std::mem::take(&mut self.model.cost);
                self.compute_reduced(&cost);
                self.model.cost = cost;
            }

            // Pricing.
            let mut entering: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for j in 0..total {
                let dir = match self.state[j] {
                    VarState::Basic => continue,
                    _ if self.lb[j] == self.ub[j] => continue,
                    VarState::Lower if self.d[j] < -DUAL_TOL => 1.0,
                    VarState::Upper if self.d[j] > DUAL_TOL => -1.0,
                    VarState::Free if self.d[j].abs() > DUAL_TOL => -self.d[j].signum(),
                    _ => continue,
                };
                if bland {
                    entering = Some((j, dir));
                    break;
                }
                let score = self.d[j].abs();
                if score > best {
                    best = score;
                    entering = Some((j, dir));
                }
            }
            let Some((q, dir)) = entering else {
                if infeasible {
                    return LpOutcome::Infeasible;
                }
                return LpOutcome::Optimal;
            };

            let mut col = std::mem::take(&mut self.col);
            self.load_column(q, &mut col);
            self.lu.ftran(&mut col);
            self.col = col;

            // Harris two-pass ratio test. Each candidate leaves at `target`.
            let mut theta_max = f64::INFINITY;
            for k in 0..m {
                let a = self.col[k];
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let rate = -dir * a;
                if let Some((_, dist)) = self.ratio_target(k, rate) {
                    let relaxed = (dist + feas_tol(dist)) / rate.abs();
                    theta_max = theta_max.min(relaxed);
                }
            }
            let flip = self.ub[q] - self.lb[q];
            let mut leave: Option<(usize, f64, f64)> = None; // (pos, theta, target)
            let mut best_pivot = 0.0;
            for k in 0..m {
                let a = self.col[k];
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let rate = -dir * a;
                if let Some((target, dist)) = self.ratio_target(k, rate) {
                    let ratio = (dist / rate.abs()).max(0.0);
                    if bland {
                        let better = match leave {
                            None => true,
                            Some((kk, th, _)) => {
                                ratio < th - 1e-12
                                    || (ratio <= th + 1e-12 && self.head[k] < self.head[kk])
                            }
                        };
                        if better {
                            leave = Some((k, ratio, target));
                        }
                    } else if ratio <= theta_max && a.abs() > best_pivot {
                        best_pivot = a.abs();
                        leave = Some((k, ratio, target));
                    }
                }
            }

            self.iterations += 1;
            let theta = leave.map(|l| l.1).unwrap_or(f64::INFINITY);
            if flip.is_finite() && flip <= theta {
                // Bound flip of the entering variable, no basis change.
                let step = dir * flip;
                self.x[q] += step;
                for k in 0..m {
                    let a = self.col[k];
                    if a != 0.0 {
                        self.x[self.head[k]] -= a * step;
                    }
                }
                self.state[q] = if dir > 0.0 {
                    VarState::Upper
                } else {
                    VarState::Lower
                };
                self.x[q] = if dir > 0.0 { self.ub[q] } else { self.lb[q] };
                degenerate_run = 0;
                bland = false;
                continue;
            }
            let Some((r, theta, target)) = leave else {
                if infeasible {
                    // Cannot happen for a consistent phase-1 pricing; refactor and retry.
                    self.factored = false;
                    continue;
                }
                return LpOutcome::Unbounded;
            };
            let step = dir * theta;
            if step != 0.0 {
                for k in 0..m {
                    let a = self.col[k];
                    if a != 0.0 {
                        self.x[self.head[k]] -= a * step;
                    }
                }
                self.x[q] += step;
            }
            let out = self.head[r];
            let st = if target == self.lb[out] {
                VarState::Lower
            } else {
                VarState::Upper
            };
            self.pivot(r, q, st, target);

            if theta <= 1e-12 {
                degenerate_run += 1;
                if degenerate_run >= BLAND_AFTER {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
                bland = false;
            }
        }
    }

    /// For basic position `k` moving at `rate` per unit step, the bound it
    /// would stop at and the distance to it.
    fn ratio_target(&self, k: usize, rate: f64) -> Option<(f64, f64)> {
        let j = self.head[k];
        let x = self.x[j];
        let (lo, hi) = (self.lb[j], self.ub[j]);
        let below = x < lo - feas_tol(lo);
        let above = x > hi + feas_tol(hi);
        if rate > 0.0 {
            if below {
                Some((lo, lo - x))
            } else if above || !hi.is_finite() {
                None
            } else {
                Some((hi, (hi - x).max(0.0)))
            }
        } else if above {
            Some((hi, x - hi))
        } else if below || !lo.is_finite() {
            None
        } else {
            Some((lo, (x - lo).max(0.0)))
        }
    }

    /// Dual simplex from the current basis, which must be dual feasible
    /// (boxed variables are flipped to restore it). Falls back to the primal
    /// method when dual feasibility cannot be established. Stops early when
    /// the objective exceeds `cutoff` (unscaled).
    pub fn solve_dual(&mut self, cutoff: f64) -> LpOutcome {
        let limit = self.iterations + self.iteration_limit;
        let m = self.m();
        let total = self.n() + m;
        self.refactor();
        self.compute_primal();
        let cost = std::mem::take(&mut self.model.cost);
        self.compute_reduced(&cost);
        self.model.cost = cost;

        // Dual feasibility, flipping boxed variables where possible.
        let mut flipped = false;
        for j in 0..total {
            if self.state[j] == VarState::Basic || self.lb[j] == self.ub[j] {
                continue;
            }
            let dj = self.d[j];
            let ok = match self.state[j] {
                VarState::Lower => dj >= -DUAL_TOL,
                VarState::Upper => dj <= DUAL_TOL,
                VarState::Free => dj.abs() <= DUAL_TOL,
                VarState::Basic => true,
            };
            if ok {
                continue;
            }
            if self.lb[j].is_finite() && self.ub[j].is_finite() {
                if dj < 0.0 {
                    self.state[j] = VarState::Upper;
                    self.x[j] = self.ub[j];
                } else {
                    self.state[j] = VarState::Lower;
                    self.x[j] = self.lb[j];
                }
                flipped = true;
            } else {
                return self.solve_primal();
            }
        }
        if flipped {
            self.compute_primal();
        }

        let scaled_cutoff = (cutoff - self.model.obj_offset) * self.model.obj_scale;
        let mut since_check = 0usize;
        loop {
            if self.iterations >= limit {
                return LpOutcome::IterationLimit;
            }
            if !self.factored || self.lu.num_etas() >= REFACTOR_EVERY {
                self.refactor();
                self.compute_primal();
                let cost = std::mem::take(&mut self.model.cost);
                self.compute_reduced(&cost);
                self.model.cost = cost;
            }
            since_check += 1;
            if cutoff.is_finite() && since_check >= 5 {
                since_check = 0;
                let obj: f64 = (0..total).map(|j| self.model.cost[j] * self.x[j]).sum();
                if obj > scaled_cutoff + 1e-9 * (1.0 + scaled_cutoff.abs()) {
                    return LpOutcome::Cutoff;
                }
            }

            // Leaving row: largest primal infeasibility.
            let mut r = usize::MAX;
            let mut worst = 0.0;
            for k in 0..m {
                let inf = self.primal_infeasibility(k);
                if inf > worst {
                    worst = inf;
                    r = k;
                }
            }
            if r == usize::MAX {
                // Primal feasible; confirm dual feasibility with fresh reduced costs.
                let cost = std::mem::take(&mut self.model.cost);
                self.compute_reduced(&cost);
                self.model.cost = cost;
                let dual_ok = (0..total).all(|j| {
                    if self.state[j] == VarState::Basic || self.lb[j] == self.ub[j] {
                        return true;
                    }
                    match self.state[j] {
                        VarState::Lower => self.d[j] >= -DUAL_TOL,
                        VarState::Upper => self.d[j] <= DUAL_TOL,
                        VarState::Free => self.d[j].abs() <= DUAL_TOL,
                        VarState::Basic => true,
                    }
                });
                if dual_ok {
                    return LpOutcome::Optimal;
                }
                return self.solve_primal();
            }
            let out = self.head[r];
            let x_r = self.x[out];
            let (target, delta) = if x_r < self.lb[out] {
                (self.lb[out], x_r - self.lb[out])
            } else {
                (self.ub[out], x_r - self.ub[out])
            };

            // Pivot row alpha_r = e_r' B^-1 [A -I].
            for v in self.rowvec.iter_mut() {
                *v = 0.0;
            }
            self.rowvec[r] = 1.0;
            let mut rho = std::mem::take(&mut self.rowvec);
            self.lu.btran(&mut rho);
            let n = self.n();
            for &j in &self.touched {
                self.alpha_row[j] = 0.0;
            }
            self.touched.clear();
            for i in 0..m {
                let ri = rho[i];
                if ri == 0.0 {
                    continue;
                }
                for p in self.model.row_start[i]..self.model.row_start[i + 1] {
                    let j = self.model.row_col[p];
                    if self.alpha_row[j] == 0.0 {
                        self.touched.push(j);
                    }
                    self.alpha_row[j] += ri * self.model.row_val[p];
                }
                let lj = n + i;
                if self.alpha_row[lj] == 0.0 {
                    self.touched.push(lj);
                }
                self.alpha_row[lj] -= ri;
            }
            self.rowvec = rho;

            // Ratio test (Harris).
            let mut theta_max = f64::INFINITY;
            for &j in &self.touched {
                if let Some(ratio) = self.dual_ratio(j, delta, true) {
                    theta_max = theta_max.min(ratio);
                }
            }
            let mut entering = usize::MAX;
            let mut best_pivot = 0.0;
            for &j in &self.touched {
                if let Some(ratio) = self.dual_ratio(j, delta, false) {
                    if ratio <= theta_max {
                        let a = self.alpha_row[j].abs();
                        if a > best_pivot {
                            best_pivot = a;
                            entering = j;
                        }
                    }
                }
            }
            self.iterations += 1;
            if entering == usize::MAX {
                return LpOutcome::Infeasible;
            }
            let q = entering;
            let theta_d = self.d[q] / self.alpha_row[q];
            for &j in &self.touched {
                if self.state[j] != VarState::Basic {
                    self.d[j] -= theta_d * self.alpha_row[j];
                }
            }
            self.d[q] = 0.0;
            self.d[out] = -theta_d;

            let mut col = std::mem::take(&mut self.col);
            self.load_column(q, &mut col);
            self.lu.ftran(&mut col);
            self.col = col;
            let a_rq = self.col[r];
            if (a_rq - self.alpha_row[q]).abs() > 1e-7 * (1.0 + a_rq.abs())
                || a_rq.abs() <= PIVOT_TOL
            {
                // Inconsistent pivot; refactor and try again from scratch.
                self.factored = false;
                if a_rq.abs() <= PIVOT_TOL {
                    continue;
                }
            }
            let step = delta / a_rq;
            for k in 0..m {
                let a = self.col[k];
                if a != 0.0 {
                    self.x[self.head[k]] -= a * step;
                }
            }
            self.x[q] += step;
            let st = if target == self.lb[out] {
                VarState::Lower
            } else {
                VarState::Upper
            };
            self.pivot(r, q, st, target);
        }
    }

    fn dual_ratio(&self, j: usize, delta: f64, relaxed: bool) -> Option<f64> {
        if self.state[j] == VarState::Basic || self.lb[j] == self.ub[j] {
            return None;
        }
        let a = self.alpha_row[j];
        if a.abs() <= PIVOT_TOL {
            return None;
        }
        // x_r changes by -a * dx_j; it must move toward its violated bound.
        let eligible = match self.state[j] {
            VarState::Lower => (delta < 0.0 && a < 0.0) || (delta > 0.0 && a > 0.0),
            VarState::Upper => (delta < 0.0 && a > 0.0) || (delta > 0.0 && a < 0.0),
            VarState::Free => true,
            VarState::Basic => false,
        };
        if !eligible {
            return None;
        }
        let dj = self.d[j].abs();
        Some(if relaxed {
            (dj + DUAL_TOL) / a.abs()
        } else {
            dj / a.abs()
        })
    }
}

fn feas_tol(bound: f64) -> f64 {
    if bound.is_finite() {
        PRIMAL_TOL * (1.0 + bound.abs())
    } else {
        PRIMAL_TOL
    }
}

fn nonbasic_default(lo: f64, hi: f64) -> (VarState, f64) {
    if lo.is_finite() {
        (VarState::Lower, lo)
    } else if hi.is_finite() {
        (VarState::Upper, hi)
    } else {
        (VarState::Free, 0.0)
    }
}
