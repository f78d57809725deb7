//! Two-phase bounded-variable primal simplex on a dense basis inverse.

use crate::form::{Sense, StandardForm};

const PIV_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 50;
/// Consecutive degenerate pivots before switching to Bland's rule.
const STALL_LIMIT: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Iteration limit or a singular basis; the point is not trustworthy.
    Failed,
}

#[derive(Debug, Clone)]
pub struct LpOptions {
    pub max_iter: usize,
    /// Record one line per pivot in [`LpResult::trace`].
    pub trace: bool,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions { max_iter: 200_000, trace: false }
    }
}

#[derive(Debug, Clone)]
pub struct LpResult {
    pub status: LpStatus,
    pub objective: f64,
    pub x: Vec<f64>,
    /// One multiplier per row (sign convention: `c - Aᵀy` are the reduced costs).
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
    pub trace: Vec<String>,
}

impl LpResult {
    fn empty(status: LpStatus, n: usize, m: usize) -> Self {
        LpResult {
            status,
            objective: f64::NAN,
            x: vec![0.0; n],
            duals: vec![0.0; m],
            reduced_costs: vec![0.0; n],
            iterations: 0,
            trace: Vec::new(),
        }
    }

    /// Dual objective `b·y + Σ_j (lb_j·max(d_j,0) + ub_j·min(d_j,0))`,
    /// recomputed from the duals alone. Returns `-inf` if a reduced cost
    /// points at an infinite bound.
    pub fn dual_objective(&self, sf: &StandardForm) -> f64 {
        let n = sf.num_vars();
        let mut d = sf.obj.clone();
        let mut val = sf.obj_offset;
        for (i, r) in sf.rows.iter().enumerate() {
            val += r.rhs * self.duals[i];
            for &(j, a) in &r.coefs {
                d[j] -= a * self.duals[i];
            }
        }
        for j in 0..n {
            if d[j] > 0.0 {
                val += if sf.lb[j].is_finite() { d[j] * sf.lb[j] } else if d[j] > 1e-9 { f64::NEG_INFINITY } else { 0.0 };
            } else if d[j] < 0.0 {
                val += if sf.ub[j].is_finite() { d[j] * sf.ub[j] } else if d[j] < -1e-9 { f64::NEG_INFINITY } else { 0.0 };
            }
        }
        val
    }

    /// Largest complementary-slackness product over rows and columns.
    pub fn complementarity(&self, sf: &StandardForm) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, r) in sf.rows.iter().enumerate() {
            let slack = r.rhs - r.activity(&self.x);
            worst = worst.max((slack * self.duals[i]).abs());
        }
        for j in 0..sf.num_vars() {
            let d = self.reduced_costs[j];
            let gap = if d > 0.0 { self.x[j] - sf.lb[j] } else { sf.ub[j] - self.x[j] };
            if gap.is_finite() {
                worst = worst.max((gap * d).abs());
            }
        }
        worst
    }
}

/// Solves the LP relaxation of `sf` (integrality flags are ignored).
pub fn solve_lp(sf: &StandardForm, opts: &LpOptions) -> LpResult {
    solve_lp_with_bounds(sf, &sf.lb, &sf.ub, opts)
}

pub(crate) fn solve_lp_with_bounds(sf: &StandardForm, lb: &[f64], ub: &[f64], opts: &LpOptions) -> LpResult {
    let n = sf.num_vars();
    let m = sf.num_rows();
    if (0..n).any(|j| lb[j] > ub[j] + 1e-12) {
        return LpResult::empty(LpStatus::Infeasible, n, m);
    }
    let mut lp = Tableau::new(sf, lb, ub, opts.trace);

    // Phase 1: drive the artificials to zero.
    match lp.run(opts.max_iter) {
        Outcome::Optimal => {}
        Outcome::Unbounded | Outcome::Failed => return lp.finish(sf, LpStatus::Failed),
    }
    let infeas: f64 = (0..m).map(|i| lp.x[lp.art(i)]).sum();
    let scale = 1.0 + sf.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
    if infeas > 1e-7 * scale {
        return lp.finish(sf, LpStatus::Infeasible);
    }
    lp.expel_artificials();

    // Phase 2.
    lp.cost = vec![0.0; lp.ncols];
    lp.cost[..n].copy_from_slice(&sf.obj);
    let status = match lp.run(opts.max_iter) {
        Outcome::Optimal => LpStatus::Optimal,
        Outcome::Unbounded => LpStatus::Unbounded,
        Outcome::Failed => LpStatus::Failed,
    };
    lp.finish(sf, status)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarState {
    Basic(usize),
    Lower,
    Upper,
    /// Nonbasic free column resting at zero.
    Zero,
}

enum Outcome {
    Optimal,
    Unbounded,
    Failed,
}

struct Tableau {
    m: usize,
    n: usize,
    ncols: usize,
    cols: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    binv: Vec<f64>,
    since_refactor: usize,
    iterations: usize,
    trace: Option<Vec<String>>,
}

impl Tableau {
    fn slack(&self, i: usize) -> usize {
        self.n + i
    }

    fn art(&self, i: usize) -> usize {
        self.n + self.m + i
    }

    fn new(sf: &StandardForm, lb: &[f64], ub: &[f64], trace: bool) -> Tableau {
        let n = sf.num_vars();
        let m = sf.num_rows();
        let ncols = n + 2 * m;
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ncols];
        for (i, r) in sf.rows.iter().enumerate() {
            for &(j, a) in &r.coefs {
                cols[j].push((i, a));
            }
        }
        let mut tl = Tableau {
            m,
            n,
            ncols,
            cols,
            b: sf.rows.iter().map(|r| r.rhs).collect(),
            lb: vec![0.0; ncols],
            ub: vec![0.0; ncols],
            cost: vec![0.0; ncols],
            x: vec![0.0; ncols],
            state: vec![VarState::Lower; ncols],
            basis: vec![0; m],
            binv: vec![0.0; m * m],
            since_refactor: 0,
            iterations: 0,
            trace: if trace { Some(Vec::new()) } else { None },
        };
        for j in 0..n {
            tl.lb[j] = lb[j];
            tl.ub[j] = ub[j];
            let (st, v) = if lb[j].is_finite() {
                (VarState::Lower, lb[j])
            } else if ub[j].is_finite() {
                (VarState::Upper, ub[j])
            } else {
                (VarState::Zero, 0.0)
            };
            tl.state[j] = st;
            tl.x[j] = v;
        }
        let mut resid = tl.b.clone();
        for j in 0..n {
            if tl.x[j] != 0.0 {
                for &(i, a) in &tl.cols[j] {
                    resid[i] -= a * tl.x[j];
                }
            }
        }
        for (i, r) in sf.rows.iter().enumerate() {
            let s = tl.slack(i);
            let a = tl.art(i);
            tl.cols[s].push((i, 1.0));
            let (slb, sub) = match r.sense {
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            tl.lb[s] = slb;
            tl.ub[s] = sub;
            let slack_ok = match r.sense {
                Sense::Le => resid[i] >= 0.0,
                Sense::Ge => resid[i] <= 0.0,
                Sense::Eq => false,
            };
            if slack_ok {
                tl.cols[a].push((i, 1.0));
                tl.state[s] = VarState::Basic(i);
                tl.x[s] = resid[i];
                tl.basis[i] = s;
                tl.binv[i * m + i] = 1.0;
                // artificial unused: fixed at zero
                tl.state[a] = VarState::Lower;
            } else {
                let sign = if resid[i] < 0.0 { -1.0 } else { 1.0 };
                tl.cols[a].push((i, sign));
                tl.ub[a] = f64::INFINITY;
                tl.cost[a] = 1.0;
                tl.state[a] = VarState::Basic(i);
                tl.x[a] = resid[i].abs();
                tl.basis[i] = a;
                tl.binv[i * m + i] = sign;
                tl.state[s] = if r.sense == Sense::Ge { VarState::Upper } else { VarState::Lower };
            }
        }
        tl
    }

    fn log(&mut self, line: impl FnOnce() -> String) {
        if let Some(t) = self.trace.as_mut() {
            t.push(line());
        }
    }

    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for i in 0..m {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yj, bij) in y.iter_mut().zip(row) {
                    *yj += cb * bij;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, y: &[f64]) -> f64 {
        self.cost[j] - self.cols[j].iter().map(|&(i, a)| y[i] * a).sum::<f64>()
    }

    fn column(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        for &(k, a) in &self.cols[j] {
            for i in 0..m {
                alpha[i] += self.binv[i * m + k] * a;
            }
        }
        alpha
    }

    fn eligible(&self, j: usize, d: f64) -> bool {
        match self.state[j] {
            VarState::Basic(_) => false,
            _ if self.ub[j] - self.lb[j] <= 0.0 => false,
            VarState::Lower => d < -OPT_TOL,
            VarState::Upper => d > OPT_TOL,
            VarState::Zero => d.abs() > OPT_TOL,
        }
    }

    fn run(&mut self, max_iter: usize) -> Outcome {
        let mut stalled = 0usize;
        loop {
            if self.iterations >= max_iter {
                return Outcome::Failed;
            }
            let bland = stalled >= STALL_LIMIT;
            let y = self.duals();
            let mut enter: Option<(usize, f64)> = None;
            for j in 0..self.ncols {
                if matches!(self.state[j], VarState::Basic(_)) {
                    continue;
                }
                let d = self.reduced_cost(j, &y);
                if !self.eligible(j, d) {
                    continue;
                }
                match enter {
                    None => enter = Some((j, d)),
                    Some((_, best)) if !bland && d.abs() > best.abs() => enter = Some((j, d)),
                    _ => {}
                }
                if bland {
                    break;
                }
            }
            let Some((q, dq)) = enter else {
                return Outcome::Optimal;
            };
            let dir = if dq < 0.0 { 1.0 } else { -1.0 };
            let alpha = self.column(q);

            let mut t_best = f64::INFINITY;
            let mut leave: Option<usize> = None;
            for i in 0..self.m {
                let rate = -dir * alpha[i];
                if rate.abs() <= PIV_TOL {
                    continue;
                }
                let bv = self.basis[i];
                let lim = if rate < 0.0 {
                    (self.x[bv] - self.lb[bv]) / -rate
                } else {
                    (self.ub[bv] - self.x[bv]) / rate
                };
                let lim = lim.max(0.0);
                let better = match leave {
                    None => lim < f64::INFINITY,
                    Some(l) => lim < t_best - 1e-12 || (lim <= t_best + 1e-12 && bv < self.basis[l]),
                };
                if better {
                    t_best = lim;
                    leave = Some(i);
                }
            }
            let t_flip = self.ub[q] - self.lb[q];
            self.iterations += 1;
            if t_flip <= t_best {
                if !t_flip.is_finite() {
                    return Outcome::Unbounded;
                }
                // bound flip, basis unchanged
                for i in 0..self.m {
                    let bv = self.basis[i];
                    self.x[bv] -= dir * t_flip * alpha[i];
                }
                let (st, v) = if dir > 0.0 { (VarState::Upper, self.ub[q]) } else { (VarState::Lower, self.lb[q]) };
                self.state[q] = st;
                self.x[q] = v;
                stalled = 0;
                self.log(|| format!("flip {q} to {v}"));
                continue;
            }
            let r = leave.expect("finite ratio implies a leaving row");
            let t = t_best;
            if t <= 1e-12 {
                stalled += 1;
            } else {
                stalled = 0;
            }
            for i in 0..self.m {
                let bv = self.basis[i];
                self.x[bv] -= dir * t * alpha[i];
            }
            self.x[q] += dir * t;
            let out = self.basis[r];
            let rate = -dir * alpha[r];
            if rate < 0.0 {
                self.state[out] = VarState::Lower;
                self.x[out] = self.lb[out];
            } else {
                self.state[out] = VarState::Upper;
                self.x[out] = self.ub[out];
            }
            let it = self.iterations;
            self.log(|| format!("iter {it}: enter {q} leave {out} (row {r}) step {t:.6e}"));
            self.pivot(r, q, &alpha);
            if self.since_refactor >= REFACTOR_EVERY && !self.refactor() {
                return Outcome::Failed;
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize, alpha: &[f64]) {
        let m = self.m;
        let piv = alpha[r];
        for k in 0..m {
            self.binv[r * m + k] /= piv;
        }
        for i in 0..m {
            if i != r && alpha[i] != 0.0 {
                let f = alpha[i];
                for k in 0..m {
                    self.binv[i * m + k] -= f * self.binv[r * m + k];
                }
            }
        }
        self.basis[r] = q;
        self.state[q] = VarState::Basic(r);
        self.since_refactor += 1;
    }

    /// Rebuilds the basis inverse from scratch and recomputes basic values.
    fn refactor(&mut self) -> bool {
        let m = self.m;
        self.since_refactor = 0;
        if m == 0 {
            return true;
        }
        let mut a = vec![0.0; m * m];
        for (c, &j) in self.basis.iter().enumerate() {
            for &(i, v) in &self.cols[j] {
                a[i * m + c] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let (p, pv) = (col..m)
                .map(|i| (i, a[i * m + col].abs()))
                .fold((col, -1.0), |acc, e| if e.1 > acc.1 { e } else { acc });
            if pv < 1e-12 {
                return false;
            }
            if p != col {
                for k in 0..m {
                    a.swap(p * m + k, col * m + k);
                    inv.swap(p * m + k, col * m + k);
                }
            }
            let d = a[col * m + col];
            for k in 0..m {
                a[col * m + k] /= d;
                inv[col * m + k] /= d;
            }
            for i in 0..m {
                if i != col {
                    let f = a[i * m + col];
                    if f != 0.0 {
                        for k in 0..m {
                            a[i * m + k] -= f * a[col * m + k];
                            inv[i * m + k] -= f * inv[col * m + k];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        let mut rhs = self.b.clone();
        for j in 0..self.ncols {
            if !matches!(self.state[j], VarState::Basic(_)) && self.x[j] != 0.0 {
                for &(i, v) in &self.cols[j] {
                    rhs[i] -= v * self.x[j];
                }
            }
        }
        for i in 0..m {
            let v: f64 = (0..m).map(|k| self.binv[i * m + k] * rhs[k]).sum();
            self.x[self.basis[i]] = v;
        }
        true
    }

    fn expel_artificials(&mut self) {
        let m = self.m;
        for r in 0..m {
            let bv = self.basis[r];
            if bv < self.n + m {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.n + m {
                if matches!(self.state[j], VarState::Basic(_)) {
                    continue;
                }
                let v: f64 = self.cols[j].iter().map(|&(k, a)| self.binv[r * m + k] * a).sum();
                if v.abs() > 1e-7 && best.map_or(true, |(_, b)| v.abs() > b.abs()) {
                    best = Some((j, v));
                }
            }
            if let Some((q, _)) = best {
                let alpha = self.column(q);
                let out = self.basis[r];
                self.state[out] = VarState::Lower;
                self.x[out] = 0.0;
                self.pivot(r, q, &alpha);
            }
        }
        for i in 0..m {
            let a = self.art(i);
            self.lb[a] = 0.0;
            self.ub[a] = 0.0;
            self.cost[a] = 0.0;
            if !matches!(self.state[a], VarState::Basic(_)) {
                self.state[a] = VarState::Lower;
                self.x[a] = 0.0;
            }
        }
        self.refactor();
    }

    fn finish(mut self, sf: &StandardForm, status: LpStatus) -> LpResult {
        let n = self.n;
        if status == LpStatus::Optimal {
            self.refactor();
        }
        let y = if status == LpStatus::Optimal { self.duals() } else { vec![0.0; self.m] };
        let mut x = self.x[..n].to_vec();
        for j in 0..n {
            // snap tiny bound drift
            if (x[j] - self.lb[j]).abs() < 1e-11 {
                x[j] = self.lb[j];
            } else if (x[j] - self.ub[j]).abs() < 1e-11 {
                x[j] = self.ub[j];
            }
        }
        let reduced_costs = (0..n).map(|j| self.reduced_cost(j, &y)).collect();
        LpResult {
            status,
            objective: if status == LpStatus::Optimal { sf.objective(&x) } else { f64::NAN },
            x,
            duals: y,
            reduced_costs,
            iterations: self.iterations,
            trace: self.trace.take().unwrap_or_default(),
        }
    }
}
