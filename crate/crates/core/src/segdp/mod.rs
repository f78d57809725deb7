//! Value functions by backward induction over finite state grids.
//!
//! A segment table holds `Q_k(x, n)` for every position `k` of a segment,
//! every reachable draw `n` at that position and every grid state `x`:
//! the stage cost, plus the value of the finer-level segment owned by the
//! tick, plus either the expected value of the next position or, at the last
//! position, the terminal condition against the segment's goal.
//!
//! The cheapest control moving `x` to a given successor is found by a small
//! MILP over the controls, so continuous controls are handled exactly and
//! only states need a grid.

mod hybrid;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::rc::Rc;

use mts_milp::{solve_milp, MilpOptions, MilpStatus, Sense, StandardForm};

use crate::error::{Error, Result, Violation};
use crate::instantiate::check_sync_supported;
use crate::model::{MtsProblem, Term, Terminal};
use crate::oracle::{axis, product};
use crate::scenario::{draws, Realized};
use crate::timegrid::TickId;

pub use hybrid::{hybrid_solve, HybridOptions, HybridResult};

pub const DEFAULT_DP_BUDGET: usize = 2_000_000;
const GRID_LIMIT: usize = 1_000_000;
const TOL: f64 = 1e-9;

/// Admissible states per level.
#[derive(Debug, Clone)]
pub struct StateGrid {
    pub step: f64,
    pub levels: Vec<Vec<Vec<f64>>>,
}

impl StateGrid {
    /// Integer components take every integer in their bounds; continuous
    /// ones are sampled from the lower bound in increments of `step`.
    /// Points violating state rows are dropped.
    pub fn from_bounds(p: &MtsProblem, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::Invalid(vec![Violation::new("grid.step", "must be positive and finite")]));
        }
        let mut levels = Vec::new();
        for (j, lm) in p.levels.iter().enumerate() {
            let t = &lm.template;
            let axes: Vec<Vec<f64>> = (0..t.nx())
                .map(|k| axis(t.x_lb[k], t.x_ub[k], if t.x_int[k] { 1.0 } else { step }, &format!("level {} state {k}", j + 1)))
                .collect::<Result<_>>()?;
            let size = axes.iter().fold(1u128, |a, ax| a.saturating_mul(ax.len() as u128));
            if size > GRID_LIMIT as u128 {
                return Err(Error::Budget { what: format!("level {} state grid", j + 1), count: size, limit: GRID_LIMIT as u128 });
            }
            levels.push(product(&axes).into_iter().filter(|x| t.state_violations(x, TOL).is_empty()).collect());
        }
        Ok(StateGrid { step, levels })
    }

    pub fn index_of(&self, level: usize, x: &[f64]) -> Result<usize> {
        self.levels[level]
            .iter()
            .position(|g| g.len() == x.len() && g.iter().zip(x).all(|(a, b)| (a - b).abs() <= TOL))
            .ok_or_else(|| Error::OffGrid(format!("state {x:?} is not on the level-{} grid", level + 1)))
    }
}

/// Cheapest way across one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// Control cost plus any goal-deviation penalty.
    pub cost: f64,
    pub u: Vec<f64>,
    pub next: Vec<f64>,
}

/// Where a transition must land.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Exact(&'a [f64]),
    /// Anywhere admissible.
    Free,
    /// Anywhere admissible, paying `rho` per unit of L1 distance to the goal.
    Penalized(&'a [f64], f64),
}

fn bits(v: &[f64]) -> impl Iterator<Item = u64> + '_ {
    v.iter().map(|a| a.to_bits())
}

/// Solves the one-tick control problem at `id` from state `x`.
pub fn transition(p: &MtsProblem, id: TickId, x: &[f64], y: &[f64], w: &[f64], target: Target<'_>) -> Result<Option<Transition>> {
    let tpl = &p.levels[id.level].template;
    let view = p.view(id);
    let (nx, nu) = (tpl.nx(), tpl.nu());
    let mut sf = StandardForm::new();
    for k in 0..nu {
        sf.add_var(tpl.u_lb[k], tpl.u_ub[k], tpl.u_int[k], view.d()[k], format!("u{k}"));
    }
    let fixed = |t: Term| match t {
        Term::X(i) => x[i],
        Term::Y(i) => y[i],
        Term::W(i) => w[i],
        Term::U(_) => 0.0,
    };
    let split = |terms: &[(Term, f64)]| {
        let mut coefs = Vec::new();
        let mut constant = 0.0;
        for &(t, a) in terms {
            match t {
                Term::U(k) => coefs.push((k, a)),
                _ => constant += a * fixed(t),
            }
        }
        (coefs, constant)
    };
    for (r, row) in tpl.rows.iter().enumerate() {
        let (coefs, c) = split(&row.terms);
        sf.add_row(coefs, row.sense, view.rhs(r) - c, row.name.clone());
    }
    let next_vars = match target {
        Target::Exact(_) => None,
        _ => Some((0..nx).map(|i| sf.add_var(tpl.x_lb[i], tpl.x_ub[i], tpl.x_int[i], 0.0, format!("next{i}"))).collect::<Vec<_>>()),
    };
    for (i, a) in tpl.dynamics.iter().enumerate() {
        let (mut coefs, c) = split(&a.terms);
        let c = c + a.constant;
        match (target, &next_vars) {
            (Target::Exact(t), _) => sf.add_row(coefs, Sense::Eq, t[i] - c, format!("dyn{i}")),
            (_, Some(nv)) => {
                coefs.iter_mut().for_each(|e| e.1 = -e.1);
                coefs.push((nv[i], 1.0));
                sf.add_row(coefs, Sense::Eq, c, format!("dyn{i}"))
            }
            _ => unreachable!(),
        };
    }
    if let Some(nv) = &next_vars {
        for row in &tpl.state_rows {
            let coefs = row.terms.iter().filter_map(|&(t, a)| if let Term::X(i) = t { Some((nv[i], a)) } else { None }).collect();
            sf.add_row(coefs, row.sense, row.rhs, row.name.clone());
        }
        if let Target::Penalized(goal, rho) = target {
            for i in 0..nx {
                let dp = sf.add_var(0.0, f64::INFINITY, false, rho, format!("devp{i}"));
                let dm = sf.add_var(0.0, f64::INFINITY, false, rho, format!("devm{i}"));
                sf.add_row(vec![(nv[i], 1.0), (dp, -1.0), (dm, 1.0)], Sense::Eq, goal[i], format!("goal{i}"));
            }
        }
    }
    if sf.num_vars() == 0 {
        let ok = sf.rows.iter().all(|r| r.sense.violation(0.0, r.rhs) <= TOL);
        let next = match target {
            Target::Exact(t) => t.to_vec(),
            _ => Vec::new(),
        };
        return Ok(ok.then_some(Transition { cost: 0.0, u: Vec::new(), next }));
    }
    let r = solve_milp(&sf, &MilpOptions::default());
    match r.status {
        MilpStatus::Optimal => {
            let u = r.x[..nu].to_vec();
            let next = match (target, &next_vars) {
                (Target::Exact(t), _) => t.to_vec(),
                (_, Some(nv)) => nv.iter().map(|&v| r.x[v]).collect(),
                _ => unreachable!(),
            };
            Ok(Some(Transition { cost: r.objective, u, next }))
        }
        MilpStatus::Infeasible => Ok(None),
        other => Err(Error::Unsupported(format!("one-tick control problem at {} ended with status {other:?}", p.grid.tick(id)))),
    }
}

/// Decision stored for a table entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Choice {
    pub u: Vec<f64>,
    pub next: Vec<f64>,
    /// Grid index of `next` at non-final positions.
    pub next_index: Option<usize>,
    /// Finer-level value charged at this tick.
    pub inner: f64,
}

/// Value function of one segment for fixed goal, parent aggregate and
/// parent label.
#[derive(Debug, Clone)]
pub struct SegmentTable {
    pub level: usize,
    /// `None` for the slowest level, whose segment is the whole horizon.
    pub parent: Option<TickId>,
    pub ticks: Vec<TickId>,
    pub goal: Option<Vec<f64>>,
    pub terminal: Terminal,
    pub y: Vec<f64>,
    pub label: String,
    /// Reachable draws per position; probabilities at position 0 are
    /// unconditional.
    pub nodes: Vec<Vec<Realized>>,
    /// `successors[k][slot]`: `(slot at k + 1, probability)`.
    pub successors: Vec<Vec<Vec<(usize, f64)>>>,
    /// `q[k][slot][state]`
    pub q: Vec<Vec<Vec<f64>>>,
    pub argmin: Vec<Vec<Vec<Option<Choice>>>>,
}

impl SegmentTable {
    pub fn slot(&self, k: usize, node: u32) -> Option<usize> {
        self.nodes[k].iter().position(|r| r.node == node)
    }

    /// Value of starting the segment at grid state `si`.
    pub fn value_at(&self, si: usize) -> f64 {
        self.nodes[0].iter().enumerate().map(|(n, r)| r.prob * self.q[0][n][si]).sum()
    }

    pub fn entries(&self) -> usize {
        self.q.iter().flatten().map(|r| r.len()).sum()
    }
}

/// Evaluates a table at its first tick; the start state must be on the grid.
pub fn value_v(grids: &StateGrid, table: &SegmentTable, x_start: &[f64]) -> Result<f64> {
    Ok(table.value_at(grids.index_of(table.level, x_start)?))
}

type InnerKey = (usize, usize, Vec<u64>, String);

/// Backward-induction engine with caches for one-tick subproblems and
/// finer-level values.
pub struct Dp<'a> {
    p: &'a MtsProblem,
    grids: &'a StateGrid,
    trans: HashMap<Vec<u64>, Option<Transition>>,
    inner: HashMap<InnerKey, f64>,
    /// One-tick subproblems solved (cache misses).
    pub solves: usize,
    /// Candidate transitions examined.
    pub evaluations: usize,
    budget: usize,
}

impl<'a> Dp<'a> {
    pub fn new(p: &'a MtsProblem, grids: &'a StateGrid, budget: usize) -> Result<Self> {
        crate::error::invalid_if_any(p.validate())?;
        if grids.levels.len() != p.num_levels() {
            return Err(Error::Dimension { what: "state grid levels".into(), expected: p.num_levels(), got: grids.levels.len() });
        }
        Ok(Dp { p, grids, trans: HashMap::new(), inner: HashMap::new(), solves: 0, evaluations: 0, budget })
    }

    pub fn problem(&self) -> &'a MtsProblem {
        self.p
    }

    pub fn transition(&mut self, id: TickId, x: &[f64], y: &[f64], w: &[f64], target: Target<'_>) -> Result<Option<Transition>> {
        let mut key = vec![id.level as u64, id.index as u64];
        match target {
            Target::Exact(t) => {
                key.push(0);
                key.extend(bits(t));
            }
            Target::Free => key.push(1),
            Target::Penalized(g, rho) => {
                key.push(2);
                key.push(rho.to_bits());
                key.extend(bits(g));
            }
        }
        for v in [x, y, w] {
            key.push(u64::MAX);
            key.extend(bits(v));
        }
        if let Some(t) = self.trans.get(&key) {
            return Ok(t.clone());
        }
        self.solves += 1;
        let t = transition(self.p, id, x, y, w, target)?;
        self.trans.insert(key, t.clone());
        Ok(t)
    }

    fn charge(&mut self, n: usize) -> Result<()> {
        self.evaluations += n;
        if self.evaluations > self.budget {
            return Err(Error::Budget { what: "dynamic programming evaluations".into(), count: self.evaluations as u128, limit: self.budget as u128 });
        }
        Ok(())
    }

    /// Value of the finer segment owned by `owner` (0 on the finest level).
    /// Finer levels must be stateless.
    pub fn inner_value(&mut self, owner: TickId, y: &[f64], label: &str) -> Result<f64> {
        let child = owner.level + 1;
        if child >= self.p.num_levels() {
            return Ok(0.0);
        }
        let key = (owner.level, owner.index, bits(y).collect(), label.to_string());
        if let Some(v) = self.inner.get(&key) {
            return Ok(*v);
        }
        if self.p.nx(child) > 0 {
            return Err(Error::Unsupported(format!("level {} has state; nested values need stateless finer levels", child + 1)));
        }
        let t = self.segment(child, Some(owner), None, Terminal::Hard, y, label)?;
        let v = t.value_at(0);
        self.inner.insert(key, v);
        Ok(v)
    }

    /// Backward pass over the segment under `parent` (the whole horizon for
    /// level 1 when `parent` is `None`).
    pub fn segment(&mut self, level: usize, parent: Option<TickId>, goal: Option<&[f64]>, terminal: Terminal, y: &[f64], label: &str) -> Result<SegmentTable> {
        let p = self.p;
        let grid = &p.grid;
        let tpl = &p.levels[level].template;
        if !tpl.history.is_empty() {
            return Err(Error::Unsupported(format!("history rows on level {} are not supported by dynamic programming", level + 1)));
        }
        let ticks = match parent {
            Some(par) => grid.children_ids(par),
            None => (0..grid.level_len(level)).map(|i| TickId { level, index: i }).collect(),
        };
        if let Some(g) = goal {
            self.grids.index_of(level, g)?;
        }
        let kk = ticks.len();
        let mut nodes: Vec<Vec<Realized>> = vec![draws(grid, &p.stoch, ticks[0], label, None)?];
        let mut successors: Vec<Vec<Vec<(usize, f64)>>> = Vec::new();
        for k in 0..kk.saturating_sub(1) {
            let mut next: Vec<Realized> = Vec::new();
            let mut succ = Vec::new();
            for n in &nodes[k] {
                let mut row = Vec::new();
                for r in draws(grid, &p.stoch, ticks[k + 1], label, Some(n.node))? {
                    let slot = match next.iter().position(|m| m.node == r.node) {
                        Some(s) => s,
                        None => {
                            next.push(r.clone());
                            next.len() - 1
                        }
                    };
                    row.push((slot, r.prob));
                }
                succ.push(row);
            }
            successors.push(succ);
            nodes.push(next);
        }
        successors.push(vec![Vec::new(); nodes[kk - 1].len()]);

        let states = &self.grids.levels[level];
        let ns = states.len();
        let mut q: Vec<Vec<Vec<f64>>> = nodes.iter().map(|n| vec![vec![f64::INFINITY; ns]; n.len()]).collect();
        let mut argmin: Vec<Vec<Vec<Option<Choice>>>> = nodes.iter().map(|n| vec![vec![None; ns]; n.len()]).collect();
        for k in (0..kk).rev() {
            let id = ticks[k];
            let view = p.view(id);
            for slot in 0..nodes[k].len() {
                let w = nodes[k][slot].outcome.clone();
                let nlabel = nodes[k][slot].label.clone();
                for si in 0..ns {
                    let x = &states[si];
                    let y_child = if level + 1 < p.num_levels() { tpl.aggregate(x, y, &w)? } else { Vec::new() };
                    let inner = self.inner_value(id, &y_child, &nlabel)?;
                    if !inner.is_finite() {
                        continue;
                    }
                    let base = view.cost(x, &vec![0.0; tpl.nu()]) + inner;
                    if k + 1 == kk {
                        self.charge(1)?;
                        let target = match (goal, terminal) {
                            (None, _) => Target::Free,
                            (Some(g), Terminal::Hard) => Target::Exact(g),
                            (Some(g), Terminal::L1(rho)) => Target::Penalized(g, rho),
                        };
                        if let Some(t) = self.transition(id, x, y, &w, target)? {
                            q[k][slot][si] = base + t.cost;
                            argmin[k][slot][si] = Some(Choice { u: t.u, next: t.next, next_index: None, inner });
                        }
                    } else {
                        self.charge(ns)?;
                        let mut best: Option<(f64, Transition, usize)> = None;
                        for sj in 0..ns {
                            let e: f64 = successors[k][slot].iter().map(|&(s2, pr)| pr * q[k + 1][s2][sj]).sum();
                            if !e.is_finite() {
                                continue;
                            }
                            let Some(t) = self.transition(id, x, y, &w, Target::Exact(&states[sj]))? else { continue };
                            let total = t.cost + e;
                            if best.as_ref().is_none_or(|b| total < b.0 - 1e-12) {
                                best = Some((total, t, sj));
                            }
                        }
                        if let Some((total, t, sj)) = best {
                            q[k][slot][si] = base + total;
                            argmin[k][slot][si] = Some(Choice { u: t.u, next: t.next, next_index: Some(sj), inner });
                        }
                    }
                }
            }
        }
        Ok(SegmentTable {
            level,
            parent,
            ticks,
            goal: goal.map(|g| g.to_vec()),
            terminal,
            y: y.to_vec(),
            label: label.to_string(),
            nodes,
            successors,
            q,
            argmin,
        })
    }
}

/// One-shot backward pass for the segment under `parent`.
#[allow(clippy::too_many_arguments)]
pub fn backward_segment(
    p: &MtsProblem,
    grids: &StateGrid,
    parent: TickId,
    goal: Option<&[f64]>,
    terminal: Terminal,
    y: &[f64],
    label: &str,
) -> Result<SegmentTable> {
    Dp::new(p, grids, DEFAULT_DP_BUDGET)?.segment(parent.level + 1, Some(parent), goal, terminal, y, label)
}

#[derive(Debug, Clone, Default)]
pub struct BellmanReport {
    pub entries: usize,
    pub finite: usize,
    pub max_residual: f64,
    pub failures: Vec<String>,
}

/// Recomputes every entry of a table from its stored decision: the decision
/// must be feasible, land where it says, and its one-step cost plus the
/// successor expectation (or terminal value) must reproduce the entry.
pub fn bellman_check(dp: &mut Dp<'_>, t: &SegmentTable) -> Result<BellmanReport> {
    let p = dp.problem();
    let grids = dp.grids;
    let tpl = &p.levels[t.level].template;
    let states = &grids.levels[t.level];
    let mut rep = BellmanReport::default();
    let kk = t.ticks.len();
    for k in 0..kk {
        let id = t.ticks[k];
        let view = p.view(id);
        for (slot, node) in t.nodes[k].iter().enumerate() {
            for (si, x) in states.iter().enumerate() {
                rep.entries += 1;
                let at = format!("{} node {} state {x:?}", p.grid.tick(id), node.node);
                let q = t.q[k][slot][si];
                let Some(c) = &t.argmin[k][slot][si] else {
                    if q.is_finite() {
                        rep.failures.push(format!("{at}: finite value without a decision"));
                    }
                    continue;
                };
                if !q.is_finite() {
                    rep.failures.push(format!("{at}: decision stored for an infinite value"));
                    continue;
                }
                rep.finite += 1;
                let w = &node.outcome;
                for (name, r) in view.row_violations(x, &c.u, &t.y, w, TOL) {
                    rep.failures.push(format!("{at}: {name} violated by {r:.3e}"));
                }
                let stepped = tpl.step(x, &c.u, &t.y, w)?;
                if stepped.iter().zip(&c.next).any(|(a, b)| (a - b).abs() > 1e-7) {
                    rep.failures.push(format!("{at}: stored successor does not follow the dynamics"));
                }
                let y_child = if t.level + 1 < p.num_levels() { tpl.aggregate(x, &t.y, w)? } else { Vec::new() };
                let inner = dp.inner_value(id, &y_child, &node.label)?;
                let tail = if k + 1 == kk {
                    if !tpl.state_violations(&c.next, 1e-7).is_empty() {
                        rep.failures.push(format!("{at}: end state outside the admissible set"));
                    }
                    t.terminal.value(&c.next, t.goal.as_deref())
                } else {
                    let sj = c.next_index.expect("non-final decisions carry a grid successor");
                    t.successors[k][slot].iter().map(|&(s2, pr)| pr * t.q[k + 1][s2][sj]).sum()
                };
                let recomputed = view.cost(x, &c.u) + inner + tail;
                let r = (q - recomputed).abs();
                rep.max_residual = rep.max_residual.max(r);
                if r > 1e-9 * (1.0 + q.abs()) {
                    rep.failures.push(format!("{at}: Bellman residual {r:.3e}"));
                }
            }
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub cost: f64,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub end: Vec<f64>,
}

/// Follows stored decisions along realized draws (node ids per position).
pub fn forward_rollout(p: &MtsProblem, grids: &StateGrid, t: &SegmentTable, x_start: &[f64], path: &[u32]) -> Result<Rollout> {
    if path.len() != t.ticks.len() {
        return Err(Error::Dimension { what: "rollout path".into(), expected: t.ticks.len(), got: path.len() });
    }
    let mut x = x_start.to_vec();
    let mut out = Rollout { cost: 0.0, states: Vec::new(), controls: Vec::new(), end: Vec::new() };
    for (k, &node) in path.iter().enumerate() {
        let id = t.ticks[k];
        let at = p.grid.tick(id).to_string();
        let slot = t.slot(k, node).ok_or_else(|| Error::OffGrid(format!("node {node} is not reachable at {at}")))?;
        let si = grids.index_of(t.level, &x)?;
        let c = t.argmin[k][slot][si].as_ref().ok_or_else(|| Error::InfeasibleRollout(at.clone()))?;
        out.cost += p.view(id).cost(&x, &c.u) + c.inner;
        out.states.push(x.clone());
        out.controls.push(c.u.clone());
        x = c.next.clone();
    }
    out.cost += t.terminal.value(&x, t.goal.as_deref());
    out.end = x;
    Ok(out)
}

/// Probability-weighted rollout cost over every draw path of the segment.
pub fn expected_rollout(p: &MtsProblem, grids: &StateGrid, t: &SegmentTable, x_start: &[f64]) -> Result<f64> {
    fn rec(p: &MtsProblem, grids: &StateGrid, t: &SegmentTable, x: &[f64], k: usize, slot: usize, prob: f64, path: &mut Vec<u32>, acc: &mut f64) -> Result<()> {
        path.push(t.nodes[k][slot].node);
        if k + 1 == t.ticks.len() {
            let r = forward_rollout(p, grids, t, x, path)?;
            *acc += prob * r.cost;
        } else {
            for &(s2, pr) in &t.successors[k][slot] {
                rec(p, grids, t, x, k + 1, s2, prob * pr, path, acc)?;
            }
        }
        path.pop();
        Ok(())
    }
    let mut acc = 0.0;
    for (slot, r) in t.nodes[0].iter().enumerate() {
        rec(p, grids, t, x_start, 0, slot, r.prob, &mut Vec::new(), &mut acc)?;
    }
    Ok(acc)
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" ")
}

/// Flat listing of a table: one line per (position, draw, state).
pub fn table_csv(p: &MtsProblem, grids: &StateGrid, t: &SegmentTable) -> String {
    let mut out = String::from("tick,node,label,state,value,control,next\n");
    for (k, id) in t.ticks.iter().enumerate() {
        for (slot, n) in t.nodes[k].iter().enumerate() {
            for (si, x) in grids.levels[t.level].iter().enumerate() {
                let (u, nx) = match &t.argmin[k][slot][si] {
                    Some(c) => (fmt_vec(&c.u), fmt_vec(&c.next)),
                    None => (String::new(), String::new()),
                };
                let _ = writeln!(out, "\"{}\",{},{},{},{},{},{}", p.grid.tick(*id), n.node, n.label, fmt_vec(x), t.q[k][slot][si], u, nx);
            }
        }
    }
    out
}

/// Result of solving the synchronized problem by dynamic programming.
#[derive(Debug, Clone)]
pub struct DpSolution {
    pub objective: f64,
    /// Decision at the first level-1 tick.
    pub first_control: Option<Vec<f64>>,
    /// Goal chosen for the first level-2 segment.
    pub first_goal: Option<Vec<f64>>,
    pub solves: usize,
    pub evaluations: usize,
}

/// Solves the synchronized problem exactly on the state grids: the slow
/// level walks the scenario tree with the previous goal as extra state,
/// choosing next state and goal at each tick; level-2 segments are valued
/// by their own tables.
pub fn solve_dp(p: &MtsProblem, grids: &StateGrid, budget: usize) -> Result<DpSolution> {
    check_sync_supported(p)?;
    if !p.stoch.stage_length_one() {
        return Err(Error::Unsupported("dynamic programming needs one level-1 tick per stochastic stage".into()));
    }
    let mut dp = Dp::new(p, grids, budget)?;
    if p.num_levels() == 1 {
        let t = dp.segment(0, None, None, Terminal::Hard, &[], "")?;
        let si = grids.index_of(0, &p.levels[0].x0)?;
        let first = t.argmin[0][0][si].as_ref();
        return Ok(DpSolution {
            objective: t.value_at(si),
            first_control: first.map(|c| c.u.clone()),
            first_goal: None,
            solves: dp.solves,
            evaluations: dp.evaluations,
        });
    }
    for j in 0..2 {
        if !p.levels[j].template.history.is_empty() {
            return Err(Error::Unsupported(format!("history rows on level {} are not supported by dynamic programming", j + 1)));
        }
    }
    let tree = &p.stoch.tree;
    let h = p.grid.horizon();
    let g1 = &grids.levels[0];
    let g2 = &grids.levels[1];
    let terminal2 = p.levels[1].terminal;
    let x1 = grids.index_of(0, &p.levels[0].x0)?;
    let s0 = grids.index_of(1, &p.levels[1].x0)?;
    let tpl1 = &p.levels[0].template;
    let mut seg_cache: HashMap<(usize, Option<usize>, Vec<u64>, String), Rc<SegmentTable>> = HashMap::new();
    // q[node][x][s]
    let mut q = vec![Vec::<Vec<f64>>::new(); tree.len()];
    let mut dec: Vec<Vec<Vec<Option<(Vec<f64>, Option<usize>)>>>> = vec![Vec::new(); tree.len()];
    for d in (0..h).rev() {
        let id = TickId { level: 0, index: d };
        let view = p.view(id);
        for n in (0..tree.len()).filter(|&n| tree.depth(n) == d) {
            let node = &tree.nodes[n];
            let children = tree.children(n);
            q[n] = vec![vec![f64::INFINITY; g2.len()]; g1.len()];
            dec[n] = vec![vec![None; g2.len()]; g1.len()];
            for (xi, x) in g1.iter().enumerate() {
                let y = tpl1.aggregate(x, &[], &node.outcome)?;
                let goals: Vec<Option<usize>> = if d + 1 < h { (0..g2.len()).map(Some).collect() } else { vec![None] };
                let mut tables = Vec::new();
                for &g in &goals {
                    let key = (d, g, bits(&y).collect::<Vec<_>>(), node.label.clone());
                    let t = match seg_cache.get(&key) {
                        Some(t) => t.clone(),
                        None => {
                            let t = Rc::new(dp.segment(1, Some(id), g.map(|g| g2[g].as_slice()), terminal2, &y, &node.label)?);
                            seg_cache.insert(key, t.clone());
                            t
                        }
                    };
                    tables.push(t);
                }
                let starts: Vec<usize> = if d == 0 { vec![s0] } else { (0..g2.len()).collect() };
                for &si in &starts {
                    let base = view.cost(x, &vec![0.0; tpl1.nu()]);
                    let mut best: Option<(f64, Vec<f64>, Option<usize>)> = None;
                    if d + 1 == h {
                        dp.charge(1)?;
                        let v2 = tables[0].value_at(si);
                        if v2.is_finite() {
                            if let Some(t) = dp.transition(id, x, &[], &node.outcome, Target::Free)? {
                                best = Some((t.cost + v2, t.u, None));
                            }
                        }
                    } else {
                        dp.charge(g1.len() * g2.len())?;
                        for (xj, xn) in g1.iter().enumerate() {
                            let mut inner_best: Option<(f64, usize)> = None;
                            for (gi, t2) in tables.iter().enumerate() {
                                let v2 = t2.value_at(si);
                                if !v2.is_finite() {
                                    continue;
                                }
                                let e: f64 = children.iter().map(|&c| tree.nodes[c].prob * q[c][xj][gi]).sum();
                                if e.is_finite() && inner_best.is_none_or(|b| v2 + e < b.0 - 1e-12) {
                                    inner_best = Some((v2 + e, gi));
                                }
                            }
                            let Some((rest, gi)) = inner_best else { continue };
                            let Some(t) = dp.transition(id, x, &[], &node.outcome, Target::Exact(xn))? else { continue };
                            let total = t.cost + rest;
                            if best.as_ref().is_none_or(|b| total < b.0 - 1e-12) {
                                best = Some((total, t.u, Some(gi)));
                            }
                        }
                    }
                    if let Some((total, u, g)) = best {
                        q[n][xi][si] = base + total;
                        dec[n][xi][si] = Some((u, g));
                    }
                }
            }
        }
    }
    let first = dec[0][x1][s0].clone();
    Ok(DpSolution {
        objective: q[0][x1][s0],
        first_control: first.as_ref().map(|f| f.0.clone()),
        first_goal: first.and_then(|f| f.1).map(|g| g2[g].clone()),
        solves: dp.solves,
        evaluations: dp.evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Affine, LevelModel, StageTemplate};
    use crate::samples::{self, DispatchVariant};
    use crate::stochastic::StochasticSpec;
    use crate::timegrid::{Interpretation, TimeGrid};
    use Term::{U, X};

    /// Fast state in 0..=4 moved by `up - down`, each unit costing 2, with
    /// holding cost `hold` per unit of state.
    fn mover(fast_ticks: u32, hold: f64) -> MtsProblem {
        let grid = TimeGrid::uniform(1, &[fast_ticks]).unwrap();
        let slow = StageTemplate { aggregation: Some(vec![]), ..Default::default() };
        let fast = StageTemplate {
            x_lb: vec![0.0],
            x_ub: vec![4.0],
            x_int: vec![true],
            u_lb: vec![0.0, 0.0],
            u_ub: vec![2.0, 2.0],
            u_int: vec![true, true],
            c: vec![hold],
            d: vec![2.0, 2.0],
            dynamics: vec![Affine::new([(X(0), 1.0), (U(0), 1.0), (U(1), -1.0)], 0.0)],
            ..Default::default()
        };
        MtsProblem {
            name: "mover".into(),
            stoch: StochasticSpec::deterministic(&grid),
            grid,
            levels: vec![LevelModel::new(slow, vec![]), LevelModel::new(fast, vec![0.0])],
            interpretation: Interpretation::Simultaneous,
        }
    }

    const ROOT: TickId = TickId { level: 0, index: 0 };

    #[test]
    fn single_tick_hard_goal() {
        let p = mover(1, 0.0);
        let g = StateGrid::from_bounds(&p, 1.0).unwrap();
        let t = backward_segment(&p, &g, ROOT, Some(&[2.0]), Terminal::Hard, &[], "").unwrap();
        assert_eq!(value_v(&g, &t, &[0.0]).unwrap(), 4.0);
        assert_eq!(value_v(&g, &t, &[2.0]).unwrap(), 0.0);
        let far = backward_segment(&p, &g, ROOT, Some(&[4.0]), Terminal::Hard, &[], "").unwrap();
        assert_eq!(value_v(&g, &far, &[0.0]).unwrap(), f64::INFINITY);
        assert!(far.argmin[0][0][0].is_none());
        assert!(matches!(value_v(&g, &t, &[0.5]), Err(Error::OffGrid(_))));
        assert!(matches!(backward_segment(&p, &g, ROOT, Some(&[9.0]), Terminal::Hard, &[], ""), Err(Error::OffGrid(_))));
    }

    #[test]
    fn zero_penalty_ignores_the_goal() {
        let p = mover(2, 1.0);
        let g = StateGrid::from_bounds(&p, 1.0).unwrap();
        let free = backward_segment(&p, &g, ROOT, None, Terminal::Hard, &[], "").unwrap();
        let soft = backward_segment(&p, &g, ROOT, Some(&[4.0]), Terminal::L1(0.0), &[], "").unwrap();
        for si in 0..g.levels[1].len() {
            assert_eq!(free.value_at(si), soft.value_at(si));
        }
    }

    #[test]
    fn deterministic_segment_is_a_shortest_path() {
        let p = mover(2, 1.0);
        let g = StateGrid::from_bounds(&p, 1.0).unwrap();
        let t = backward_segment(&p, &g, ROOT, Some(&[3.0]), Terminal::Hard, &[], "").unwrap();
        // brute force over both ticks' integer controls
        for x0 in 0..=4 {
            let mut best = f64::INFINITY;
            for (a, b, c, e) in itertools_product() {
                let x1 = x0 as f64 + a - b;
                let x2 = x1 + c - e;
                if (0.0..=4.0).contains(&x1) && x2 == 3.0 {
                    best = best.min(x0 as f64 + x1 + 2.0 * (a + b + c + e));
                }
            }
            assert_eq!(t.value_at(x0), best, "start {x0}");
        }
    }

    fn itertools_product() -> impl Iterator<Item = (f64, f64, f64, f64)> {
        (0..81).map(|k| ((k % 3) as f64, (k / 3 % 3) as f64, (k / 9 % 3) as f64, (k / 27) as f64))
    }

    #[test]
    fn penalties_are_monotone_and_dominated_by_hard_goals() {
        let p = mover(2, 1.0);
        let g = StateGrid::from_bounds(&p, 1.0).unwrap();
        let hard = backward_segment(&p, &g, ROOT, Some(&[4.0]), Terminal::Hard, &[], "").unwrap();
        let mut prev: Option<SegmentTable> = None;
        for rho in [0.0, 0.5, 1.0, 10.0, 1e6] {
            let t = backward_segment(&p, &g, ROOT, Some(&[4.0]), Terminal::L1(rho), &[], "").unwrap();
            for si in 0..g.levels[1].len() {
                assert!(t.value_at(si) <= hard.value_at(si) + 1e-9);
                if let Some(pv) = &prev {
                    assert!(pv.value_at(si) <= t.value_at(si) + 1e-9);
                }
            }
            prev = Some(t);
        }
    }

    #[test]
    fn refining_the_grid_never_raises_values() {
        let mut p = mover(2, 1.0);
        p.levels[1].template.x_int = vec![false];
        p.levels[1].template.u_int = vec![false, false];
        let coarse = StateGrid::from_bounds(&p, 2.0).unwrap();
        let fine = StateGrid::from_bounds(&p, 1.0).unwrap();
        let a = backward_segment(&p, &coarse, ROOT, Some(&[4.0]), Terminal::Hard, &[], "").unwrap();
        let b = backward_segment(&p, &fine, ROOT, Some(&[4.0]), Terminal::Hard, &[], "").unwrap();
        for (si, x) in coarse.levels[1].iter().enumerate() {
            assert!(value_v(&fine, &b, x).unwrap() <= a.value_at(si) + 1e-9);
        }
    }

    #[test]
    fn tables_are_bellman_consistent_and_rollouts_reproduce_values() {
        let p = samples::dispatch(DispatchVariant::FastLattice);
        let g = StateGrid::from_bounds(&p, 1.0).unwrap();
        let mut dp = Dp::new(&p, &g, DEFAULT_DP_BUDGET).unwrap();
        for goal in [None, Some(&[1.0][..])] {
            let t = dp.segment(1, Some(ROOT), goal, Terminal::Hard, &[1.0], "").unwrap();
            let rep = bellman_check(&mut dp, &t).unwrap();
            assert!(rep.failures.is_empty(), "{:?}", rep.failures);
            assert!(rep.max_residual <= 1e-9);
            for (si, x) in g.levels[1].iter().enumerate() {
                let v = t.value_at(si);
                if v.is_finite() {
                    assert!((expected_rollout(&p, &g, &t, x).unwrap() - v).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn deterministic_rollout_matches_and_blocked_rollouts_are_reported() {
        let p = mover(2, 1.0);
        let g = StateGrid::from_bounds(&p, 1.0).unwrap();
        let t = backward_segment(&p, &g, ROOT, Some(&[4.0]), Terminal::Hard, &[], "").unwrap();
        let r = forward_rollout(&p, &g, &t, &[1.0], &[0, 0]).unwrap();
        assert_eq!(r.cost, t.value_at(1));
        assert_eq!(r.end, vec![4.0]);
        let p = mover(1, 1.0);
        let t = backward_segment(&p, &g, ROOT, Some(&[0.0]), Terminal::Hard, &[], "").unwrap();
        let err = forward_rollout(&p, &g, &t, &[4.0], &[0]).unwrap_err();
        assert!(matches!(err, Error::InfeasibleRollout(ref at) if at == "(0,0)"));
        assert!(table_csv(&p, &g, &t).lines().count() > 1);
    }

    #[test]
    fn dp_matches_the_synchronized_milp() {
        use crate::instantiate::{build_synchronized, BuildOptions};
        for p in samples::golden_set().into_iter().filter(|p| check_sync_supported(p).is_ok()) {
            let g = StateGrid::from_bounds(&p, 1.0).unwrap();
            let dp = solve_dp(&p, &g, DEFAULT_DP_BUDGET).unwrap();
            let milp = mts_milp::solve_milp(&build_synchronized(&p, &BuildOptions::default()).unwrap().sf, &MilpOptions::default());
            assert!((dp.objective - milp.objective).abs() < 1e-6 || (dp.objective.is_infinite() && milp.objective.is_infinite()), "{}", p.name);
            let h = hybrid_solve(&p, &g, &HybridOptions::default()).unwrap();
            assert!((h.objective - milp.objective).abs() < 1e-6 || (h.objective.is_infinite() && milp.objective.is_infinite()), "{}", p.name);
        }
    }

    #[test]
    fn cost_free_fast_levels_leave_the_slow_milp() {
        let mut p = samples::dispatch(DispatchVariant::SlowBranching);
        let fast = &mut p.levels[1].template;
        fast.c = vec![0.0];
        fast.d = vec![0.0];
        fast.rows.clear();
        let g = StateGrid::from_bounds(&p, 1.0).unwrap();
        let h = hybrid_solve(&p, &g, &HybridOptions::default()).unwrap();
        // the slow level alone: hold the cheapest contract (zero)
        let mut sink = crate::instantiate::FormSink::new(false);
        let l1 = crate::instantiate::emit_level1(&p, &mut sink, false).unwrap();
        assert_eq!(l1.leaves.len(), 2);
        let alone = mts_milp::solve_milp(&sink.sf, &MilpOptions::default());
        assert!((h.objective - alone.objective).abs() < 1e-9);
    }
}
