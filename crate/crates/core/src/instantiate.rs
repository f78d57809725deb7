//! Extensive-form MILPs.
//!
//! * The full equivalent keeps one variable block per (tick, scenario) and
//!   ties decisions of indistinguishable scenarios with equality rows to a
//!   class representative. A compact encoding of the same problem shares
//!   variables instead of adding rows.
//! * The synchronized approximation keeps level-1 decisions per level-1
//!   scenario, adds goal states for the next level, and hangs one fast tree
//!   per (level-1 tick, information class) whose segment starts at the
//!   previous goal and must end at the current one.

use std::collections::{HashMap, HashSet};

use mts_milp::{Sense, StandardForm};

use crate::error::{Error, Result};
use crate::model::{MtsProblem, StageTemplate, Term, Terminal};
use crate::oracle::Trajectory;
use crate::scenario::{self, draws, group_by, InfoClasses, ScenarioSet};
use crate::timegrid::{Interpretation, TickId};

pub const DEFAULT_NODE_BUDGET: usize = 200_000;

/// Affine expression over MILP columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lin {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Lin {
    pub fn var(v: usize) -> Self {
        Lin { terms: vec![(v, 1.0)], constant: 0.0 }
    }

    pub fn add(&mut self, v: usize, a: f64) {
        self.terms.push((v, a));
    }

    pub fn add_lin(&mut self, other: &Lin, a: f64) {
        self.terms.extend(other.terms.iter().map(|&(v, b)| (v, a * b)));
        self.constant += a * other.constant;
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, a)| a * x[v]).sum::<f64>()
    }
}

/// Receiver of columns and rows. Builders emit through it so that counting
/// and building share one code path.
pub trait Sink {
    fn var(&mut self, lb: f64, ub: f64, integer: bool, obj: f64, name: &dyn Fn() -> String) -> usize;
    fn add_obj(&mut self, var: usize, c: f64);
    /// Adds `lhs (sense) rhs`; the constant of `lhs` moves to the right.
    fn row(&mut self, lhs: Lin, sense: Sense, rhs: f64, name: &dyn Fn() -> String);
}

/// Builds a [`StandardForm`], optionally dropping rows identical to one
/// already emitted.
pub struct FormSink {
    pub sf: StandardForm,
    seen: Option<HashSet<(u8, u64, Vec<(usize, u64)>)>>,
}

impl FormSink {
    pub fn new(dedup: bool) -> Self {
        FormSink { sf: StandardForm::new(), seen: dedup.then(HashSet::new) }
    }
}

fn canonical(mut terms: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    terms.sort_by_key(|t| t.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
    for (v, a) in terms {
        match out.last_mut() {
            Some((w, b)) if *w == v => *b += a,
            _ => out.push((v, a)),
        }
    }
    out.retain(|t| t.1 != 0.0);
    out
}

impl Sink for FormSink {
    fn var(&mut self, lb: f64, ub: f64, integer: bool, obj: f64, name: &dyn Fn() -> String) -> usize {
        self.sf.add_var(lb, ub, integer, obj, name())
    }

    fn add_obj(&mut self, var: usize, c: f64) {
        self.sf.obj[var] += c;
    }

    fn row(&mut self, lhs: Lin, sense: Sense, rhs: f64, name: &dyn Fn() -> String) {
        let coefs = canonical(lhs.terms);
        let rhs = rhs - lhs.constant;
        if let Some(seen) = &mut self.seen {
            let key = (sense as u8, rhs.to_bits(), coefs.iter().map(|&(v, a)| (v, a.to_bits())).collect());
            if !seen.insert(key) {
                return;
            }
        }
        self.sf.add_row(coefs, sense, rhs, name());
    }
}

/// Counts what a build would emit.
#[derive(Debug, Default)]
pub struct CountSink {
    pub vars: usize,
    pub rows: usize,
    pub integers: usize,
}

impl Sink for CountSink {
    fn var(&mut self, _: f64, _: f64, integer: bool, _: f64, _: &dyn Fn() -> String) -> usize {
        self.vars += 1;
        self.integers += integer as usize;
        self.vars - 1
    }

    fn add_obj(&mut self, _: usize, _: f64) {}

    fn row(&mut self, _: Lin, _: Sense, _: f64, _: &dyn Fn() -> String) {
        self.rows += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Full,
    Synchronized,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Full => "full",
            Mode::Synchronized => "sync",
        })
    }
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub node_budget: usize,
    /// Share variables per information class instead of adding equality
    /// rows (full mode only).
    pub compact: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { node_budget: DEFAULT_NODE_BUDGET, compact: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildReport {
    pub mode: Mode,
    pub variables: usize,
    pub constraints: usize,
    pub integer_variables: usize,
    /// Tree nodes per timescale (expanded histories in full mode; slow tree
    /// plus attached fast-tree nodes in synchronized mode).
    pub nodes_per_level: Vec<usize>,
    pub scenarios: usize,
    pub nac_classes: usize,
    pub nac_rows: usize,
}

impl BuildReport {
    pub fn total_nodes(&self) -> usize {
        self.nodes_per_level.iter().sum()
    }
}

// ---------------------------------------------------------------------------
// shared emission helpers

fn block(sink: &mut dyn Sink, n: usize, bounds: impl Fn(usize) -> (f64, f64, bool), name: impl Fn(usize) -> String) -> usize {
    let mut first = usize::MAX;
    for i in 0..n {
        let (lb, ub, int) = bounds(i);
        let v = sink.var(lb, ub, int, 0.0, &|| name(i));
        if i == 0 {
            first = v;
        }
    }
    first
}

fn state_block(sink: &mut dyn Sink, tpl: &StageTemplate, fixed: Option<&[f64]>, name: impl Fn(usize) -> String) -> usize {
    block(
        sink,
        tpl.nx(),
        |i| match fixed {
            Some(v) => (v[i], v[i], tpl.x_int[i]),
            None => (tpl.x_lb[i], tpl.x_ub[i], tpl.x_int[i]),
        },
        name,
    )
}

fn control_block(sink: &mut dyn Sink, tpl: &StageTemplate, name: impl Fn(usize) -> String) -> usize {
    block(sink, tpl.nu(), |i| (tpl.u_lb[i], tpl.u_ub[i], tpl.u_int[i]), name)
}

fn term_into(lhs: &mut Lin, t: Term, a: f64, xb: usize, ub: usize, y: &[Lin], w: &[f64]) {
    match t {
        Term::X(i) => lhs.add(xb + i, a),
        Term::U(i) => lhs.add(ub + i, a),
        Term::Y(i) => lhs.add_lin(&y[i], a),
        Term::W(i) => lhs.constant += a * w[i],
    }
}

/// Aggregate expressions of a tick whose state block starts at `xb`.
fn aggregate_lin(tpl: &StageTemplate, xb: usize, y: &[Lin], w: &[f64]) -> Vec<Lin> {
    tpl.aggregation
        .as_ref()
        .map(|agg| {
            agg.iter()
                .map(|a| {
                    let mut l = Lin { terms: Vec::new(), constant: a.constant };
                    for &(t, c) in &a.terms {
                        term_into(&mut l, t, c, xb, usize::MAX, y, w);
                    }
                    l
                })
                .collect()
        })
        .unwrap_or_default()
}

/// Everything needed to emit the rows of one tick occurrence.
struct At<'a> {
    p: &'a MtsProblem,
    id: TickId,
    xb: usize,
    ub: usize,
    y: &'a [Lin],
    w: &'a [f64],
    tag: String,
}

impl At<'_> {
    fn tpl(&self) -> &StageTemplate {
        &self.p.levels[self.id.level].template
    }

    fn add_costs(&self, sink: &mut dyn Sink, weight: f64) {
        let view = self.p.view(self.id);
        for (i, c) in view.c().iter().enumerate() {
            if *c != 0.0 {
                sink.add_obj(self.xb + i, weight * c);
            }
        }
        for (i, d) in view.d().iter().enumerate() {
            if *d != 0.0 {
                sink.add_obj(self.ub + i, weight * d);
            }
        }
    }

    fn feasibility(&self, sink: &mut dyn Sink) {
        let view = self.p.view(self.id);
        for (r, row) in self.tpl().rows.iter().enumerate() {
            let mut lhs = Lin::default();
            for &(t, a) in &row.terms {
                term_into(&mut lhs, t, a, self.xb, self.ub, self.y, self.w);
            }
            sink.row(lhs, row.sense, view.rhs(r), &|| format!("{}{}", row.name, self.tag));
        }
        state_rows(sink, self.tpl(), self.xb, &self.tag);
    }

    fn dynamics(&self, sink: &mut dyn Sink, next: usize) {
        for (i, a) in self.tpl().dynamics.iter().enumerate() {
            let mut lhs = Lin::var(next + i);
            lhs.constant -= a.constant;
            for &(t, c) in &a.terms {
                term_into(&mut lhs, t, -c, self.xb, self.ub, self.y, self.w);
            }
            sink.row(lhs, Sense::Eq, 0.0, &|| format!("dyn{i}{}", self.tag));
        }
    }

    fn aggregate(&self) -> Vec<Lin> {
        aggregate_lin(self.tpl(), self.xb, self.y, self.w)
    }
}

fn state_rows(sink: &mut dyn Sink, tpl: &StageTemplate, xb: usize, tag: &str) {
    for row in &tpl.state_rows {
        let mut lhs = Lin::default();
        for &(t, a) in &row.terms {
            if let Term::X(i) = t {
                lhs.add(xb + i, a);
            }
        }
        sink.row(lhs, row.sense, row.rhs, &|| format!("{}{tag}", row.name));
    }
}

/// History rows at a tick. `lagged(k)` gives the `(state, control)` blocks
/// `k` ticks back on the same chain, or `None` before its start. At the end
/// pseudo-tick (`at_end`), lag 0 is the post-dynamics state and rows with a
/// current control are skipped.
fn history_rows(sink: &mut dyn Sink, tpl: &StageTemplate, lagged: &dyn Fn(usize) -> Option<(usize, usize)>, at_end: bool, tag: &str) {
    for row in &tpl.history {
        if at_end && row.has_current_control() {
            continue;
        }
        let mut lhs = Lin::default();
        for &(lag, t, a) in &row.terms {
            if let Some((xb, ub)) = lagged(lag) {
                match t {
                    Term::X(i) => lhs.add(xb + i, a),
                    Term::U(i) => lhs.add(ub + i, a),
                    _ => {}
                }
            }
        }
        let suffix = if at_end { "@end" } else { "" };
        sink.row(lhs, row.sense, row.rhs, &|| format!("{}{tag}{suffix}", row.name));
    }
}

// ---------------------------------------------------------------------------
// full equivalent

/// Column positions of a full-equivalent build, per `[linear tick][scenario]`.
#[derive(Debug, Clone)]
pub struct FullLayout {
    pub set: ScenarioSet,
    pub classes: InfoClasses,
    pub x: Vec<Vec<usize>>,
    pub u: Vec<Vec<usize>>,
    /// Post-dynamics state block.
    pub next: Vec<Vec<usize>>,
}

pub struct FullBuild {
    pub sf: StandardForm,
    pub report: BuildReport,
    pub layout: FullLayout,
}

fn emit_full(p: &MtsProblem, set: ScenarioSet, classes: InfoClasses, compact: bool, sink: &mut dyn Sink) -> (FullLayout, usize) {
    let grid = &p.grid;
    let ids = grid.linear_ids();
    let ns = set.len();
    let mut x = vec![vec![0usize; ns]; ids.len()];
    let mut u = vec![vec![0usize; ns]; ids.len()];
    for (lin, &id) in ids.iter().enumerate() {
        let lm = &p.levels[id.level];
        let tpl = &lm.template;
        let fixed = (id.index == 0).then_some(lm.x0.as_slice());
        let tick = grid.tick(id).clone();
        if compact {
            let (_, groups) = group_by(&set, &(0..lin).collect::<Vec<_>>());
            for (g, members) in groups.iter().enumerate() {
                let b = state_block(sink, tpl, fixed, |i| format!("x{i}{tick}n{g}"));
                members.iter().for_each(|&s| x[lin][s] = b);
            }
            for (c, members) in classes.members[lin].iter().enumerate() {
                let b = control_block(sink, tpl, |i| format!("u{i}{tick}c{c}"));
                members.iter().for_each(|&s| u[lin][s] = b);
            }
        } else {
            for s in 0..ns {
                x[lin][s] = state_block(sink, tpl, fixed, |i| format!("x{i}{tick}s{s}"));
                u[lin][s] = control_block(sink, tpl, |i| format!("u{i}{tick}s{s}"));
            }
        }
    }
    let mut next = vec![vec![0usize; ns]; ids.len()];
    for (lin, &id) in ids.iter().enumerate() {
        match grid.next_id(id) {
            Some(n) => next[lin] = x[grid.linear_index(n)].clone(),
            None => {
                let tpl = &p.levels[id.level].template;
                for s in 0..ns {
                    next[lin][s] = state_block(sink, tpl, None, |i| format!("xend{i}L{}s{s}", id.level + 1));
                }
            }
        }
    }

    for s in 0..ns {
        let sc = &set.scenarios[s];
        let mut ys: Vec<Vec<Lin>> = vec![Vec::new(); ids.len()];
        for (lin, &id) in ids.iter().enumerate() {
            let y_in: &[Lin] = match grid.parent_id(id) {
                Some(par) => &ys[grid.linear_index(par)],
                None => &[],
            };
            let at = At { p, id, xb: x[lin][s], ub: u[lin][s], y: y_in, w: &sc.real[lin].outcome, tag: format!("{}s{s}", grid.tick(id)) };
            at.add_costs(sink, sc.prob);
            at.feasibility(sink);
            at.dynamics(sink, next[lin][s]);
            let tpl = at.tpl();
            let lagged = |k: usize| {
                id.index.checked_sub(k).map(|i| {
                    let l = grid.linear_index(TickId { level: id.level, index: i });
                    (x[l][s], u[l][s])
                })
            };
            history_rows(sink, tpl, &lagged, false, &at.tag);
            if grid.next_id(id).is_none() {
                state_rows(sink, tpl, next[lin][s], &format!("@endL{}s{s}", id.level + 1));
                let len = grid.level_len(id.level);
                let lagged_end = |k: usize| {
                    if k == 0 {
                        Some((next[lin][s], usize::MAX))
                    } else {
                        len.checked_sub(k).map(|i| {
                            let l = grid.linear_index(TickId { level: id.level, index: i });
                            (x[l][s], u[l][s])
                        })
                    }
                };
                history_rows(sink, tpl, &lagged_end, true, &format!("L{}s{s}", id.level + 1));
            }
            if id.level + 1 < p.num_levels() {
                ys[lin] = at.aggregate();
            }
        }
    }

    let mut nac_rows = 0;
    if !compact {
        for (lin, &id) in ids.iter().enumerate() {
            let nu = p.nu(id.level);
            for s in 0..ns {
                let rep = classes.representative(lin, s);
                if rep == s {
                    continue;
                }
                for i in 0..nu {
                    let mut lhs = Lin::var(u[lin][s] + i);
                    lhs.add(u[lin][rep] + i, -1.0);
                    sink.row(lhs, Sense::Eq, 0.0, &|| format!("nac_u{i}{}s{s}", grid.tick(id)));
                    nac_rows += 1;
                }
            }
        }
    }
    (FullLayout { set, classes, x, u, next }, nac_rows)
}

fn prepare_full(p: &MtsProblem, budget: usize) -> Result<(ScenarioSet, InfoClasses)> {
    crate::error::invalid_if_any(p.validate())?;
    let set = scenario::enumerate(&p.grid, &p.stoch, budget)?;
    let classes = scenario::information_classes(&p.grid, &p.stoch, &set, p.interpretation);
    Ok((set, classes))
}

fn full_report(layout: &FullLayout, vars: usize, rows: usize, ints: usize, nac_rows: usize) -> BuildReport {
    BuildReport {
        mode: Mode::Full,
        variables: vars,
        constraints: rows,
        integer_variables: ints,
        nodes_per_level: layout.set.nodes_per_level.clone(),
        scenarios: layout.set.len(),
        nac_classes: layout.classes.count(),
        nac_rows,
    }
}

/// Deterministic-equivalent MILP over every full scenario.
pub fn build_full_equivalent(p: &MtsProblem, opts: &BuildOptions) -> Result<FullBuild> {
    let (set, classes) = prepare_full(p, opts.node_budget)?;
    let mut sink = FormSink::new(opts.compact);
    let (layout, nac_rows) = emit_full(p, set, classes, opts.compact, &mut sink);
    let sf = sink.sf;
    let ints = sf.integer.iter().filter(|b| **b).count();
    let report = full_report(&layout, sf.num_vars(), sf.num_rows(), ints, nac_rows);
    Ok(FullBuild { sf, report, layout })
}

// ---------------------------------------------------------------------------
// synchronized approximation

/// Level-1 part shared by the synchronized MILP and the hybrid solver.
/// Blocks are indexed `[level-1 tick][level-1 scenario]`.
#[derive(Debug, Clone)]
pub struct Level1Layout {
    /// Tree leaf of each level-1 scenario.
    pub leaves: Vec<usize>,
    /// Root-to-leaf tree nodes of each level-1 scenario.
    pub paths: Vec<Vec<usize>>,
    pub probs: Vec<f64>,
    /// `(class of each scenario, members per class)` per level-1 tick.
    pub classes: Vec<(Vec<u32>, Vec<Vec<usize>>)>,
    pub x: Vec<Vec<usize>>,
    pub u: Vec<Vec<usize>>,
    pub next: Vec<Vec<usize>>,
    /// Goal state for the next level's segment under this tick; absent on
    /// the last level-1 tick (free final goal) or when unused.
    pub z: Vec<Vec<Option<usize>>>,
    /// Aggregate expressions passed to level 2.
    pub y: Vec<Vec<Vec<Lin>>>,
    pub nac_rows: usize,
}

impl Level1Layout {
    pub fn class_prob(&self, d: usize, c: usize) -> f64 {
        self.classes[d].1[c].iter().map(|&s| self.probs[s]).sum()
    }
}

/// Level-1 classes: scenarios are told apart by the level-1 outcomes known
/// at each level-1 tick.
pub fn level1_classes(p: &MtsProblem, paths: &[Vec<usize>]) -> Vec<(Vec<u32>, Vec<Vec<usize>>)> {
    let h = p.grid.horizon();
    (0..h)
        .map(|d| {
            let at = TickId { level: 0, index: d };
            let vis: Vec<usize> = (0..h)
                .filter(|&e| scenario::is_visible(&p.grid, &p.stoch, Interpretation::Sequential, TickId { level: 0, index: e }, at))
                .collect();
            let mut map: HashMap<Vec<usize>, u32> = HashMap::new();
            let mut class_of = Vec::new();
            let mut members: Vec<Vec<usize>> = Vec::new();
            for (s, path) in paths.iter().enumerate() {
                let key: Vec<usize> = vis.iter().map(|&e| path[e]).collect();
                let next = members.len() as u32;
                let c = *map.entry(key).or_insert(next);
                if c == next {
                    members.push(Vec::new());
                }
                members[c as usize].push(s);
                class_of.push(c);
            }
            (class_of, members)
        })
        .collect()
}

/// Emits level-1 variables and rows per level-1 scenario, with equality
/// rows tying controls (and goals when `goals` is set) within classes.
pub fn emit_level1(p: &MtsProblem, sink: &mut dyn Sink, goals: bool) -> Result<Level1Layout> {
    let grid = &p.grid;
    let tree = &p.stoch.tree;
    let h = grid.horizon();
    let leaves = tree.leaves();
    let paths: Vec<Vec<usize>> = leaves.iter().map(|&l| tree.path(l)).collect();
    if paths.iter().any(|pa| pa.len() != h) {
        return Err(Error::Parse("scenario tree depth does not match the horizon".into()));
    }
    let probs: Vec<f64> = leaves.iter().map(|&l| tree.path_prob(l)).collect();
    let classes = level1_classes(p, &paths);
    let ns = leaves.len();
    let lm = &p.levels[0];
    let tpl = &lm.template;
    let with_goal = goals && p.num_levels() > 1 && p.nx(1) > 0;

    let mut x = vec![vec![0; ns]; h];
    let mut u = vec![vec![0; ns]; h];
    let mut z = vec![vec![None; ns]; h];
    for d in 0..h {
        let tick = grid.tick(TickId { level: 0, index: d }).clone();
        for s in 0..ns {
            let fixed = (d == 0).then_some(lm.x0.as_slice());
            x[d][s] = state_block(sink, tpl, fixed, |i| format!("x{i}{tick}s{s}"));
            u[d][s] = control_block(sink, tpl, |i| format!("u{i}{tick}s{s}"));
            if with_goal && d + 1 < h {
                let t2 = &p.levels[1].template;
                z[d][s] = Some(state_block(sink, t2, None, |i| format!("z{i}{tick}s{s}")));
            }
        }
    }
    let mut next = vec![vec![0; ns]; h];
    for d in 0..h {
        for s in 0..ns {
            next[d][s] = if d + 1 < h { x[d + 1][s] } else { state_block(sink, tpl, None, |i| format!("xend{i}L1s{s}")) };
        }
    }
    let mut y = vec![vec![Vec::new(); ns]; h];
    for s in 0..ns {
        for d in 0..h {
            let id = TickId { level: 0, index: d };
            let w = &tree.nodes[paths[s][d]].outcome;
            let at = At { p, id, xb: x[d][s], ub: u[d][s], y: &[], w, tag: format!("{}s{s}", grid.tick(id)) };
            at.add_costs(sink, probs[s]);
            at.feasibility(sink);
            at.dynamics(sink, next[d][s]);
            let lagged = |k: usize| d.checked_sub(k).map(|e| (x[e][s], u[e][s]));
            history_rows(sink, tpl, &lagged, false, &at.tag);
            if d + 1 == h {
                state_rows(sink, tpl, next[d][s], &format!("@endL1s{s}"));
                let lagged_end = |k: usize| if k == 0 { Some((next[d][s], usize::MAX)) } else { h.checked_sub(k).map(|e| (x[e][s], u[e][s])) };
                history_rows(sink, tpl, &lagged_end, true, &format!("L1s{s}"));
            }
            if let Some(zb) = z[d][s] {
                state_rows(sink, &p.levels[1].template, zb, &format!("goal{}s{s}", grid.tick(id)));
            }
            if p.num_levels() > 1 {
                y[d][s] = at.aggregate();
            }
        }
    }
    let mut nac_rows = 0;
    for d in 0..h {
        let (class_of, members) = &classes[d];
        for s in 0..ns {
            let rep = members[class_of[s] as usize][0];
            if rep == s {
                continue;
            }
            for i in 0..tpl.nu() {
                let mut lhs = Lin::var(u[d][s] + i);
                lhs.add(u[d][rep] + i, -1.0);
                sink.row(lhs, Sense::Eq, 0.0, &|| format!("nac_u{i}({d})s{s}"));
                nac_rows += 1;
            }
            if let (Some(a), Some(b)) = (z[d][s], z[d][rep]) {
                for i in 0..p.nx(1) {
                    let mut lhs = Lin::var(a + i);
                    lhs.add(b + i, -1.0);
                    sink.row(lhs, Sense::Eq, 0.0, &|| format!("nac_z{i}({d})s{s}"));
                    nac_rows += 1;
                }
            }
        }
    }
    Ok(Level1Layout { leaves, paths, probs, classes, x, u, next, z, y, nac_rows })
}

/// One node of a fast tree: a tick occurrence on level 2 or finer.
#[derive(Debug, Clone)]
pub struct FastNode {
    pub id: TickId,
    /// Node index drawn at this tick.
    pub draw: u32,
    pub label: String,
    pub outcome: Vec<f64>,
    /// Node at the previous position of the same segment.
    pub prev: Option<usize>,
    /// Node on the parent level that owns this segment (`None` for level 2).
    pub owner: Option<usize>,
    pub weight: f64,
    pub x: usize,
    pub u: usize,
    /// Post-dynamics state block at the last position of a segment.
    pub next: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct FastTree {
    /// Level-1 tick index and class the tree hangs from.
    pub d: usize,
    pub class: usize,
    pub nodes: Vec<FastNode>,
}

#[derive(Debug, Clone)]
pub struct SyncLayout {
    pub l1: Level1Layout,
    pub trees: Vec<FastTree>,
    pub tree_index: HashMap<(usize, usize), usize>,
}

pub struct SyncBuild {
    pub sf: StandardForm,
    pub report: BuildReport,
    pub layout: SyncLayout,
}

enum Start<'a> {
    Fixed(&'a [f64]),
    Goal(usize),
}

struct SegmentCtx<'a> {
    p: &'a MtsProblem,
    budget: usize,
    count: usize,
}

impl SegmentCtx<'_> {
    /// Emits the fast tree of the segment under `parent`.
    #[allow(clippy::too_many_arguments)]
    fn segment(
        &mut self,
        sink: &mut dyn Sink,
        tree: &mut FastTree,
        parent: TickId,
        parent_label: &str,
        y_in: &[Lin],
        weight: f64,
        start: Option<Start<'_>>,
        goal: Option<usize>,
        owner: Option<usize>,
    ) -> Result<()> {
        let ticks = self.p.grid.children_ids(parent);
        let mut chain = Vec::new();
        self.position(sink, tree, &ticks, 0, None, parent_label, y_in, weight, &start, goal, owner, &mut chain)
    }

    #[allow(clippy::too_many_arguments)]
    fn position(
        &mut self,
        sink: &mut dyn Sink,
        tree: &mut FastTree,
        ticks: &[TickId],
        k: usize,
        prev: Option<usize>,
        parent_label: &str,
        y_in: &[Lin],
        weight: f64,
        start: &Option<Start<'_>>,
        goal: Option<usize>,
        owner: Option<usize>,
        chain: &mut Vec<(usize, usize)>,
    ) -> Result<()> {
        let p = self.p;
        let id = ticks[k];
        let level = id.level;
        let tpl = &p.levels[level].template;
        let tick = p.grid.tick(id).clone();
        let prev_draw = prev.map(|n| tree.nodes[n].draw);
        for r in draws(&p.grid, &p.stoch, id, parent_label, prev_draw)? {
            self.count += 1;
            if self.count > self.budget {
                return Err(Error::Budget { what: "synchronized tree nodes".into(), count: self.count as u128, limit: self.budget as u128 });
            }
            let me = tree.nodes.len();
            let tag = format!("{tick}d{}c{}n{me}", tree.d, tree.class);
            let w_node = weight * r.prob;
            let xb = state_block(sink, tpl, None, |i| format!("x{i}{tag}"));
            let ub = control_block(sink, tpl, |i| format!("u{i}{tag}"));
            tree.nodes.push(FastNode {
                id,
                draw: r.node,
                label: r.label.clone(),
                outcome: r.outcome.clone(),
                prev,
                owner,
                weight: w_node,
                x: xb,
                u: ub,
                next: None,
            });
            match (prev, start) {
                (Some(pn), _) => {
                    let pn = &tree.nodes[pn];
                    let at = At { p, id: pn.id, xb: pn.x, ub: pn.u, y: y_in, w: &pn.outcome, tag: tag.clone() };
                    at.dynamics(sink, xb);
                }
                (None, Some(Start::Fixed(v))) => {
                    for (i, val) in v.iter().enumerate() {
                        sink.row(Lin::var(xb + i), Sense::Eq, *val, &|| format!("start{i}{tag}"));
                    }
                }
                (None, Some(Start::Goal(zb))) => {
                    for i in 0..tpl.nx() {
                        let mut lhs = Lin::var(xb + i);
                        lhs.add(zb + i, -1.0);
                        sink.row(lhs, Sense::Eq, 0.0, &|| format!("start{i}{tag}"));
                    }
                }
                (None, None) => {}
            }
            let at = At { p, id, xb, ub, y: y_in, w: &r.outcome, tag: tag.clone() };
            at.add_costs(sink, w_node);
            at.feasibility(sink);
            chain.push((xb, ub));
            {
                let lagged = |lag: usize| chain.len().checked_sub(lag + 1).map(|i| chain[i]);
                history_rows(sink, tpl, &lagged, false, &tag);
            }
            if level + 1 < p.num_levels() {
                let y_here = at.aggregate();
                self.segment(sink, tree, id, &r.label, &y_here, w_node, None, None, Some(me))?;
            }
            if k + 1 == ticks.len() {
                let nb = state_block(sink, tpl, None, |i| format!("xend{i}{tag}"));
                tree.nodes[me].next = Some(nb);
                at.dynamics(sink, nb);
                state_rows(sink, tpl, nb, &format!("@end{tag}"));
                let lagged_end = |lag: usize| if lag == 0 { Some((nb, usize::MAX)) } else { chain.len().checked_sub(lag).map(|i| chain[i]) };
                history_rows(sink, tpl, &lagged_end, true, &tag);
                if let Some(zb) = goal {
                    match p.levels[level].terminal {
                        Terminal::Hard => {
                            for i in 0..tpl.nx() {
                                let mut lhs = Lin::var(nb + i);
                                lhs.add(zb + i, -1.0);
                                sink.row(lhs, Sense::Eq, 0.0, &|| format!("goal{i}{tag}"));
                            }
                        }
                        Terminal::L1(rho) => {
                            for i in 0..tpl.nx() {
                                let dp = sink.var(0.0, f64::INFINITY, false, rho * w_node, &|| format!("devp{i}{tag}"));
                                let dm = sink.var(0.0, f64::INFINITY, false, rho * w_node, &|| format!("devm{i}{tag}"));
                                let mut lhs = Lin::var(nb + i);
                                lhs.add(zb + i, -1.0);
                                lhs.add(dp, -1.0);
                                lhs.add(dm, 1.0);
                                sink.row(lhs, Sense::Eq, 0.0, &|| format!("goal{i}{tag}"));
                            }
                        }
                    }
                }
            } else {
                self.position(sink, tree, ticks, k + 1, Some(me), parent_label, y_in, w_node, start, goal, owner, chain)?;
            }
            chain.pop();
        }
        Ok(())
    }
}

/// Checks the structural requirements of the synchronized builder.
pub fn check_sync_supported(p: &MtsProblem) -> Result<()> {
    if !p.stoch.all_hazard_decision() {
        return Err(Error::Unsupported("the synchronized formulation requires hazard-decision timing on every timescale".into()));
    }
    if !p.stoch.stage_length_one() {
        return Err(Error::Unsupported("the synchronized formulation requires one level-1 tick per stochastic stage".into()));
    }
    for j in 2..p.num_levels() {
        let t = &p.levels[j].template;
        if t.nx() > 0 || !t.history.is_empty() {
            return Err(Error::Unsupported(format!("timescale {} must be stateless without history rows for the synchronized formulation", j + 1)));
        }
    }
    Ok(())
}

fn emit_sync(p: &MtsProblem, sink: &mut dyn Sink, budget: usize) -> Result<(SyncLayout, Vec<usize>)> {
    check_sync_supported(p)?;
    let l1 = emit_level1(p, sink, true)?;
    let mut per_level = vec![0usize; p.num_levels()];
    per_level[0] = p.stoch.tree.len();
    if per_level[0] > budget {
        return Err(Error::Budget { what: "synchronized tree nodes".into(), count: per_level[0] as u128, limit: budget as u128 });
    }
    let mut ctx = SegmentCtx { p, budget, count: per_level[0] };
    let mut trees = Vec::new();
    let mut tree_index = HashMap::new();
    if p.num_levels() > 1 {
        let x0 = p.levels[1].x0.clone();
        for d in 0..p.grid.horizon() {
            let (class_of, members) = &l1.classes[d];
            for (c, m) in members.iter().enumerate() {
                let rep = m[0];
                let weight = l1.class_prob(d, c);
                let label = p.stoch.tree.nodes[l1.paths[rep][d]].label.clone();
                let start = if d == 0 || p.nx(1) == 0 { Some(Start::Fixed(&x0)) } else { l1.z[d - 1][rep].map(Start::Goal) };
                let goal = l1.z[d][rep];
                let mut tree = FastTree { d, class: c, nodes: Vec::new() };
                ctx.segment(sink, &mut tree, TickId { level: 0, index: d }, &label, &l1.y[d][rep], weight, start, goal, None)?;
                for n in &tree.nodes {
                    per_level[n.id.level] += 1;
                }
                tree_index.insert((d, c), trees.len());
                trees.push(tree);
                debug_assert_eq!(class_of[rep] as usize, c);
            }
        }
    }
    Ok((SyncLayout { l1, trees, tree_index }, per_level))
}

fn sync_report(layout: &SyncLayout, per_level: Vec<usize>, vars: usize, rows: usize, ints: usize) -> BuildReport {
    BuildReport {
        mode: Mode::Synchronized,
        variables: vars,
        constraints: rows,
        integer_variables: ints,
        nodes_per_level: per_level,
        scenarios: layout.l1.leaves.len(),
        nac_classes: layout.l1.classes.iter().map(|c| c.1.len()).sum(),
        nac_rows: layout.l1.nac_rows,
    }
}

/// Multi-horizon MILP under the synchronized state approximation.
pub fn build_synchronized(p: &MtsProblem, opts: &BuildOptions) -> Result<SyncBuild> {
    crate::error::invalid_if_any(p.validate())?;
    let mut sink = FormSink::new(false);
    let (layout, per_level) = emit_sync(p, &mut sink, opts.node_budget)?;
    let sf = sink.sf;
    let ints = sf.integer.iter().filter(|b| **b).count();
    let report = sync_report(&layout, per_level, sf.num_vars(), sf.num_rows(), ints);
    Ok(SyncBuild { sf, report, layout })
}

/// Exact build statistics without assembling a matrix.
pub fn count_nodes(p: &MtsProblem, mode: Mode, opts: &BuildOptions) -> Result<BuildReport> {
    let mut sink = CountSink::default();
    match mode {
        Mode::Full => {
            let (set, classes) = prepare_full(p, opts.node_budget)?;
            let (layout, nac_rows) = emit_full(p, set, classes, false, &mut sink);
            Ok(full_report(&layout, sink.vars, sink.rows, sink.integers, nac_rows))
        }
        Mode::Synchronized => {
            crate::error::invalid_if_any(p.validate())?;
            let (layout, per_level) = emit_sync(p, &mut sink, opts.node_budget)?;
            Ok(sync_report(&layout, per_level, sink.vars, sink.rows, sink.integers))
        }
    }
}

fn read(sol: &[f64], start: usize, n: usize) -> Vec<f64> {
    if n == 0 {
        Vec::new()
    } else {
        sol[start..start + n].to_vec()
    }
}

impl FullLayout {
    /// Reads a MILP solution back into per-scenario trajectories.
    pub fn trajectory(&self, p: &MtsProblem, sol: &[f64]) -> Trajectory {
        let ids = p.grid.linear_ids();
        let ns = self.set.len();
        let grab = |blocks: &Vec<Vec<usize>>, n: &dyn Fn(usize) -> usize| -> Vec<Vec<Vec<f64>>> {
            (0..ids.len()).map(|l| (0..ns).map(|s| read(sol, blocks[l][s], n(ids[l].level))).collect()).collect()
        };
        Trajectory {
            mode: Mode::Full,
            scenarios: self.set.clone(),
            x: grab(&self.x, &|j| p.nx(j)),
            u: grab(&self.u, &|j| p.nu(j)),
            next: grab(&self.next, &|j| p.nx(j)),
            goals: Vec::new(),
        }
    }
}

impl SyncLayout {
    /// Maps a MILP solution onto every full scenario by walking the fast
    /// trees along each scenario's draws.
    pub fn trajectory(&self, p: &MtsProblem, sol: &[f64], node_budget: usize) -> Result<Trajectory> {
        let grid = &p.grid;
        let set = scenario::enumerate(grid, &p.stoch, node_budget)?;
        let ids = grid.linear_ids();
        let h = grid.horizon();
        let last1 = grid.linear_index(TickId { level: 0, index: h - 1 });
        let leaf_pos: HashMap<usize, usize> = self.l1.leaves.iter().enumerate().map(|(i, &l)| (l, i)).collect();
        let ns = set.len();
        let nt = ids.len();
        let mut x = vec![vec![Vec::new(); ns]; nt];
        let mut u = vec![vec![Vec::new(); ns]; nt];
        let mut next = vec![vec![Vec::new(); ns]; nt];
        let mut goals = vec![vec![Vec::new(); ns]; h];
        for (s, sc) in set.scenarios.iter().enumerate() {
            let s1 = leaf_pos[&(sc.real[last1].node as usize)];
            let mut node_of: Vec<Option<usize>> = vec![None; nt];
            for (lin, &id) in ids.iter().enumerate() {
                if id.level == 0 {
                    let d = id.index;
                    x[lin][s] = read(sol, self.l1.x[d][s1], p.nx(0));
                    u[lin][s] = read(sol, self.l1.u[d][s1], p.nu(0));
                    next[lin][s] = read(sol, self.l1.next[d][s1], p.nx(0));
                    if let Some(z) = self.l1.z[d][s1] {
                        goals[d][s] = read(sol, z, p.nx(1));
                    }
                    continue;
                }
                let d = grid.ancestor(id, 0).index;
                let class = self.l1.classes[d].0[s1] as usize;
                let tree = &self.trees[self.tree_index[&(d, class)]];
                let owner = if id.level == 1 { None } else { node_of[grid.linear_index(grid.parent_id(id).expect("level > 0"))] };
                let prev = if grid.position_in_segment(id) == 0 { None } else { node_of[grid.linear_index(grid.prev_id(id).expect("not first"))] };
                let k = tree
                    .nodes
                    .iter()
                    .position(|n| n.id == id && n.owner == owner && n.prev == prev && n.draw == sc.real[lin].node)
                    .ok_or_else(|| Error::Unsupported(format!("scenario {s} has no fast-tree node at {}", grid.tick(id))))?;
                node_of[lin] = Some(k);
                let n = &tree.nodes[k];
                x[lin][s] = read(sol, n.x, p.nx(id.level));
                u[lin][s] = read(sol, n.u, p.nu(id.level));
            }
            for (lin, &id) in ids.iter().enumerate() {
                if id.level == 0 {
                    continue;
                }
                if grid.is_last_in_segment(id) {
                    let d = grid.ancestor(id, 0).index;
                    let class = self.l1.classes[d].0[s1] as usize;
                    let tree = &self.trees[self.tree_index[&(d, class)]];
                    let n = &tree.nodes[node_of[lin].expect("mapped above")];
                    next[lin][s] = read(sol, n.next.expect("last position has a post state"), p.nx(id.level));
                } else {
                    next[lin][s] = x[grid.linear_index(grid.next_id(id).expect("not last"))][s].clone();
                }
            }
        }
        Ok(Trajectory { mode: Mode::Synchronized, scenarios: set, x, u, next, goals })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Affine, LevelModel, TickOverride};
    use crate::samples::{self, DispatchVariant};
    use crate::stochastic::{ConditionalNoise, LevelUncertainty, StochasticSpec};
    use crate::timegrid::TimeGrid;
    use mts_milp::{solve_milp, MilpOptions, MilpStatus};

    fn solve(sf: &StandardForm) -> (MilpStatus, f64) {
        let r = solve_milp(sf, &MilpOptions::default());
        (r.status, r.objective)
    }

    #[test]
    fn deterministic_two_stage_is_a_plain_lp() {
        // buy now at 1 or later at 4; demand 3 then 2
        let grid = TimeGrid::uniform(2, &[]).unwrap();
        let mut stoch = StochasticSpec::deterministic(&grid);
        stoch.tree.nodes[0].outcome = vec![3.0];
        stoch.tree.nodes[1].outcome = vec![2.0];
        let tpl = StageTemplate {
            x_lb: vec![0.0],
            x_ub: vec![4.0],
            x_int: vec![false],
            u_lb: vec![0.0],
            u_ub: vec![10.0],
            u_int: vec![false],
            c: vec![0.0],
            d: vec![4.0],
            dynamics: vec![Affine::new([(Term::X(0), 1.0), (Term::U(0), 1.0), (Term::W(0), -1.0)], 0.0)],
            ..Default::default()
        };
        let mut lm = LevelModel::new(tpl, vec![0.0]);
        lm.overrides.insert("(0)".parse().unwrap(), TickOverride { d: Some(vec![1.0]), ..Default::default() });
        let p = MtsProblem { name: "lp".into(), grid, stoch, levels: vec![lm], interpretation: Interpretation::Simultaneous };
        let b = build_full_equivalent(&p, &BuildOptions::default()).unwrap();
        // buying everything early (5 units at 1) beats the later price
        let (st, obj) = solve(&b.sf);
        assert_eq!(st, MilpStatus::Optimal);
        assert!((obj - 5.0).abs() < 1e-9);
    }

    #[test]
    fn counts_match_builds() {
        for p in samples::golden_set() {
            let opts = BuildOptions::default();
            let full = build_full_equivalent(&p, &opts).unwrap();
            assert_eq!(count_nodes(&p, Mode::Full, &opts).unwrap(), full.report);
            assert_eq!(full.report.variables, full.sf.num_vars());
            assert_eq!(full.report.constraints, full.sf.num_rows());
            if let Ok(sync) = build_synchronized(&p, &opts) {
                assert_eq!(count_nodes(&p, Mode::Synchronized, &opts).unwrap(), sync.report);
                assert!(sync.report.variables <= full.report.variables, "{}", p.name);
            }
        }
    }

    #[test]
    fn expanded_count_matches_product_formula() {
        let grid = TimeGrid::uniform(1, &[2, 2]).unwrap();
        let noise = LevelUncertainty::Noise(ConditionalNoise::unconditional(vec![(vec![0.0], 0.5), (vec![1.0], 0.5)]));
        let mut stoch = StochasticSpec::deterministic(&grid);
        stoch.fine = vec![noise.clone(), noise];
        let set = scenario::enumerate(&grid, &stoch, 10_000).unwrap();
        // six branching ticks after a fixed root
        let expected: usize = (0..=6).map(|k| 1usize << k).sum();
        assert_eq!(set.expanded_nodes, expected);
        assert_eq!(set.len(), 64);
    }

    #[test]
    fn single_level_modes_agree() {
        let p = samples::inventory();
        let opts = BuildOptions::default();
        let a = count_nodes(&p, Mode::Full, &opts).unwrap();
        let b = count_nodes(&p, Mode::Synchronized, &opts).unwrap();
        assert_eq!((a.variables, a.constraints, a.total_nodes()), (b.variables, b.constraints, b.total_nodes()));
    }

    #[test]
    fn boundary_rows_pin_every_fast_root_and_leaf() {
        let p = samples::dispatch(DispatchVariant::FastLattice);
        let b = build_synchronized(&p, &BuildOptions::default()).unwrap();
        let named = |prefix: &str| b.sf.rows.iter().filter(|r| r.name.starts_with(prefix)).count();
        let roots: usize = b.layout.trees.iter().map(|t| t.nodes.iter().filter(|n| n.prev.is_none() && n.owner.is_none()).count()).sum();
        let goal_leaves: usize = b.layout.trees.iter().filter(|t| t.d + 1 < p.grid.horizon()).map(|t| t.nodes.iter().filter(|n| n.next.is_some()).count()).sum();
        assert_eq!(named("start"), roots);
        assert_eq!(named("goal"), goal_leaves);
    }

    #[test]
    fn relaxed_and_compact_encodings_agree() {
        for p in samples::golden_set() {
            let a = build_full_equivalent(&p, &BuildOptions::default()).unwrap();
            let b = build_full_equivalent(&p, &BuildOptions { compact: true, ..Default::default() }).unwrap();
            let (sa, oa) = solve(&a.sf);
            let (sb, ob) = solve(&b.sf);
            assert_eq!(sa, sb);
            assert!((oa - ob).abs() < 1e-6, "{}: {oa} vs {ob}", p.name);
            assert!(b.sf.num_vars() <= a.sf.num_vars());
        }
    }

    #[test]
    fn soft_goals_relax_hard_goals() {
        let mut p = samples::dispatch(DispatchVariant::FastLattice);
        let (_, hard) = solve(&build_synchronized(&p, &BuildOptions::default()).unwrap().sf);
        p.levels[1].terminal = Terminal::L1(0.0);
        let (_, soft) = solve(&build_synchronized(&p, &BuildOptions::default()).unwrap().sf);
        assert!(soft <= hard + 1e-9);
    }

    #[test]
    fn budget_is_enforced() {
        let p = samples::dispatch(DispatchVariant::FastLattice);
        let opts = BuildOptions { node_budget: 5, ..Default::default() };
        assert!(matches!(build_full_equivalent(&p, &opts), Err(Error::Budget { .. })));
        assert!(matches!(count_nodes(&p, Mode::Synchronized, &opts), Err(Error::Budget { .. })));
    }
}
