//! Brute-force ground truth for tiny instances, and an independent replay
//! of solution trajectories.
//!
//! The enumerator walks the information classes in linear tick order and
//! tries every grid control for each class, simulating all scenarios of the
//! class as it goes. Only infeasible partial policies are cut; there is no
//! bounding.

use std::fmt;

use crate::error::{Error, Result, Violation};
use crate::instantiate::{check_sync_supported, Mode, DEFAULT_NODE_BUDGET};
use crate::model::{MtsProblem, StageTemplate, Terminal};
use crate::scenario::{self, InfoClasses, ScenarioSet};
use crate::timegrid::{Tick, TickId};

pub const DEFAULT_POLICY_BUDGET: u128 = 10_000_000;
pub const TOL: f64 = 1e-9;

/// Realized states and controls on every tick of every full scenario.
/// Arrays are indexed `[linear tick][scenario]`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub mode: Mode,
    pub scenarios: ScenarioSet,
    pub x: Vec<Vec<Vec<f64>>>,
    pub u: Vec<Vec<Vec<f64>>>,
    /// State after the tick's dynamics.
    pub next: Vec<Vec<Vec<f64>>>,
    /// Synchronized mode: level-2 goal set at each level-1 tick,
    /// `[level-1 tick][scenario]`; empty where no goal applies.
    pub goals: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct TrajectoryCheck {
    pub violations: Vec<Violation>,
    /// Expected cost including goal-deviation penalties.
    pub cost: f64,
}

impl TrajectoryCheck {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Which same-level ticks a history row may reach back to, and where the
/// end pseudo-tick sits.
fn chain_start(p: &MtsProblem, mode: Mode, id: TickId) -> usize {
    if mode == Mode::Synchronized && id.level > 0 {
        id.index - p.grid.position_in_segment(id)
    } else {
        0
    }
}

fn ends_chain(p: &MtsProblem, mode: Mode, id: TickId) -> bool {
    match p.grid.next_id(id) {
        None => true,
        Some(_) => mode == Mode::Synchronized && id.level > 0 && p.grid.is_last_in_segment(id),
    }
}

fn lin_at(p: &MtsProblem, level: usize, index: usize) -> usize {
    p.grid.linear_index(TickId { level, index })
}

fn classes_for(p: &MtsProblem, mode: Mode, set: &ScenarioSet) -> InfoClasses {
    match mode {
        Mode::Full => scenario::information_classes(&p.grid, &p.stoch, set, p.interpretation),
        Mode::Synchronized => scenario::sync_classes(&p.grid, &p.stoch, set),
    }
}

fn uses_goals(p: &MtsProblem, mode: Mode, d: usize) -> bool {
    mode == Mode::Synchronized && p.num_levels() > 1 && p.nx(1) > 0 && d + 1 < p.grid.horizon()
}

fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Replays dynamics, feasibility, aggregation, history rows,
/// non-anticipativity and segment boundary conditions of a trajectory.
pub fn validate_trajectory(p: &MtsProblem, t: &Trajectory, tol: f64) -> TrajectoryCheck {
    let grid = &p.grid;
    let ids = grid.linear_ids();
    let ns = t.scenarios.len();
    let mut v = Vec::new();
    let shape_ok = t.x.len() == ids.len()
        && t.u.len() == ids.len()
        && t.next.len() == ids.len()
        && t.x.iter().chain(&t.u).chain(&t.next).all(|r| r.len() == ns);
    if !shape_ok {
        v.push(Violation::new("trajectory", "does not cover every tick and scenario"));
        return TrajectoryCheck { violations: v, cost: f64::NAN };
    }
    let mut cost = 0.0;
    let mut y: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); ns]; ids.len()];
    for (s, sc) in t.scenarios.scenarios.iter().enumerate() {
        for (lin, &id) in ids.iter().enumerate() {
            let tick = grid.tick(id);
            let at = format!("{tick} s{s}");
            let lm = &p.levels[id.level];
            let tpl = &lm.template;
            let view = p.view(id);
            let (x, u, nx) = (&t.x[lin][s], &t.u[lin][s], &t.next[lin][s]);
            if x.len() != tpl.nx() || u.len() != tpl.nu() || nx.len() != tpl.nx() {
                v.push(Violation::new(&at, "wrong vector length"));
                continue;
            }
            let y_in: &[f64] = match grid.parent_id(id) {
                Some(par) => &y[grid.linear_index(par)][s],
                None => &[],
            };
            let w = &sc.real[lin].outcome;
            for (name, r) in tpl.state_violations(x, tol) {
                v.push(Violation::new(&at, format!("{name} violated by {r:.3e}")));
            }
            for (name, r) in view.row_violations(x, u, y_in, w, tol) {
                v.push(Violation::new(&at, format!("{name} violated by {r:.3e}")));
            }
            let stepped = tpl.step(x, u, y_in, w).expect("lengths checked");
            let dev = max_dev(&stepped, nx);
            if dev > tol {
                v.push(Violation::new(&at, format!("dynamics residual {dev:.3e}")));
            }
            let start = chain_start(p, t.mode, id);
            let lagged = |lag: usize| {
                if lag == 0 {
                    return Some((x.as_slice(), u.as_slice()));
                }
                id.index.checked_sub(lag).filter(|&i| i >= start).map(|i| {
                    let l = lin_at(p, id.level, i);
                    (t.x[l][s].as_slice(), t.u[l][s].as_slice())
                })
            };
            for row in &tpl.history {
                let r = row.residual(&lagged);
                if r > tol {
                    v.push(Violation::new(&at, format!("{} violated by {r:.3e}", row.name)));
                }
            }
            // where this tick's state comes from
            let expected_x: Option<&[f64]> = if t.mode == Mode::Synchronized && id.level == 1 && grid.position_in_segment(id) == 0 {
                let d = grid.ancestor(id, 0).index;
                if d == 0 || !uses_goals(p, t.mode, d - 1) {
                    Some(&p.levels[1].x0)
                } else {
                    t.goals.get(d - 1).and_then(|g| g.get(s)).map(|g| g.as_slice())
                }
            } else if id.index == 0 || (t.mode == Mode::Synchronized && id.level > 0 && grid.position_in_segment(id) == 0) {
                Some(&lm.x0)
            } else {
                let prev = grid.prev_id(id).expect("not the first tick");
                Some(&t.next[grid.linear_index(prev)][s])
            };
            match expected_x {
                Some(e) if e.len() == x.len() => {
                    let dev = max_dev(e, x);
                    if dev > tol {
                        v.push(Violation::new(&at, format!("state does not continue its predecessor (off by {dev:.3e})")));
                    }
                }
                _ => v.push(Violation::new(&at, "missing goal state for the segment start")),
            }
            if ends_chain(p, t.mode, id) {
                for (name, r) in tpl.state_violations(nx, tol) {
                    v.push(Violation::new(&at, format!("end state: {name} violated by {r:.3e}")));
                }
                let len = id.index + 1;
                let lagged_end = |lag: usize| {
                    if lag == 0 {
                        return Some((nx.as_slice(), &[][..]));
                    }
                    len.checked_sub(lag).filter(|&i| i >= start).map(|i| {
                        let l = lin_at(p, id.level, i);
                        (t.x[l][s].as_slice(), t.u[l][s].as_slice())
                    })
                };
                for row in tpl.history.iter().filter(|r| !r.has_current_control()) {
                    let r = row.residual(&lagged_end);
                    if r > tol {
                        v.push(Violation::new(&at, format!("end: {} violated by {r:.3e}", row.name)));
                    }
                }
                if t.mode == Mode::Synchronized && id.level == 1 {
                    let d = grid.ancestor(id, 0).index;
                    if uses_goals(p, t.mode, d) {
                        match t.goals.get(d).and_then(|g| g.get(s)) {
                            Some(goal) if goal.len() == nx.len() => match lm.terminal {
                                Terminal::Hard => {
                                    let dev = max_dev(goal, nx);
                                    if dev > tol {
                                        v.push(Violation::new(&at, format!("segment misses its goal by {dev:.3e}")));
                                    }
                                }
                                Terminal::L1(rho) => cost += sc.prob * rho * l1(goal, nx),
                            },
                            _ => v.push(Violation::new(&at, "missing goal state for the segment end")),
                        }
                    }
                }
            }
            cost += sc.prob * view.cost(x, u);
            if id.level + 1 < p.num_levels() {
                y[lin][s] = tpl.aggregate(x, y_in, w).expect("lengths checked");
            }
        }
    }

    let classes = classes_for(p, t.mode, &t.scenarios);
    for (lin, &id) in ids.iter().enumerate() {
        for (c, members) in classes.members[lin].iter().enumerate() {
            let rep = &t.u[lin][members[0]];
            let dev = members.iter().map(|&s| max_dev(rep, &t.u[lin][s])).fold(0.0, f64::max);
            if dev > tol {
                v.push(Violation::new(
                    format!("{} class {c}", grid.tick(id)),
                    format!("non-anticipativity: scenarios {members:?} disagree on controls by {dev:.3e}"),
                ));
            }
            if id.level == 0 && uses_goals(p, t.mode, id.index) {
                let g = |s: usize| t.goals.get(id.index).and_then(|r| r.get(s));
                if let Some(rep) = g(members[0]) {
                    let t2 = &p.levels[1].template;
                    for (name, r) in t2.state_violations(rep, tol) {
                        v.push(Violation::new(format!("{} goal", grid.tick(id)), format!("{name} violated by {r:.3e}")));
                    }
                    let dev = members.iter().filter_map(|&s| g(s)).map(|z| max_dev(rep, z)).fold(0.0, f64::max);
                    if dev > tol {
                        v.push(Violation::new(
                            format!("{} class {c}", grid.tick(id)),
                            format!("non-anticipativity: scenarios {members:?} disagree on goals by {dev:.3e}"),
                        ));
                    }
                }
            }
        }
    }
    TrajectoryCheck { violations: v, cost }
}

/// Candidate values searched by the oracle.
#[derive(Debug, Clone)]
pub struct OracleGrid {
    /// Candidate control vectors per level.
    pub controls: Vec<Vec<Vec<f64>>>,
    /// Candidate level-2 goal states (synchronized mode).
    pub goals: Vec<Vec<f64>>,
}

pub(crate) fn axis(lb: f64, ub: f64, step: f64, what: &str) -> Result<Vec<f64>> {
    if !(lb.is_finite() && ub.is_finite()) {
        return Err(Error::Unsupported(format!("{what} needs finite bounds for grid enumeration")));
    }
    let n = ((ub - lb) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| lb + k as f64 * step).collect())
}

pub(crate) fn product(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    axes.iter().fold(vec![Vec::new()], |acc, ax| {
        acc.iter()
            .flat_map(|pre| {
                ax.iter().map(move |&a| {
                    let mut v = pre.clone();
                    v.push(a);
                    v
                })
            })
            .collect()
    })
}

impl OracleGrid {
    /// Integer variables take every integer in their bounds; continuous ones
    /// are sampled from the lower bound in increments of `step`.
    pub fn from_bounds(p: &MtsProblem, step: f64) -> Result<Self> {
        let level_axes = |t: &StageTemplate, j: usize| -> Result<Vec<Vec<f64>>> {
            (0..t.nu())
                .map(|k| axis(t.u_lb[k], t.u_ub[k], if t.u_int[k] { 1.0 } else { step }, &format!("level {} control {k}", j + 1)))
                .collect()
        };
        let mut controls = Vec::new();
        for (j, lm) in p.levels.iter().enumerate() {
            controls.push(product(&level_axes(&lm.template, j)?));
        }
        let goals = if p.num_levels() > 1 {
            let t = &p.levels[1].template;
            let axes: Vec<Vec<f64>> = (0..t.nx())
                .map(|k| axis(t.x_lb[k], t.x_ub[k], if t.x_int[k] { 1.0 } else { step }, &format!("level 2 state {k}")))
                .collect::<Result<_>>()?;
            product(&axes)
        } else {
            Vec::new()
        };
        Ok(OracleGrid { controls, goals })
    }
}

#[derive(Debug, Clone)]
pub struct OracleOptions {
    pub mode: Mode,
    pub budget: u128,
    pub node_budget: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { mode: Mode::Full, budget: DEFAULT_POLICY_BUDGET, node_budget: DEFAULT_NODE_BUDGET }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEntry {
    pub tick: Tick,
    pub class: usize,
    pub members: Vec<usize>,
    /// Control, or the goal state for goal entries.
    pub value: Vec<f64>,
    pub is_goal: bool,
}

impl fmt::Display for PolicyEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = if self.is_goal { "goal" } else { "control" };
        write!(f, "{} class {} {kind} {:?}", self.tick, self.class, self.value)
    }
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    /// `+inf` when no grid policy is feasible.
    pub objective: f64,
    pub policy: Vec<PolicyEntry>,
    pub trajectory: Option<Trajectory>,
    /// Number of complete policies the grid admits.
    pub policy_space: u128,
    /// Complete feasible policies evaluated.
    pub evaluated: u64,
    /// Partial assignments cut for infeasibility.
    pub pruned: u64,
}

impl OracleResult {
    pub fn is_feasible(&self) -> bool {
        self.objective.is_finite()
    }
}

#[derive(Clone, Copy)]
enum Point {
    Control { lin: usize, class: usize },
    Goal { d: usize, class: usize },
}

struct Search<'a> {
    p: &'a MtsProblem,
    mode: Mode,
    set: &'a ScenarioSet,
    classes: InfoClasses,
    points: Vec<Point>,
    cands: Vec<&'a [Vec<f64>]>,
    x: Vec<Vec<Vec<f64>>>,
    u: Vec<Vec<Vec<f64>>>,
    next: Vec<Vec<Vec<f64>>>,
    y: Vec<Vec<Vec<f64>>>,
    goals: Vec<Vec<Vec<f64>>>,
    choice: Vec<usize>,
    best: f64,
    best_choice: Option<Vec<usize>>,
    best_state: Option<Trajectory>,
    evaluated: u64,
    pruned: u64,
}

impl Search<'_> {
    fn members(&self, k: usize) -> &[usize] {
        match self.points[k] {
            Point::Control { lin, class } => &self.classes.members[lin][class],
            Point::Goal { d, class } => &self.classes.members[lin_at(self.p, 0, d)][class],
        }
    }

    fn start_state(&self, id: TickId, s: usize) -> Vec<f64> {
        let p = self.p;
        let grid = &p.grid;
        let seg_start = self.mode == Mode::Synchronized && id.level > 0 && grid.position_in_segment(id) == 0;
        if seg_start && id.level == 1 {
            let d = grid.ancestor(id, 0).index;
            if d > 0 && uses_goals(p, self.mode, d - 1) {
                return self.goals[d - 1][s].clone();
            }
            return p.levels[1].x0.clone();
        }
        if id.index == 0 || seg_start {
            return p.levels[id.level].x0.clone();
        }
        self.next[grid.linear_index(grid.prev_id(id).expect("not first"))][s].clone()
    }

    /// Applies control `u` at linear tick `lin` for scenario `s`; returns the
    /// weighted cost or `None` if infeasible.
    fn apply(&mut self, lin: usize, s: usize, u: &[f64]) -> Option<f64> {
        let p = self.p;
        let grid = &p.grid;
        let id = grid.linear_ids()[lin];
        let lm = &p.levels[id.level];
        let tpl = &lm.template;
        let view = p.view(id);
        let sc = &self.set.scenarios[s];
        let w = &sc.real[lin].outcome;
        let x = self.start_state(id, s);
        let y_in: Vec<f64> = grid.parent_id(id).map(|par| self.y[grid.linear_index(par)][s].clone()).unwrap_or_default();
        if !view.row_violations(&x, u, &y_in, w, TOL).is_empty() {
            return None;
        }
        let nx = tpl.step(&x, u, &y_in, w).expect("dimensions validated");
        if !tpl.state_violations(&nx, TOL).is_empty() {
            return None;
        }
        let mut cost = sc.prob * view.cost(&x, u);
        if id.level + 1 < p.num_levels() {
            self.y[lin][s] = tpl.aggregate(&x, &y_in, w).expect("dimensions validated");
        }
        self.x[lin][s] = x;
        self.u[lin][s] = u.to_vec();
        self.next[lin][s] = nx;

        let start = chain_start(p, self.mode, id);
        let (xs, us) = (&self.x, &self.u);
        let at_index = |i: usize| {
            let l = lin_at(p, id.level, i);
            (xs[l][s].as_slice(), us[l][s].as_slice())
        };
        let lagged = |lag: usize| id.index.checked_sub(lag).filter(|&i| i >= start).map(at_index);
        if tpl.history.iter().any(|r| r.residual(&lagged) > TOL) {
            return None;
        }
        if ends_chain(p, self.mode, id) {
            let nx = self.next[lin][s].as_slice();
            let lagged_end = |lag: usize| {
                if lag == 0 {
                    Some((nx, &[][..]))
                } else {
                    (id.index + 1).checked_sub(lag).filter(|&i| i >= start).map(at_index)
                }
            };
            if tpl.history.iter().filter(|r| !r.has_current_control()).any(|r| r.residual(&lagged_end) > TOL) {
                return None;
            }
            if self.mode == Mode::Synchronized && id.level == 1 {
                let d = grid.ancestor(id, 0).index;
                if uses_goals(p, self.mode, d) {
                    let goal = &self.goals[d][s];
                    match lm.terminal {
                        Terminal::Hard => {
                            if max_dev(goal, nx) > TOL {
                                return None;
                            }
                        }
                        Terminal::L1(rho) => cost += sc.prob * rho * l1(goal, nx),
                    }
                }
            }
        }
        Some(cost)
    }

    fn dfs(&mut self, k: usize, cost: f64) {
        if k == self.points.len() {
            self.evaluated += 1;
            if cost < self.best - 1e-12 {
                self.best = cost;
                self.best_choice = Some(self.choice.clone());
                self.best_state = Some(Trajectory {
                    mode: self.mode,
                    scenarios: self.set.clone(),
                    x: self.x.clone(),
                    u: self.u.clone(),
                    next: self.next.clone(),
                    goals: self.goals.clone(),
                });
            }
            return;
        }
        let members = self.members(k).to_vec();
        for (ci, cand) in self.cands[k].iter().enumerate() {
            self.choice[k] = ci;
            let mut add = 0.0;
            let mut ok = true;
            match self.points[k] {
                Point::Control { lin, .. } => {
                    for &s in &members {
                        match self.apply(lin, s, cand) {
                            Some(c) => add += c,
                            None => {
                                ok = false;
                                break;
                            }
                        }
                    }
                }
                Point::Goal { d, .. } => {
                    if self.p.levels[1].template.state_violations(cand, TOL).is_empty() {
                        for &s in &members {
                            self.goals[d][s] = cand.clone();
                        }
                    } else {
                        ok = false;
                    }
                }
            }
            if ok {
                self.dfs(k + 1, cost + add);
            } else {
                self.pruned += 1;
            }
        }
    }
}

/// Exact minimum of the expected cost over all grid policies that respect
/// the information structure of `opts.mode`.
pub fn enumerate(p: &MtsProblem, grid: &OracleGrid, opts: &OracleOptions) -> Result<OracleResult> {
    crate::error::invalid_if_any(p.validate())?;
    if opts.mode == Mode::Synchronized {
        check_sync_supported(p)?;
    }
    let set = scenario::enumerate(&p.grid, &p.stoch, opts.node_budget)?;
    let classes = classes_for(p, opts.mode, &set);
    let ids = p.grid.linear_ids();
    let mut points = Vec::new();
    let mut cands: Vec<&[Vec<f64>]> = Vec::new();
    for (lin, &id) in ids.iter().enumerate() {
        for class in 0..classes.members[lin].len() {
            points.push(Point::Control { lin, class });
            cands.push(&grid.controls[id.level]);
        }
        if id.level == 0 && uses_goals(p, opts.mode, id.index) {
            for class in 0..classes.members[lin].len() {
                points.push(Point::Goal { d: id.index, class });
                cands.push(&grid.goals);
            }
        }
    }
    let policy_space = cands.iter().fold(1u128, |acc, c| acc.saturating_mul(c.len() as u128));
    if policy_space > opts.budget {
        return Err(Error::Budget { what: "oracle policies".into(), count: policy_space, limit: opts.budget });
    }
    let ns = set.len();
    let nt = ids.len();
    let mut search = Search {
        p,
        mode: opts.mode,
        set: &set,
        classes,
        choice: vec![0; points.len()],
        points,
        cands,
        x: vec![vec![Vec::new(); ns]; nt],
        u: vec![vec![Vec::new(); ns]; nt],
        next: vec![vec![Vec::new(); ns]; nt],
        y: vec![vec![Vec::new(); ns]; nt],
        goals: vec![vec![Vec::new(); ns]; p.grid.horizon()],
        best: f64::INFINITY,
        best_choice: None,
        best_state: None,
        evaluated: 0,
        pruned: 0,
    };
    search.dfs(0, 0.0);
    let mut policy = Vec::new();
    if let Some(choice) = &search.best_choice {
        for (k, &ci) in choice.iter().enumerate() {
            let (lin, class, is_goal) = match search.points[k] {
                Point::Control { lin, class } => (lin, class, false),
                Point::Goal { d, class } => (lin_at(p, 0, d), class, true),
            };
            policy.push(PolicyEntry {
                tick: p.grid.tick(ids[lin]).clone(),
                class,
                members: search.members(k).to_vec(),
                value: search.cands[k][ci].clone(),
                is_goal,
            });
        }
    }
    Ok(OracleResult {
        objective: search.best,
        policy,
        trajectory: search.best_state,
        policy_space,
        evaluated: search.evaluated,
        pruned: search.pruned,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LevelModel, LinRow, Term};
    use crate::samples::{self, DispatchVariant};
    use crate::stochastic::{Hazard, ScenarioTree, StochasticSpec};
    use crate::timegrid::{Interpretation, TimeGrid};
    use mts_milp::Sense;

    fn pick_one(costs: [f64; 3]) -> MtsProblem {
        let grid = TimeGrid::uniform(1, &[]).unwrap();
        let tpl = StageTemplate {
            u_lb: vec![0.0; 3],
            u_ub: vec![1.0; 3],
            u_int: vec![true; 3],
            d: costs.to_vec(),
            rows: vec![LinRow::new("one", [(Term::U(0), 1.0), (Term::U(1), 1.0), (Term::U(2), 1.0)], Sense::Eq, 1.0)],
            ..Default::default()
        };
        MtsProblem {
            name: "pick".into(),
            stoch: StochasticSpec::deterministic(&grid),
            grid,
            levels: vec![LevelModel::new(tpl, vec![])],
            interpretation: Interpretation::Simultaneous,
        }
    }

    #[test]
    fn single_decision_takes_the_cheapest_option() {
        let p = pick_one([5.0, 2.0, 9.0]);
        let r = enumerate(&p, &OracleGrid::from_bounds(&p, 1.0).unwrap(), &OracleOptions::default()).unwrap();
        assert_eq!(r.objective, 2.0);
        assert_eq!(r.policy[0].value, vec![0.0, 1.0, 0.0]);
        assert_eq!(r.policy_space, 8);
    }

    #[test]
    fn shared_decisions_cost_at_least_the_anticipative_optimum() {
        let p = samples::inventory();
        let grid = OracleGrid::from_bounds(&p, 1.0).unwrap();
        let shared = enumerate(&p, &grid, &OracleOptions::default()).unwrap().objective;
        let tree = &p.stoch.tree;
        let mut anticipative = 0.0;
        for leaf in tree.leaves() {
            let mut q = p.clone();
            let path = tree.path(leaf);
            q.stoch.tree = ScenarioTree::chain(path.len(), vec![]);
            for (k, &n) in path.iter().enumerate() {
                q.stoch.tree.nodes[k].outcome = tree.nodes[n].outcome.clone();
            }
            anticipative += tree.path_prob(leaf) * enumerate(&q, &grid, &OracleOptions::default()).unwrap().objective;
        }
        assert!(shared >= anticipative - 1e-12);
    }

    #[test]
    fn refuses_oversized_policy_spaces() {
        let p = samples::dispatch(DispatchVariant::FastLattice);
        let opts = OracleOptions { budget: 1000, ..Default::default() };
        let err = enumerate(&p, &OracleGrid::from_bounds(&p, 1.0).unwrap(), &opts).unwrap_err();
        assert!(matches!(err, Error::Budget { count: 531_441, .. }));
    }

    #[test]
    fn own_trajectory_validates_and_mutations_are_caught() {
        let p = samples::dispatch(DispatchVariant::FastLattice);
        let r = enumerate(&p, &OracleGrid::from_bounds(&p, 1.0).unwrap(), &OracleOptions::default()).unwrap();
        let t = r.trajectory.unwrap();
        let ok = validate_trajectory(&p, &t, TOL);
        assert!(ok.is_ok());
        assert!((ok.cost - r.objective).abs() < 1e-12);

        // control above its bound at one tick of one scenario
        let mut bad = t.clone();
        let lin = p.grid.linear_index(TickId { level: 1, index: 3 });
        bad.u[lin][0][0] = 3.0;
        bad.next[lin][0] = p.levels[1].template.step(&bad.x[lin][0], &bad.u[lin][0], &[1.0], &bad.scenarios.scenarios[0].real[lin].outcome).unwrap();
        let v = validate_trajectory(&p, &bad, TOL).violations;
        assert!(v.iter().any(|v| v.at == "(1,1) s0" && v.msg.starts_with("u0 bounds")), "{v:?}");
    }

    #[test]
    fn diverging_same_class_controls_are_reported_with_the_class() {
        let p = samples::coinciding_reveal(Interpretation::Simultaneous);
        let r = enumerate(&p, &OracleGrid::from_bounds(&p, 1.0).unwrap(), &OracleOptions::default()).unwrap();
        let mut t = r.trajectory.unwrap();
        let lin = p.grid.linear_index(TickId { level: 1, index: 1 });
        assert_eq!(t.u[lin][0], vec![1.0, 1.0]);
        // the second scenario has outcome 2 and would rather guess it
        t.u[lin][1] = vec![2.0, 0.0];
        let v = validate_trajectory(&p, &t, TOL).violations;
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].at.starts_with("(1,0) class") && v[0].msg.contains("[0, 1]"));
    }

    #[test]
    fn decision_hazard_hides_same_tick_outcomes() {
        let mut p = samples::coinciding_reveal(Interpretation::Sequential);
        let grid = OracleGrid::from_bounds(&p, 1.0).unwrap();
        assert_eq!(enumerate(&p, &grid, &OracleOptions::default()).unwrap().objective, 0.0);
        p.stoch.hazard = vec![Hazard::DecisionHazard, Hazard::HazardDecision];
        p.interpretation = Interpretation::Simultaneous;
        assert_eq!(enumerate(&p, &grid, &OracleOptions::default()).unwrap().objective, 1.0);
    }
}
