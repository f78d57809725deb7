//! Three-timescale unit commitment: slow-ramping units committed on the
//! day-ahead scenario tree, fast-ramping units following the short-term
//! lattice, and a real-time balance of conventional output and profiled
//! renewables against load.
//!
//! Every thermal unit carries the state `[on, p]`, the commitment and output
//! held during the tick. Its controls `[v, w, dp]` (start up, shut down,
//! output change) set the state of the next tick. Aggregates pass the
//! conventional output per bus down the levels, followed by one net-load
//! shift that collects the day-ahead and short-term outcomes.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use mts_milp::Sense;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_if_any, Result, Violation};
use crate::instantiate::Mode;
use crate::model::{Affine, HistoryRow, LevelModel, LinRow, MtsProblem, StageTemplate, Term, Terminal, TickOverride};
use crate::oracle::Trajectory;
use crate::scenario::{is_visible, sync_visible};
use crate::stochastic::{ConditionalNoise, Hazard, LevelUncertainty, MarkovLattice, ScenarioTree, StochasticSpec, TreeNode};
use crate::timegrid::{Interpretation, TickId, TimeGrid};

use Term::{U, W, X, Y};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub name: String,
    /// 1 for slow-ramping (day-ahead), 2 for fast-ramping (short-term).
    pub level: u8,
    pub bus: String,
    pub pmin: f64,
    pub pmax: f64,
    /// Largest output change per tick of the unit's level.
    pub ramp: f64,
    /// In ticks; slow units only, default 1.
    #[serde(default)]
    pub min_up: Option<u32>,
    #[serde(default)]
    pub min_down: Option<u32>,
    /// $ per tick online.
    pub no_load: f64,
    /// $ per MWh.
    pub variable: f64,
    pub startup: f64,
    #[serde(default)]
    pub shutdown: f64,
    #[serde(default)]
    pub initial_on: bool,
    #[serde(default)]
    pub initial_p: f64,
}

/// Output profile of a renewable plant, one value per real-time tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenewableSpec {
    pub name: String,
    pub bus: String,
    pub profile: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DaBranch {
    /// Net-load shift (MW) for the rest of the horizon.
    pub shift: f64,
    pub prob: f64,
}

/// Day-ahead tree: a single path that splits once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DaTree {
    /// Day-ahead tick at which the branches are drawn.
    #[serde(default = "one")]
    pub branch_at: usize,
    pub branches: Vec<DaBranch>,
}

/// Real-time renewable deviation, one entry per plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RtOutcome {
    pub deviation: Vec<f64>,
    pub prob: f64,
}

fn one() -> usize {
    1
}
fn four() -> u32 {
    4
}
fn hour() -> f64 {
    1.0
}
fn hard() -> String {
    "hard".into()
}
fn yes() -> bool {
    true
}
fn first() -> u8 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UcConfig {
    #[serde(default)]
    pub name: String,
    pub buses: Vec<String>,
    #[serde(default)]
    pub generators: Vec<GeneratorSpec>,
    #[serde(default)]
    pub renewables: Vec<RenewableSpec>,
    /// Day-ahead ticks.
    pub horizon: u32,
    #[serde(default = "four")]
    pub st_per_da: u32,
    #[serde(default = "four")]
    pub rt_per_st: u32,
    #[serde(default = "hour")]
    pub da_hours: f64,
    /// MW per real-time tick and bus.
    pub load: Vec<Vec<f64>>,
    #[serde(default)]
    pub da_tree: Option<DaTree>,
    /// One-dimensional net-load shift per short-term position.
    #[serde(default)]
    pub st_lattice: Option<MarkovLattice>,
    #[serde(default)]
    pub rt_noise: Option<Vec<RtOutcome>>,
    /// $ per MWh of unserved load.
    pub shed_penalty: f64,
    /// $ per MWh of surplus.
    pub curtail_penalty: f64,
    /// `hard` or `l1:<rho>` for short-term segment ends.
    #[serde(default = "hard")]
    pub terminal: String,
    /// Keeps outputs and ramps integral so that every solver sees the same
    /// finite state space.
    #[serde(default = "yes")]
    pub integral_power: bool,
    #[serde(default = "first")]
    pub interpretation: u8,
}

impl UcConfig {
    pub fn units(&self, level: u8) -> Vec<&GeneratorSpec> {
        self.generators.iter().filter(|g| g.level == level).collect()
    }

    pub fn st_hours(&self) -> f64 {
        self.da_hours / self.st_per_da as f64
    }

    pub fn rt_hours(&self) -> f64 {
        self.st_hours() / self.rt_per_st as f64
    }

    pub fn rt_ticks(&self) -> usize {
        (self.horizon * self.st_per_da * self.rt_per_st) as usize
    }

    fn bus(&self, name: &str) -> Option<usize> {
        self.buses.iter().position(|b| b == name)
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if self.buses.is_empty() {
            v.push(Violation::new("uc.buses", "at least one bus is required"));
        }
        if self.horizon == 0 || self.st_per_da == 0 || self.rt_per_st == 0 {
            v.push(Violation::new("uc.horizon", "tick counts must be positive"));
            return v;
        }
        if !(self.da_hours > 0.0 && self.da_hours.is_finite()) {
            v.push(Violation::new("uc.da_hours", "must be positive"));
        }
        for (i, g) in self.generators.iter().enumerate() {
            let at = format!("uc.generators[{i}]");
            if self.bus(&g.bus).is_none() {
                v.push(Violation::new(format!("{at}.bus"), format!("unknown bus `{}`", g.bus)));
            }
            if !(g.level == 1 || g.level == 2) {
                v.push(Violation::new(format!("{at}.level"), "must be 1 (slow) or 2 (fast)"));
            }
            if !(0.0 <= g.pmin && g.pmin <= g.pmax && g.pmax.is_finite()) {
                v.push(Violation::new(format!("{at}.pmin"), "need 0 <= pmin <= pmax"));
            }
            if !(g.ramp > 0.0 && g.ramp.is_finite()) {
                v.push(Violation::new(format!("{at}.ramp"), "must be positive"));
            }
            for (what, m) in [("min_up", g.min_up), ("min_down", g.min_down)] {
                match (g.level, m) {
                    (1, Some(0)) => v.push(Violation::new(format!("{at}.{what}"), "must be at least 1")),
                    (2, Some(_)) => v.push(Violation::new(format!("{at}.{what}"), "fast units carry no minimum up/down times")),
                    _ => {}
                }
            }
            for (what, c) in [("no_load", g.no_load), ("variable", g.variable), ("startup", g.startup), ("shutdown", g.shutdown)] {
                if !c.is_finite() {
                    v.push(Violation::new(format!("{at}.{what}"), "must be finite"));
                }
            }
            let on = if g.initial_on { 1.0 } else { 0.0 };
            if g.initial_p < g.pmin * on - 1e-9 || g.initial_p > g.pmax * on + 1e-9 {
                v.push(Violation::new(format!("{at}.initial_p"), "outside [pmin, pmax] for the initial commitment"));
            }
        }
        let n = self.rt_ticks();
        if self.load.len() != n {
            v.push(Violation::new("uc.load", format!("{} rows, expected one per real-time tick ({n})", self.load.len())));
        }
        for (t, row) in self.load.iter().enumerate() {
            if row.len() != self.buses.len() {
                v.push(Violation::new(format!("uc.load[{t}]"), format!("{} entries for {} buses", row.len(), self.buses.len())));
            }
            if row.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
                v.push(Violation::new(format!("uc.load[{t}]"), "loads must be nonnegative"));
            }
        }
        let min_dev: Vec<f64> = (0..self.renewables.len())
            .map(|r| self.rt_noise.iter().flatten().map(|o| o.deviation.get(r).copied().unwrap_or(0.0)).fold(0.0, f64::min))
            .collect();
        for (r, rs) in self.renewables.iter().enumerate() {
            let at = format!("uc.renewables[{r}]");
            if self.bus(&rs.bus).is_none() {
                v.push(Violation::new(format!("{at}.bus"), format!("unknown bus `{}`", rs.bus)));
            }
            if rs.profile.len() != n {
                v.push(Violation::new(format!("{at}.profile"), format!("{} values, expected {n}", rs.profile.len())));
            }
            if rs.profile.iter().any(|a| !a.is_finite() || a + min_dev[r] < -1e-9) {
                v.push(Violation::new(format!("{at}.profile"), "realized output could become negative"));
            }
        }
        if let Some(t) = &self.da_tree {
            if t.branch_at == 0 || t.branch_at >= self.horizon as usize {
                v.push(Violation::new("uc.da_tree.branch_at", "must name a day-ahead tick after the first"));
            }
            if t.branches.is_empty() {
                v.push(Violation::new("uc.da_tree.branches", "empty"));
            }
            if t.branches.iter().any(|b| !(b.prob >= 0.0 && b.shift.is_finite())) || (t.branches.iter().map(|b| b.prob).sum::<f64>() - 1.0).abs() > 1e-9 {
                v.push(Violation::new("uc.da_tree.branches", "probabilities must be nonnegative and sum to 1"));
            }
        }
        if let Some(l) = &self.st_lattice {
            if l.positions.len() != self.st_per_da as usize {
                v.push(Violation::new("uc.st_lattice.positions", format!("{} positions, expected {}", l.positions.len(), self.st_per_da)));
            }
            if l.outcome_dim() != 1 {
                v.push(Violation::new("uc.st_lattice.positions", "outcomes must be one net-load shift"));
            }
            v.extend(l.validate("uc.st_lattice"));
        }
        if let Some(noise) = &self.rt_noise {
            if noise.iter().any(|o| o.deviation.len() != self.renewables.len()) {
                v.push(Violation::new("uc.rt_noise", "one deviation per renewable plant"));
            }
            if noise.is_empty() || noise.iter().any(|o| !(o.prob >= 0.0)) || (noise.iter().map(|o| o.prob).sum::<f64>() - 1.0).abs() > 1e-9 {
                v.push(Violation::new("uc.rt_noise", "probabilities must be nonnegative and sum to 1"));
            }
        }
        for (what, c) in [("shed_penalty", self.shed_penalty), ("curtail_penalty", self.curtail_penalty)] {
            if !(c >= 0.0 && c.is_finite()) {
                v.push(Violation::new(format!("uc.{what}"), "must be nonnegative"));
            }
        }
        if let Err(e) = self.terminal.parse::<Terminal>() {
            v.push(Violation::new("uc.terminal", e.to_string()));
        }
        if Interpretation::from_number(self.interpretation).is_none() {
            v.push(Violation::new("uc.interpretation", "must be 1 or 2"));
        }
        v
    }

    fn renewable_bound(&self) -> f64 {
        let dev: f64 = (0..self.renewables.len())
            .map(|r| self.rt_noise.iter().flatten().map(|o| o.deviation[r].abs()).fold(0.0, f64::max))
            .sum();
        let peak = (0..self.rt_ticks()).map(|t| self.renewables.iter().map(|r| r.profile[t]).sum::<f64>()).fold(0.0, f64::max);
        peak + dev
    }

    fn shift_bound(&self) -> f64 {
        let da = self.da_tree.iter().flat_map(|t| &t.branches).map(|b| b.shift.abs()).fold(0.0, f64::max);
        let st = self.st_lattice.iter().flat_map(|l| &l.positions).flatten().map(|n| n.outcome[0].abs()).fold(0.0, f64::max);
        da + st
    }
}

/// Thermal template for `units`: state `[on, p]`, controls `[v, w, dp]` per
/// unit. Min up/down rows are emitted for slow units only.
fn thermal_template(units: &[&GeneratorSpec], hours: f64, integral: bool, with_history: bool) -> StageTemplate {
    let mut t = StageTemplate::default();
    for (k, g) in units.iter().enumerate() {
        let (on, p) = (2 * k, 2 * k + 1);
        let (v, w, dp) = (3 * k, 3 * k + 1, 3 * k + 2);
        t.x_lb.extend([0.0, 0.0]);
        t.x_ub.extend([1.0, g.pmax]);
        t.x_int.extend([true, integral]);
        t.u_lb.extend([0.0, 0.0, -g.ramp]);
        t.u_ub.extend([1.0, 1.0, g.ramp]);
        t.u_int.extend([true, true, integral]);
        t.c.extend([g.no_load, g.variable * hours]);
        t.d.extend([g.startup, g.shutdown, 0.0]);
        t.dynamics.push(Affine::new([(X(on), 1.0), (U(v), 1.0), (U(w), -1.0)], 0.0));
        t.dynamics.push(Affine::new([(X(p), 1.0), (U(dp), 1.0)], 0.0));
        t.state_rows.push(LinRow::new(format!("{}_pmax", g.name), [(X(p), 1.0), (X(on), -g.pmax)], Sense::Le, 0.0));
        t.state_rows.push(LinRow::new(format!("{}_pmin", g.name), [(X(p), 1.0), (X(on), -g.pmin)], Sense::Ge, 0.0));
        t.rows.push(LinRow::new(format!("{}_start", g.name), [(X(on), 1.0), (U(v), 1.0)], Sense::Le, 1.0));
        t.rows.push(LinRow::new(format!("{}_stop", g.name), [(U(w), 1.0), (X(on), -1.0)], Sense::Le, 0.0));
        if !with_history {
            continue;
        }
        // A start decided k < up ticks ago forbids stopping now.
        let up = g.min_up.unwrap_or(1) as usize;
        if up > 1 {
            let mut terms: Vec<(usize, Term, f64)> = (1..up).map(|k| (k, U(v), 1.0)).collect();
            terms.extend([(0, U(w), 1.0), (0, X(on), -1.0)]);
            t.history.push(HistoryRow::new(format!("{}_min_up", g.name), terms, Sense::Le, 0.0));
        }
        let down = g.min_down.unwrap_or(1) as usize;
        if down > 1 {
            let mut terms: Vec<(usize, Term, f64)> = (1..down).map(|k| (k, U(w), 1.0)).collect();
            terms.extend([(0, U(v), 1.0), (0, X(on), 1.0)]);
            t.history.push(HistoryRow::new(format!("{}_min_down", g.name), terms, Sense::Le, 1.0));
        }
    }
    t
}

fn initial_state(units: &[&GeneratorSpec]) -> Vec<f64> {
    units.iter().flat_map(|g| [if g.initial_on { 1.0 } else { 0.0 }, g.initial_p]).collect()
}

/// Per-bus output of `units` followed by the parent's entries (when
/// `pass_parent`) and the outcome shift.
fn aggregation(cfg: &UcConfig, units: &[&GeneratorSpec], pass_parent: bool, has_w: bool) -> Vec<Affine> {
    let nb = cfg.buses.len();
    let mut out: Vec<Affine> = (0..nb)
        .map(|b| {
            let mut terms: Vec<(Term, f64)> =
                units.iter().enumerate().filter(|(_, g)| cfg.bus(&g.bus) == Some(b)).map(|(k, _)| (X(2 * k + 1), 1.0)).collect();
            if pass_parent {
                terms.push((Y(b), 1.0));
            }
            Affine::new(terms, 0.0)
        })
        .collect();
    let mut shift = Vec::new();
    if pass_parent {
        shift.push((Y(nb), 1.0));
    }
    if has_w {
        shift.push((W(0), 1.0));
    }
    out.push(Affine::new(shift, 0.0));
    out
}

fn da_tree(cfg: &UcConfig) -> ScenarioTree {
    let h = cfg.horizon as usize;
    let Some(t) = &cfg.da_tree else {
        return ScenarioTree::chain(h, vec![0.0]);
    };
    let mut nodes = Vec::new();
    for d in 0..t.branch_at {
        nodes.push(TreeNode { parent: d.checked_sub(1), prob: 1.0, outcome: vec![0.0], label: "base".into() });
    }
    for (k, b) in t.branches.iter().enumerate() {
        let mut parent = t.branch_at - 1;
        for d in t.branch_at..h {
            let prob = if d == t.branch_at { b.prob } else { 1.0 };
            nodes.push(TreeNode { parent: Some(parent), prob, outcome: vec![b.shift], label: format!("da{k}") });
            parent = nodes.len() - 1;
        }
    }
    ScenarioTree { nodes }
}

/// Builds the three-level problem.
pub fn build_instance(cfg: &UcConfig) -> Result<MtsProblem> {
    invalid_if_any(cfg.validate())?;
    let grid = TimeGrid::uniform(cfg.horizon, &[cfg.st_per_da, cfg.rt_per_st])?;
    let slow = cfg.units(1);
    let fast = cfg.units(2);
    let nb = cfg.buses.len();
    let has_lattice = cfg.st_lattice.is_some();

    let mut t1 = thermal_template(&slow, cfg.da_hours, cfg.integral_power, true);
    t1.aggregation = Some(aggregation(cfg, &slow, false, true));
    let mut t2 = thermal_template(&fast, cfg.st_hours(), cfg.integral_power, false);
    t2.aggregation = Some(aggregation(cfg, &fast, true, has_lattice));

    // real time: controls [shed, curtail]
    let mut balance: Vec<(Term, f64)> = (0..nb).map(|b| (Y(b), 1.0)).collect();
    balance.push((Y(nb), -1.0));
    balance.extend((0..cfg.renewables.len()).map(|r| (W(r), 1.0)));
    balance.extend([(U(0), 1.0), (U(1), -1.0)]);
    let conventional: f64 = cfg.generators.iter().map(|g| g.pmax).sum();
    let peak_load = cfg.load.iter().map(|r| r.iter().sum::<f64>()).fold(0.0, f64::max);
    let shift = cfg.shift_bound();
    let t3 = StageTemplate {
        u_lb: vec![0.0, 0.0],
        u_ub: vec![peak_load + shift, conventional + cfg.renewable_bound() + shift],
        u_int: vec![false, false],
        d: vec![cfg.shed_penalty * cfg.rt_hours(), cfg.curtail_penalty * cfg.rt_hours()],
        rows: vec![LinRow::new("balance", balance, Sense::Eq, 0.0)],
        ..Default::default()
    };
    let mut l3 = LevelModel::new(t3, vec![]);
    for i in 0..cfg.rt_ticks() {
        let profile: f64 = cfg.renewables.iter().map(|r| r.profile[i]).sum();
        let load: f64 = cfg.load[i].iter().sum();
        let tick = grid.tick(TickId { level: 2, index: i }).clone();
        l3.overrides.insert(tick, TickOverride { rhs: vec![(0, load - profile)], ..Default::default() });
    }

    let mut l2 = LevelModel::new(t2, initial_state(&fast));
    l2.terminal = cfg.terminal.parse()?;
    let fine = vec![
        match &cfg.st_lattice {
            Some(l) => LevelUncertainty::Lattice(l.clone()),
            None => LevelUncertainty::Deterministic,
        },
        match &cfg.rt_noise {
            Some(n) if !cfg.renewables.is_empty() => {
                LevelUncertainty::Noise(ConditionalNoise::unconditional(n.iter().map(|o| (o.deviation.clone(), o.prob)).collect()))
            }
            _ => LevelUncertainty::Deterministic,
        },
    ];
    let mut fine = fine;
    if matches!(fine[1], LevelUncertainty::Deterministic) && !cfg.renewables.is_empty() {
        // deterministic profiles still need a zero deviation to fill W
        fine[1] = LevelUncertainty::Noise(ConditionalNoise::unconditional(vec![(vec![0.0; cfg.renewables.len()], 1.0)]));
    }
    let p = MtsProblem {
        name: if cfg.name.is_empty() { "uc".into() } else { cfg.name.clone() },
        stoch: StochasticSpec { tree: da_tree(cfg), fine, hazard: vec![Hazard::HazardDecision; 3], stage_starts: None },
        grid,
        levels: vec![LevelModel::new(t1, initial_state(&slow)), l2, l3],
        interpretation: Interpretation::from_number(cfg.interpretation).expect("validated"),
    };
    invalid_if_any(p.validate())?;
    Ok(p)
}

/// Result of balancing one real-time tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dispatch {
    pub served: f64,
    pub shed: f64,
    pub curtail: f64,
    /// Penalty cost over the real-time tick.
    pub cost: f64,
}

/// Single-balance dispatch: load is served from conventional output plus
/// renewables; any shortfall is shed and any surplus curtailed.
pub fn rt_dispatch(cfg: &UcConfig, y2: &[f64], renewable: &[f64], load: &[f64]) -> Dispatch {
    let supply: f64 = y2.iter().sum::<f64>() + renewable.iter().sum::<f64>();
    let demand: f64 = load.iter().sum();
    let shed = (demand - supply).max(0.0);
    let curtail = (supply - demand).max(0.0);
    Dispatch {
        served: supply.min(demand),
        shed,
        curtail,
        cost: (shed * cfg.shed_penalty + curtail * cfg.curtail_penalty) * cfg.rt_hours(),
    }
}

/// Physical quantities of one real-time tick on one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct RtRow {
    pub tick: String,
    pub scenario: usize,
    /// Slow-unit output.
    pub y1: f64,
    /// All conventional output.
    pub y2: f64,
    pub renewable: f64,
    /// Bus loads plus net-load shifts.
    pub load: f64,
    pub shed: f64,
    pub curtail: f64,
}

fn output(x: &[f64]) -> f64 {
    x.iter().skip(1).step_by(2).sum()
}

/// Quantities the real-time balance sees at `id` on scenario `s`.
fn rt_inputs(cfg: &UcConfig, p: &MtsProblem, t: &Trajectory, id: TickId, s: usize) -> (f64, f64, f64, f64) {
    let g = &p.grid;
    let lin = |id: TickId| g.linear_index(id);
    let real = &t.scenarios.scenarios[s].real;
    let (a1, a2) = (g.ancestor(id, 0), g.ancestor(id, 1));
    let y1 = output(&t.x[lin(a1)][s]);
    let y2 = y1 + output(&t.x[lin(a2)][s]);
    let shift = real[lin(a1)].outcome.first().copied().unwrap_or(0.0) + real[lin(a2)].outcome.first().copied().unwrap_or(0.0);
    let w = &real[lin(id)].outcome;
    let renewable: f64 = cfg.renewables.iter().enumerate().map(|(r, rs)| rs.profile[id.index] + w.get(r).copied().unwrap_or(0.0)).sum();
    let load = cfg.load[id.index].iter().sum::<f64>() + shift;
    (y1, y2, renewable, load)
}

/// Committed output against load per real-time tick and scenario.
pub fn reserve_report(cfg: &UcConfig, p: &MtsProblem, t: &Trajectory) -> Vec<RtRow> {
    let mut rows = Vec::new();
    for s in 0..t.scenarios.len() {
        for i in 0..p.grid.level_len(2) {
            let id = TickId { level: 2, index: i };
            let (y1, y2, renewable, load) = rt_inputs(cfg, p, t, id, s);
            let u = &t.u[p.grid.linear_index(id)][s];
            rows.push(RtRow { tick: p.grid.tick(id).to_string(), scenario: s, y1, y2, renewable, load, shed: u[0], curtail: u[1] });
        }
    }
    rows
}

pub fn reserve_csv(rows: &[RtRow]) -> String {
    let mut out = String::from("tick,scenario,y1,y2,renewable,load,shed,curtail\n");
    for r in rows {
        let _ = writeln!(out, "\"{}\",{},{},{},{},{},{},{}", r.tick, r.scenario, r.y1, r.y2, r.renewable, r.load, r.shed, r.curtail);
    }
    out
}

/// One line per unit and tick (thermal levels) and per real-time tick.
pub fn solution_csv(cfg: &UcConfig, p: &MtsProblem, t: &Trajectory) -> String {
    let mut out = String::from("tick,scenario,unit,x,p,v,w,shed,curtail\n");
    for s in 0..t.scenarios.len() {
        for (lin, &id) in p.grid.linear_ids().iter().enumerate() {
            let tick = p.grid.tick(id);
            let (x, u) = (&t.x[lin][s], &t.u[lin][s]);
            if id.level == 2 {
                let _ = writeln!(out, "\"{tick}\",{s},rt,,,,,{},{}", u[0], u[1]);
                continue;
            }
            for (k, g) in cfg.units(id.level as u8 + 1).iter().enumerate() {
                let _ = writeln!(out, "\"{tick}\",{s},{},{},{},{},{},,", g.name, x[2 * k], x[2 * k + 1], u[3 * k], u[3 * k + 1]);
            }
        }
    }
    out
}

/// Outcome of checking a trajectory against the unit physics.
#[derive(Debug, Clone)]
pub struct PhysicsCheck {
    pub violations: Vec<Violation>,
    /// Expected operating cost, including goal-deviation penalties.
    pub cost: f64,
}

impl PhysicsCheck {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lengths of maximal runs of equal values starting after position 0,
/// as `(value, start, length, reaches_end)`.
fn runs(seq: &[bool]) -> Vec<(bool, usize, usize, bool)> {
    let mut out = Vec::new();
    let mut i = 1;
    while i < seq.len() {
        if seq[i] != seq[i - 1] {
            let mut j = i;
            while j < seq.len() && seq[j] == seq[i] {
                j += 1;
            }
            out.push((seq[i], i, j - i, j == seq.len()));
            i = j;
        } else {
            i += 1;
        }
    }
    out
}

/// Checks a trajectory against the unit data directly: output limits,
/// ramps, commitment logic, minimum up and down times, the real-time
/// balance, continuity between ticks, goal attainment and
/// non-anticipativity. The stage templates are not consulted.
pub fn check_physics(cfg: &UcConfig, p: &MtsProblem, t: &Trajectory, tol: f64) -> PhysicsCheck {
    let mut v = Vec::new();
    let g = &p.grid;
    let lin = |id: TickId| g.linear_index(id);
    let set = &t.scenarios;
    let terminal: Terminal = cfg.terminal.parse().unwrap_or_default();
    let sync = t.mode == Mode::Synchronized;
    let mut cost = 0.0;
    let levels = [cfg.units(1), cfg.units(2)];
    let hours = [cfg.da_hours, cfg.st_hours()];
    let close = |a: f64, b: f64| (a - b).abs() <= tol;
    for (s, sc) in set.scenarios.iter().enumerate() {
        let mut c = 0.0;
        for (li, &id) in g.linear_ids().iter().enumerate() {
            let at = format!("{} s{s}", g.tick(id));
            let (x, u, next) = (&t.x[li][s], &t.u[li][s], &t.next[li][s]);
            if id.level == 2 {
                let (_, y2, renewable, load) = rt_inputs(cfg, p, t, id, s);
                let (shed, curt) = (u[0], u[1]);
                if shed < -tol || curt < -tol {
                    v.push(Violation::new(&at, "negative shed or curtailment"));
                }
                if !close(y2 + renewable + shed - curt, load) {
                    v.push(Violation::new(&at, format!("balance off by {}", y2 + renewable + shed - curt - load)));
                }
                c += (shed * cfg.shed_penalty + curt * cfg.curtail_penalty) * cfg.rt_hours();
                continue;
            }
            for (k, gen) in levels[id.level].iter().enumerate() {
                let (on, pw, nx_on, nx_p) = (x[2 * k], x[2 * k + 1], next[2 * k], next[2 * k + 1]);
                let (su, sd, dp) = (u[3 * k], u[3 * k + 1], u[3 * k + 2]);
                let unit = format!("{at} {}", gen.name);
                for (o, q, when) in [(on, pw, "now"), (nx_on, nx_p, "next")] {
                    if !(close(o, 0.0) || close(o, 1.0)) {
                        v.push(Violation::new(&unit, format!("commitment {o} not binary ({when})")));
                    }
                    if q > gen.pmax * o + tol {
                        v.push(Violation::new(&unit, format!("output {q} above pmax ({when})")));
                    }
                    if q < gen.pmin * o - tol {
                        v.push(Violation::new(&unit, format!("output {q} below pmin ({when})")));
                    }
                }
                if (nx_p - pw).abs() > gen.ramp + tol {
                    v.push(Violation::new(&unit, format!("ramp {} exceeds {}", nx_p - pw, gen.ramp)));
                }
                if !close(nx_p - pw, dp) {
                    v.push(Violation::new(&unit, "output change differs from its control"));
                }
                if !(close(su, 0.0) || close(su, 1.0)) || !(close(sd, 0.0) || close(sd, 1.0)) || su + sd > 1.0 + tol {
                    v.push(Violation::new(&unit, "start/stop controls not exclusive binaries"));
                }
                if !close(nx_on - on, su - sd) {
                    v.push(Violation::new(&unit, "commitment change differs from start/stop"));
                }
                c += gen.no_load * on + gen.variable * hours[id.level] * pw + gen.startup * su + gen.shutdown * sd;
            }
            // where this tick's state must come from
            let x0 = &p.levels[id.level].x0;
            let seg_start = id.level > 0 && sync && g.position_in_segment(id) == 0;
            let expected: Option<&Vec<f64>> = match g.prev_id(id) {
                None => Some(x0),
                Some(_) if seg_start => {
                    let d = g.ancestor(id, 0).index;
                    if d == 0 {
                        Some(x0)
                    } else {
                        t.goals.get(d - 1).map(|gs| &gs[s]).filter(|gl| !gl.is_empty())
                    }
                }
                Some(prev) => Some(&t.next[lin(prev)][s]),
            };
            if let Some(e) = expected {
                if e.len() != x.len() || e.iter().zip(x).any(|(a, b)| !close(*a, *b)) {
                    v.push(Violation::new(&at, format!("state {x:?} does not continue from {e:?}")));
                }
            }
            if id.level == 1 && sync && g.is_last_in_segment(id) {
                let d = g.ancestor(id, 0).index;
                if let Some(goal) = t.goals.get(d).map(|gs| &gs[s]).filter(|gl| !gl.is_empty()) {
                    let pen = terminal.value(next, Some(goal));
                    if pen.is_infinite() {
                        v.push(Violation::new(&at, format!("segment ends at {next:?}, goal {goal:?}")));
                    } else {
                        c += pen;
                    }
                }
            }
        }
        // minimum up and down times along the day-ahead chain
        let h = g.level_len(0);
        for (k, gen) in levels[0].iter().enumerate() {
            let mut seq: Vec<bool> = (0..h).map(|d| t.x[lin(TickId { level: 0, index: d })][s][2 * k] > 0.5).collect();
            seq.push(t.next[lin(TickId { level: 0, index: h - 1 })][s][2 * k] > 0.5);
            for (on, start, len, open) in runs(&seq) {
                let need = if on { gen.min_up } else { gen.min_down }.unwrap_or(1) as usize;
                if len < need && !open {
                    let what = if on { "min_up" } else { "min_down" };
                    v.push(Violation::new(format!("({start}) s{s} {}", gen.name), format!("{what}: run of {len} < {need}")));
                }
            }
        }
        cost += sc.prob * c;
    }
    v.extend(nac_violations(p, t, tol));
    PhysicsCheck { violations: v, cost }
}

/// Decisions (and goals) must agree between scenarios whose visible
/// outcomes coincide.
fn nac_violations(p: &MtsProblem, t: &Trajectory, tol: f64) -> Vec<Violation> {
    let g = &p.grid;
    let sync = t.mode == Mode::Synchronized;
    let real = |s: usize, l: usize| t.scenarios.scenarios[s].real[l].node;
    let mut out = Vec::new();
    for (li, &id) in g.linear_ids().iter().enumerate() {
        let visible: Vec<usize> = if sync && id.level > 0 {
            sync_visible(g, &p.stoch, id)
        } else {
            let interp = if sync { Interpretation::Sequential } else { p.interpretation };
            g.linear_ids()
                .iter()
                .enumerate()
                .filter(|(_, &src)| (!sync || src.level == 0) && is_visible(g, &p.stoch, interp, src, id))
                .map(|(l, _)| l)
                .collect()
        };
        let mut groups: HashMap<Vec<u32>, usize> = HashMap::new();
        for s in 0..t.scenarios.len() {
            let key: Vec<u32> = visible.iter().map(|&l| real(s, l)).collect();
            let rep = *groups.entry(key).or_insert(s);
            let differs = |a: &[f64], b: &[f64]| a.len() != b.len() || a.iter().zip(b).any(|(x, y)| (x - y).abs() > tol);
            if differs(&t.u[li][s], &t.u[li][rep]) {
                out.push(Violation::new(format!("{} s{s}", g.tick(id)), format!("decision differs from scenario {rep} with the same information")));
            }
            if sync && id.level == 0 {
                if let Some(gs) = t.goals.get(id.index) {
                    if differs(&gs[s], &gs[rep]) {
                        out.push(Violation::new(format!("{} s{s}", g.tick(id)), format!("goal differs from scenario {rep} with the same information")));
                    }
                }
            }
        }
    }
    out
}

/// Two day-ahead ticks of two short-term ticks of two real-time ticks, two
/// buses, one slow and one fast unit, one renewable plant, a two-branch
/// day-ahead tree and a two-node short-term lattice.
pub fn uc_tiny() -> UcConfig {
    UcConfig {
        name: "uc_tiny".into(),
        buses: vec!["north".into(), "south".into()],
        generators: vec![
            GeneratorSpec {
                name: "coal".into(),
                level: 1,
                bus: "north".into(),
                pmin: 2.0,
                pmax: 6.0,
                ramp: 2.0,
                min_up: Some(2),
                min_down: Some(2),
                no_load: 5.0,
                variable: 10.0,
                startup: 20.0,
                shutdown: 5.0,
                initial_on: true,
                initial_p: 4.0,
            },
            GeneratorSpec {
                name: "gas".into(),
                level: 2,
                bus: "south".into(),
                pmin: 1.0,
                pmax: 3.0,
                ramp: 2.0,
                min_up: None,
                min_down: None,
                no_load: 1.0,
                variable: 30.0,
                startup: 3.0,
                shutdown: 0.0,
                initial_on: false,
                initial_p: 0.0,
            },
        ],
        renewables: vec![RenewableSpec { name: "wind".into(), bus: "south".into(), profile: vec![1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 0.0, 0.0] }],
        horizon: 2,
        st_per_da: 2,
        rt_per_st: 2,
        da_hours: 1.0,
        load: vec![
            vec![3.0, 1.0],
            vec![3.0, 2.0],
            vec![4.0, 2.0],
            vec![4.0, 1.0],
            vec![5.0, 2.0],
            vec![5.0, 2.0],
            vec![4.0, 2.0],
            vec![3.0, 1.0],
        ],
        da_tree: Some(DaTree { branch_at: 1, branches: vec![DaBranch { shift: -1.0, prob: 0.5 }, DaBranch { shift: 1.0, prob: 0.5 }] }),
        st_lattice: Some(two_node_lattice(2, 1.0)),
        rt_noise: None,
        shed_penalty: 200.0,
        curtail_penalty: 20.0,
        terminal: "hard".into(),
        integral_power: true,
        interpretation: 1,
    }
}

/// Lattice with a neutral first position and `low`/`high` shifts of
/// `±spread` afterwards, persisting with probability 0.75.
pub fn two_node_lattice(positions: usize, spread: f64) -> MarkovLattice {
    use crate::stochastic::{LatticeNode, ANY_LABEL};
    let mut pos = vec![vec![LatticeNode { outcome: vec![0.0], label: "mid".into() }]];
    let mut fam = Vec::new();
    for k in 1..positions {
        pos.push(vec![
            LatticeNode { outcome: vec![-spread], label: "low".into() },
            LatticeNode { outcome: vec![spread], label: "high".into() },
        ]);
        fam.push(if k == 1 { vec![vec![0.5, 0.5]] } else { vec![vec![0.75, 0.25], vec![0.25, 0.75]] });
    }
    MarkovLattice { positions: pos, transitions: BTreeMap::from([(ANY_LABEL.to_string(), fam)]) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instantiate::{build_full_equivalent, build_synchronized, BuildOptions};
    use mts_milp::{solve_milp, MilpOptions, MilpStatus};

    fn solve_full(p: &MtsProblem) -> (f64, Trajectory) {
        let b = build_full_equivalent(p, &BuildOptions::default()).unwrap();
        let r = solve_milp(&b.sf, &MilpOptions::default());
        assert_eq!(r.status, MilpStatus::Optimal, "{}", p.name);
        (r.objective, b.layout.trajectory(p, &r.x))
    }

    /// One slow unit, no fast units, one real-time tick per day-ahead tick.
    fn single(load: &[f64], min_down: u32, initial_on: bool) -> UcConfig {
        UcConfig {
            name: "single".into(),
            buses: vec!["b".into()],
            generators: vec![GeneratorSpec {
                name: "g".into(),
                level: 1,
                bus: "b".into(),
                pmin: 2.0,
                pmax: 4.0,
                ramp: 2.0,
                min_up: Some(1),
                min_down: Some(min_down),
                no_load: 3.0,
                variable: 5.0,
                startup: 10.0,
                shutdown: 1.0,
                initial_on,
                initial_p: if initial_on { 2.0 } else { 0.0 },
            }],
            renewables: vec![],
            horizon: load.len() as u32,
            st_per_da: 1,
            rt_per_st: 1,
            da_hours: 1.0,
            load: load.iter().map(|&l| vec![l]).collect(),
            da_tree: None,
            st_lattice: None,
            rt_noise: None,
            shed_penalty: 50.0,
            curtail_penalty: 4.0,
            terminal: "hard".into(),
            integral_power: true,
            interpretation: 1,
        }
    }

    #[test]
    fn dispatch_arithmetic() {
        let cfg = single(&[0.0], 1, false);
        let d = rt_dispatch(&cfg, &[100.0], &[20.0], &[110.0]);
        assert_eq!((d.curtail, d.shed, d.cost), (10.0, 0.0, 10.0 * cfg.curtail_penalty));
        let d = rt_dispatch(&cfg, &[50.0], &[0.0], &[80.0]);
        assert_eq!((d.shed, d.cost), (30.0, 30.0 * cfg.shed_penalty));
        assert_eq!(rt_dispatch(&cfg, &[40.0], &[], &[40.0]).cost, 0.0);
    }

    #[test]
    fn flat_load_commits_once() {
        // nothing to serve at the first tick, then a flat load of 2
        let cfg = single(&[0.0, 2.0, 2.0, 2.0], 1, false);
        let p = build_instance(&cfg).unwrap();
        let (obj, t) = solve_full(&p);
        let g = &cfg.generators[0];
        let expected = g.startup + 3.0 * (g.no_load + g.variable * 2.0);
        assert!((obj - expected).abs() < 1e-6, "{obj} vs {expected}");
        let starts: f64 = (0..4).map(|d| t.u[p.grid.linear_index(TickId { level: 0, index: d })][0][0]).sum();
        assert_eq!(starts, 1.0);
        let chk = check_physics(&cfg, &p, &t, 1e-6);
        assert!(chk.is_ok(), "{:?}", chk.violations);
        assert!((chk.cost - obj).abs() < 1e-6);
    }

    /// Cheapest schedule by enumerating outputs per tick, with the physics
    /// checked here rather than by the model.
    fn brute_force(cfg: &UcConfig) -> f64 {
        let g = &cfg.generators[0];
        let opts: Vec<f64> = std::iter::once(0.0).chain((g.pmin as i64..=g.pmax as i64).map(|q| q as f64)).collect();
        let h = cfg.horizon as usize;
        let mut best = f64::INFINITY;
        let total = opts.len().pow(h as u32 + 1);
        for code in 0..total {
            // states at ticks 0..=h; tick 0 is the initial state
            let mut seq = vec![g.initial_p];
            let mut c = code;
            for _ in 0..h {
                seq.push(opts[c % opts.len()]);
                c /= opts.len();
            }
            if c % opts.len() != 0 {
                continue;
            }
            let on: Vec<bool> = seq.iter().map(|&q| q > 0.0).collect();
            if seq.windows(2).any(|w| (w[1] - w[0]).abs() > g.ramp) {
                continue;
            }
            let ok = runs(&on).iter().all(|&(o, _, len, open)| open || len >= if o { g.min_up } else { g.min_down }.unwrap_or(1) as usize);
            if !ok {
                continue;
            }
            let mut cost = 0.0;
            for d in 0..h {
                if on[d] {
                    cost += g.no_load + g.variable * seq[d];
                }
                if !on[d] && on[d + 1] {
                    cost += g.startup;
                }
                if on[d] && !on[d + 1] {
                    cost += g.shutdown;
                }
                cost += rt_dispatch(cfg, &[seq[d]], &[], &cfg.load[d]).cost;
            }
            best = best.min(cost);
        }
        best
    }

    #[test]
    fn min_downtime_binds_against_a_short_window() {
        // profitable at ticks 0 and 2 only; a 3-tick downtime forbids the
        // stop-and-restart that a 1-tick downtime allows
        let load = [2.0, 0.0, 2.0, 0.0, 0.0];
        let free = single(&load, 1, true);
        let tight = single(&load, 3, true);
        let (a, _) = solve_full(&build_instance(&free).unwrap());
        let p = build_instance(&tight).unwrap();
        let (b, t) = solve_full(&p);
        assert!((a - brute_force(&free)).abs() < 1e-6, "{a}");
        assert!((b - brute_force(&tight)).abs() < 1e-6, "{b}");
        assert!(b > a + 1e-6);
        // the tight schedule never restarts after stopping
        let on: Vec<bool> = (0..5).map(|d| t.x[p.grid.linear_index(TickId { level: 0, index: d })][0][0] > 0.5).collect();
        assert!(runs(&on).iter().all(|r| r.0 || r.2 >= 3 || r.3));
        assert!(check_physics(&tight, &p, &t, 1e-6).is_ok());
    }

    #[test]
    fn unreachable_ramp_goal_is_reported() {
        let mut cfg = single(&[0.0, 0.0], 1, false);
        cfg.st_per_da = 2;
        cfg.load = vec![vec![0.0]; 4];
        cfg.generators.push(GeneratorSpec {
            name: "peaker".into(),
            level: 2,
            bus: "b".into(),
            pmin: 0.0,
            pmax: 50.0,
            ramp: 10.0,
            min_up: None,
            min_down: None,
            no_load: 0.0,
            variable: 1.0,
            startup: 0.0,
            shutdown: 0.0,
            initial_on: true,
            initial_p: 0.0,
        });
        cfg.integral_power = false;
        let p = build_instance(&cfg).unwrap();
        let grids = crate::segdp::StateGrid::from_bounds(&p, 5.0).unwrap();
        let root = TickId { level: 0, index: 0 };
        let y = [0.0, 0.0];
        let t = crate::segdp::backward_segment(&p, &grids, root, Some(&[1.0, 25.0]), Terminal::Hard, &y, "base").unwrap();
        assert_eq!(crate::segdp::value_v(&grids, &t, &[1.0, 0.0]).unwrap(), f64::INFINITY);
        let t = crate::segdp::backward_segment(&p, &grids, root, Some(&[1.0, 20.0]), Terminal::Hard, &y, "base").unwrap();
        assert!(crate::segdp::value_v(&grids, &t, &[1.0, 0.0]).unwrap().is_finite());
    }

    #[test]
    fn tiny_instance_solves_in_both_modes_and_passes_physics() {
        let cfg = uc_tiny();
        let p = build_instance(&cfg).unwrap();
        let (full, t) = solve_full(&p);
        let chk = check_physics(&cfg, &p, &t, 1e-6);
        assert!(chk.is_ok(), "{:?}", chk.violations);
        assert!((chk.cost - full).abs() < 1e-6, "{} vs {full}", chk.cost);
        let b = build_synchronized(&p, &BuildOptions::default()).unwrap();
        let r = solve_milp(&b.sf, &MilpOptions::default());
        assert_eq!(r.status, MilpStatus::Optimal);
        assert!(r.objective >= full - 1e-9);
        let ts = b.layout.trajectory(&p, &r.x, BuildOptions::default().node_budget).unwrap();
        let chk = check_physics(&cfg, &p, &ts, 1e-6);
        assert!(chk.is_ok(), "{:?}", chk.violations);
        assert!((chk.cost - r.objective).abs() < 1e-6);
        let rows = reserve_report(&cfg, &p, &t);
        assert_eq!(rows.len(), t.scenarios.len() * 8);
        for r in &rows {
            assert!((r.y2 + r.renewable + r.shed - r.curtail - r.load).abs() < 1e-6);
        }
        assert!(solution_csv(&cfg, &p, &t).lines().count() > 1);
    }

    #[test]
    fn mutated_trajectories_are_rejected() {
        let cfg = uc_tiny();
        let p = build_instance(&cfg).unwrap();
        let b = build_synchronized(&p, &BuildOptions::default()).unwrap();
        let r = solve_milp(&b.sf, &MilpOptions::default());
        let t = b.layout.trajectory(&p, &r.x, BuildOptions::default().node_budget).unwrap();
        assert!(check_physics(&cfg, &p, &t, 1e-6).is_ok());
        let l0 = |d: usize| p.grid.linear_index(TickId { level: 0, index: d });
        let set_on = |t: &mut Trajectory, seq: [f64; 3]| {
            for s in 0..t.scenarios.len() {
                t.x[l0(0)][s][..2].copy_from_slice(&[seq[0], 2.0 * seq[0]]);
                t.next[l0(0)][s][..2].copy_from_slice(&[seq[1], 2.0 * seq[1]]);
                t.x[l0(1)][s][..2].copy_from_slice(&[seq[1], 2.0 * seq[1]]);
                t.next[l0(1)][s][..2].copy_from_slice(&[seq[2], 2.0 * seq[2]]);
            }
        };
        let mut cases: Vec<(&str, Trajectory)> = Vec::new();
        let mut m = t.clone();
        m.x[l0(1)][0][1] = 7.0;
        cases.push(("above pmax", m));
        let mut m = t.clone();
        m.next[l0(0)][0][1] = m.x[l0(0)][0][1] + 3.0;
        cases.push(("ramp", m));
        let mut m = t.clone();
        set_on(&mut m, [0.0, 1.0, 0.0]);
        cases.push(("min_up", m));
        let mut m = t.clone();
        set_on(&mut m, [1.0, 0.0, 1.0]);
        cases.push(("min_down", m));
        let mut m = t.clone();
        m.u[l0(0)][1][2] += 1.0;
        cases.push(("same information", m));
        let mut m = t.clone();
        for s in 0..m.scenarios.len() {
            m.goals[0][s][1] += 1.0;
        }
        cases.push(("goal", m));
        let mut m = t.clone();
        let rt = p.grid.linear_index(TickId { level: 2, index: 0 });
        m.u[rt][0][0] += 1.0;
        cases.push(("balance", m));
        for (what, m) in cases {
            let v = check_physics(&cfg, &p, &m, 1e-6).violations;
            assert!(v.iter().any(|v| v.msg.contains(what)), "{what}: {v:?}");
        }
    }

    #[test]
    fn zero_variance_matches_the_deterministic_instance() {
        let mut det = uc_tiny();
        det.da_tree = None;
        det.st_lattice = None;
        let mut flat = uc_tiny();
        flat.da_tree = Some(DaTree { branch_at: 1, branches: vec![DaBranch { shift: 0.0, prob: 0.5 }, DaBranch { shift: 0.0, prob: 0.5 }] });
        flat.st_lattice = Some(two_node_lattice(2, 0.0));
        flat.rt_noise = Some(vec![RtOutcome { deviation: vec![0.0], prob: 0.5 }, RtOutcome { deviation: vec![0.0], prob: 0.5 }]);
        flat.load.truncate(8);
        let (a, _) = solve_full(&build_instance(&det).unwrap());
        let pf = build_instance(&flat).unwrap();
        let b = build_synchronized(&pf, &BuildOptions::default()).unwrap();
        let rb = solve_milp(&b.sf, &MilpOptions::default());
        let bd = build_synchronized(&build_instance(&det).unwrap(), &BuildOptions::default()).unwrap();
        let rd = solve_milp(&bd.sf, &MilpOptions::default());
        assert!((rb.objective - rd.objective).abs() < 1e-6);
        assert!(rd.objective >= a - 1e-9);
    }

    #[test]
    fn reports_for_empty_and_unserved_systems() {
        let mut cfg = single(&[0.0, 0.0], 1, false);
        let p = build_instance(&cfg).unwrap();
        let (_, t) = solve_full(&p);
        assert!(reserve_report(&cfg, &p, &t).iter().all(|r| r.load == 0.0 && r.shed == 0.0 && r.curtail == 0.0));
        cfg.generators.clear();
        cfg.load = vec![vec![3.0], vec![5.0]];
        let p = build_instance(&cfg).unwrap();
        let (_, t) = solve_full(&p);
        assert!(reserve_report(&cfg, &p, &t).iter().all(|r| (r.shed - r.load).abs() < 1e-9));
    }

    #[test]
    fn config_violations_are_anchored() {
        let mut cfg = uc_tiny();
        cfg.generators[0].bus = "east".into();
        cfg.generators[1].min_up = Some(2);
        cfg.load[3][1] = -1.0;
        let at: Vec<String> = cfg.validate().into_iter().map(|v| v.at).collect();
        assert!(at.contains(&"uc.generators[0].bus".to_string()));
        assert!(at.contains(&"uc.generators[1].min_up".to_string()));
        assert!(at.contains(&"uc.load[3]".to_string()));
        assert!(matches!(build_instance(&cfg), Err(crate::Error::Invalid(_))));
    }

    #[test]
    fn raising_the_shed_penalty_never_lowers_cost_or_raises_shedding() {
        let mut last: Option<(f64, f64)> = None;
        let mut first_shed = 0.0;
        for penalty in [0.0, 5.0, 20.0, 60.0, 200.0, 1000.0] {
            let mut cfg = uc_tiny();
            cfg.shed_penalty = penalty;
            let p = build_instance(&cfg).unwrap();
            let (obj, t) = solve_full(&p);
            let shed: f64 = reserve_report(&cfg, &p, &t).iter().map(|r| t.scenarios.scenarios[r.scenario].prob * r.shed).sum();
            if penalty == 0.0 {
                first_shed = shed;
            }
            if let Some((prev_obj, prev_shed)) = last {
                assert!(obj >= prev_obj - 1e-6, "penalty {penalty}: {obj} < {prev_obj}");
                assert!(shed <= prev_shed + 1e-6, "penalty {penalty}: shed {shed} > {prev_shed}");
            }
            last = Some((obj, shed));
        }
        assert!(first_shed > 1.0 && last.unwrap().1 < 1e-6, "sweep left shedding unchanged");
    }
}

