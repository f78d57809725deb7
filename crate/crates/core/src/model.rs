//! Linear stage templates and the multi-timescale problem they make up.
//!
//! Every expression is sparse and affine in four kinds of quantities at a
//! tick: the state `x`, the control `u`, the aggregate `y` received from the
//! parent tick, and the outcome `w` drawn at the tick.

use std::collections::BTreeMap;

use mts_milp::Sense;

use crate::error::{Error, Result, Violation};
use crate::stochastic::StochasticSpec;
use crate::timegrid::{Interpretation, Tick, TickId, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    X(usize),
    U(usize),
    /// Parent aggregate.
    Y(usize),
    /// Outcome at this tick.
    W(usize),
}

impl Term {
    pub fn eval(self, x: &[f64], u: &[f64], y: &[f64], w: &[f64]) -> f64 {
        match self {
            Term::X(i) => x[i],
            Term::U(i) => u[i],
            Term::Y(i) => y[i],
            Term::W(i) => w[i],
        }
    }
}

pub fn eval_terms(terms: &[(Term, f64)], x: &[f64], u: &[f64], y: &[f64], w: &[f64]) -> f64 {
    terms.iter().map(|&(t, a)| a * t.eval(x, u, y, w)).sum()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Affine {
    pub terms: Vec<(Term, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn new(terms: impl Into<Vec<(Term, f64)>>, constant: f64) -> Self {
        Affine { terms: terms.into(), constant }
    }

    pub fn constant(c: f64) -> Self {
        Affine { terms: Vec::new(), constant: c }
    }

    pub fn eval(&self, x: &[f64], u: &[f64], y: &[f64], w: &[f64]) -> f64 {
        self.constant + eval_terms(&self.terms, x, u, y, w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinRow {
    pub terms: Vec<(Term, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub name: String,
}

impl LinRow {
    pub fn new(name: impl Into<String>, terms: impl Into<Vec<(Term, f64)>>, sense: Sense, rhs: f64) -> Self {
        LinRow { terms: terms.into(), sense, rhs, name: name.into() }
    }
}

/// Row over lagged states and controls of the same level; lag 0 is the
/// current tick. Terms reaching before the first tick are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub terms: Vec<(usize, Term, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub name: String,
}

impl HistoryRow {
    pub fn new(name: impl Into<String>, terms: impl Into<Vec<(usize, Term, f64)>>, sense: Sense, rhs: f64) -> Self {
        HistoryRow { terms: terms.into(), sense, rhs, name: name.into() }
    }

    pub fn has_current_control(&self) -> bool {
        self.terms.iter().any(|&(lag, t, _)| lag == 0 && matches!(t, Term::U(_)))
    }

    /// Violation given lagged `(state, control)` pairs; `None` drops the
    /// terms of that lag.
    pub fn residual<'a>(&self, lagged: &dyn Fn(usize) -> Option<(&'a [f64], &'a [f64])>) -> f64 {
        let lhs = self
            .terms
            .iter()
            .map(|&(lag, t, a)| match (lagged(lag), t) {
                (Some((x, _)), Term::X(i)) => a * x[i],
                (Some((_, u)), Term::U(i)) => a * u[i],
                _ => 0.0,
            })
            .sum();
        self.sense.violation(lhs, self.rhs)
    }

    pub fn max_lag(&self) -> usize {
        self.terms.iter().map(|t| t.0).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageTemplate {
    pub x_lb: Vec<f64>,
    pub x_ub: Vec<f64>,
    pub x_int: Vec<bool>,
    pub u_lb: Vec<f64>,
    pub u_ub: Vec<f64>,
    pub u_int: Vec<bool>,
    /// State cost.
    pub c: Vec<f64>,
    /// Control cost.
    pub d: Vec<f64>,
    /// Next state, one affine map per state component.
    pub dynamics: Vec<Affine>,
    /// Feasible set of controls given state, parent aggregate and outcome.
    pub rows: Vec<LinRow>,
    /// Rows over `x` alone; they also apply to goal states of this level.
    pub state_rows: Vec<LinRow>,
    /// Aggregate passed to child ticks; `None` on the finest level.
    pub aggregation: Option<Vec<Affine>>,
    pub history: Vec<HistoryRow>,
}

impl StageTemplate {
    pub fn nx(&self) -> usize {
        self.x_lb.len()
    }

    pub fn nu(&self) -> usize {
        self.u_lb.len()
    }

    pub fn ny(&self) -> usize {
        self.aggregation.as_ref().map_or(0, |a| a.len())
    }

    /// Stateless template with `nu` continuous controls in `[lb, ub]`.
    pub fn controls_only(u_lb: Vec<f64>, u_ub: Vec<f64>, d: Vec<f64>) -> Self {
        let n = u_lb.len();
        StageTemplate { u_lb, u_ub, u_int: vec![false; n], d, ..Default::default() }
    }

    pub fn stage_cost(&self, x: &[f64], u: &[f64]) -> Result<f64> {
        stage_cost(&self.c, &self.d, x, u)
    }

    pub fn step(&self, x: &[f64], u: &[f64], y: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(x, u)?;
        Ok(self.dynamics.iter().map(|a| a.eval(x, u, y, w)).collect())
    }

    pub fn aggregate(&self, x: &[f64], y: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        let agg = self
            .aggregation
            .as_ref()
            .ok_or_else(|| Error::Unsupported("aggregate on the finest timescale".into()))?;
        if x.len() != self.nx() {
            return Err(Error::Dimension { what: "state".into(), expected: self.nx(), got: x.len() });
        }
        Ok(agg.iter().map(|a| a.eval(x, &[], y, w)).collect())
    }

    /// Violated feasibility rows (including control bounds) as
    /// `(row name, residual)`.
    pub fn row_violations(&self, rhs: &dyn Fn(usize) -> f64, x: &[f64], u: &[f64], y: &[f64], w: &[f64], tol: f64) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for (i, r) in self.rows.iter().enumerate() {
            let v = r.sense.violation(eval_terms(&r.terms, x, u, y, w), rhs(i));
            if v > tol {
                out.push((r.name.clone(), v));
            }
        }
        for j in 0..self.nu() {
            let v = (self.u_lb[j] - u[j]).max(u[j] - self.u_ub[j]);
            if v > tol {
                out.push((format!("u{j} bounds"), v));
            }
            if self.u_int[j] && (u[j] - u[j].round()).abs() > tol {
                out.push((format!("u{j} integrality"), (u[j] - u[j].round()).abs()));
            }
        }
        out
    }

    /// Violated state bounds and state rows of `x`.
    pub fn state_violations(&self, x: &[f64], tol: f64) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for j in 0..self.nx() {
            let v = (self.x_lb[j] - x[j]).max(x[j] - self.x_ub[j]);
            if v > tol {
                out.push((format!("x{j} bounds"), v));
            }
            if self.x_int[j] && (x[j] - x[j].round()).abs() > tol {
                out.push((format!("x{j} integrality"), (x[j] - x[j].round()).abs()));
            }
        }
        for r in &self.state_rows {
            let v = r.sense.violation(eval_terms(&r.terms, x, &[], &[], &[]), r.rhs);
            if v > tol {
                out.push((r.name.clone(), v));
            }
        }
        out
    }

    fn check_dims(&self, x: &[f64], u: &[f64]) -> Result<()> {
        if x.len() != self.nx() {
            return Err(Error::Dimension { what: "state".into(), expected: self.nx(), got: x.len() });
        }
        if u.len() != self.nu() {
            return Err(Error::Dimension { what: "control".into(), expected: self.nu(), got: u.len() });
        }
        Ok(())
    }
}

pub fn stage_cost(c: &[f64], d: &[f64], x: &[f64], u: &[f64]) -> Result<f64> {
    if c.len() != x.len() {
        return Err(Error::Dimension { what: "state cost".into(), expected: c.len(), got: x.len() });
    }
    if d.len() != u.len() {
        return Err(Error::Dimension { what: "control cost".into(), expected: d.len(), got: u.len() });
    }
    Ok(c.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + d.iter().zip(u).map(|(a, b)| a * b).sum::<f64>())
}

/// Per-tick replacements for costs and feasibility right-hand sides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TickOverride {
    pub c: Option<Vec<f64>>,
    pub d: Option<Vec<f64>>,
    /// `(feasibility row index, rhs)`
    pub rhs: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Terminal {
    /// The segment must end exactly at its goal state.
    #[default]
    Hard,
    /// Deviation from the goal costs `ρ` per unit of L1 distance.
    L1(f64),
}

impl Terminal {
    /// Segment-end value for reaching `x` when the goal is `goal`; `None`
    /// goal means the end state is free.
    pub fn value(self, x: &[f64], goal: Option<&[f64]>) -> f64 {
        let Some(g) = goal else { return 0.0 };
        match self {
            Terminal::Hard => {
                if x.iter().zip(g).all(|(a, b)| (a - b).abs() <= 1e-9) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Terminal::L1(rho) => rho * x.iter().zip(g).map(|(a, b)| (a - b).abs()).sum::<f64>(),
        }
    }
}

impl std::fmt::Display for Terminal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Terminal::Hard => f.write_str("hard"),
            Terminal::L1(r) => write!(f, "l1:{r}"),
        }
    }
}

impl std::str::FromStr for Terminal {
    type Err = Error;
    fn from_str(s: &str) -> Result<Terminal> {
        if s == "hard" {
            return Ok(Terminal::Hard);
        }
        if let Some(r) = s.strip_prefix("l1:") {
            if let Ok(rho) = r.parse::<f64>() {
                if rho >= 0.0 && rho.is_finite() {
                    return Ok(Terminal::L1(rho));
                }
            }
        }
        Err(Error::Parse(format!("terminal mode `{s}` is not `hard` or `l1:<rho>` with rho >= 0")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelModel {
    pub template: StageTemplate,
    pub overrides: BTreeMap<Tick, TickOverride>,
    pub x0: Vec<f64>,
    /// How segments of this level meet their goal states.
    pub terminal: Terminal,
}

impl LevelModel {
    pub fn new(template: StageTemplate, x0: Vec<f64>) -> Self {
        LevelModel { template, overrides: BTreeMap::new(), x0, terminal: Terminal::Hard }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MtsProblem {
    pub name: String,
    pub grid: TimeGrid,
    pub stoch: StochasticSpec,
    pub levels: Vec<LevelModel>,
    pub interpretation: Interpretation,
}

/// Template of one tick with its overrides applied lazily.
#[derive(Clone, Copy)]
pub struct TickView<'a> {
    pub tpl: &'a StageTemplate,
    ov: Option<&'a TickOverride>,
}

impl<'a> TickView<'a> {
    pub fn c(&self) -> &'a [f64] {
        self.ov.and_then(|o| o.c.as_deref()).unwrap_or(&self.tpl.c)
    }

    pub fn d(&self) -> &'a [f64] {
        self.ov.and_then(|o| o.d.as_deref()).unwrap_or(&self.tpl.d)
    }

    pub fn rhs(&self, row: usize) -> f64 {
        if let Some(o) = self.ov {
            if let Some(&(_, v)) = o.rhs.iter().rev().find(|(r, _)| *r == row) {
                return v;
            }
        }
        self.tpl.rows[row].rhs
    }

    pub fn cost(&self, x: &[f64], u: &[f64]) -> f64 {
        stage_cost(self.c(), self.d(), x, u).expect("dimensions validated")
    }

    pub fn row_violations(&self, x: &[f64], u: &[f64], y: &[f64], w: &[f64], tol: f64) -> Vec<(String, f64)> {
        self.tpl.row_violations(&|r| self.rhs(r), x, u, y, w, tol)
    }
}

impl MtsProblem {
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn view(&self, id: TickId) -> TickView<'_> {
        let lm = &self.levels[id.level];
        let ov = if lm.overrides.is_empty() { None } else { lm.overrides.get(self.grid.tick(id)) };
        TickView { tpl: &lm.template, ov }
    }

    pub fn nx(&self, level: usize) -> usize {
        self.levels[level].template.nx()
    }

    pub fn nu(&self, level: usize) -> usize {
        self.levels[level].template.nu()
    }

    /// Aggregate dimension a level-`level` tick receives from its parent.
    pub fn ny_in(&self, level: usize) -> usize {
        if level == 0 {
            0
        } else {
            self.levels[level - 1].template.ny()
        }
    }

    pub fn nw(&self, level: usize) -> usize {
        self.stoch.outcome_dim(level)
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut v = self.stoch.validate(&self.grid);
        let levels = self.grid.num_levels();
        if self.levels.len() != levels {
            v.push(Violation::new("model.levels", format!("{} templates for a {levels}-level grid", self.levels.len())));
            return v;
        }
        for (j, lm) in self.levels.iter().enumerate() {
            let at = format!("model.level{}", j + 1);
            let t = &lm.template;
            let (nx, nu) = (t.nx(), t.nu());
            let ny = self.ny_in(j);
            let nw = if j == 0 || j - 1 < self.stoch.fine.len() { self.nw(j) } else { 0 };
            let lens = [
                ("x_ub", t.x_ub.len(), nx),
                ("x_int", t.x_int.len(), nx),
                ("c", t.c.len(), nx),
                ("dynamics", t.dynamics.len(), nx),
                ("u_ub", t.u_ub.len(), nu),
                ("u_int", t.u_int.len(), nu),
                ("d", t.d.len(), nu),
                ("x0", lm.x0.len(), nx),
            ];
            for (what, got, want) in lens {
                if got != want {
                    v.push(Violation::new(format!("{at}.{what}"), format!("length {got}, expected {want}")));
                }
            }
            if !v.is_empty() {
                continue;
            }
            for k in 0..nx {
                if t.x_lb[k] > t.x_ub[k] {
                    v.push(Violation::new(format!("{at}.x_lb[{k}]"), "lower bound above upper bound"));
                }
            }
            for k in 0..nu {
                if t.u_lb[k] > t.u_ub[k] {
                    v.push(Violation::new(format!("{at}.u_lb[{k}]"), "lower bound above upper bound"));
                }
            }
            let check = |terms: &[(Term, f64)], allow_u: bool, allow_yw: bool, here: String, v: &mut Vec<Violation>| {
                for &(term, a) in terms {
                    let ok = match term {
                        Term::X(i) => i < nx,
                        Term::U(i) => allow_u && i < nu,
                        Term::Y(i) => allow_yw && i < ny,
                        Term::W(i) => allow_yw && i < nw,
                    };
                    if !ok {
                        v.push(Violation::new(&here, format!("term {term:?} out of range (nx={nx}, nu={nu}, ny={ny}, nw={nw})")));
                    }
                    if !a.is_finite() {
                        v.push(Violation::new(&here, "non-finite coefficient"));
                    }
                }
            };
            for (i, a) in t.dynamics.iter().enumerate() {
                check(&a.terms, true, true, format!("{at}.dynamics[{i}]"), &mut v);
            }
            for (i, r) in t.rows.iter().enumerate() {
                check(&r.terms, true, true, format!("{at}.rows[{i}]"), &mut v);
            }
            for (i, r) in t.state_rows.iter().enumerate() {
                check(&r.terms, false, false, format!("{at}.state_rows[{i}]"), &mut v);
            }
            for (i, r) in t.history.iter().enumerate() {
                for &(_, term, _) in &r.terms {
                    let ok = match term {
                        Term::X(k) => k < nx,
                        Term::U(k) => k < nu,
                        _ => false,
                    };
                    if !ok {
                        v.push(Violation::new(format!("{at}.history[{i}]"), format!("term {term:?} must be a state or control in range")));
                    }
                }
            }
            match (&t.aggregation, j + 1 == levels) {
                (Some(_), true) => v.push(Violation::new(format!("{at}.aggregation"), "the finest timescale cannot declare an aggregation map")),
                (None, false) => v.push(Violation::new(format!("{at}.aggregation"), "a timescale with a faster child must declare an aggregation map")),
                (Some(agg), false) => {
                    for (i, a) in agg.iter().enumerate() {
                        check(&a.terms, false, true, format!("{at}.aggregation[{i}]"), &mut v);
                    }
                }
                (None, true) => {}
            }
            if let Terminal::L1(rho) = lm.terminal {
                if !(rho >= 0.0 && rho.is_finite()) {
                    v.push(Violation::new(format!("{at}.terminal"), "rho must be finite and nonnegative"));
                }
            }
            for s in t.state_violations(&lm.x0, 1e-9) {
                v.push(Violation::new(format!("{at}.x0"), format!("initial state violates {} by {}", s.0, s.1)));
            }
            for (tick, ov) in &lm.overrides {
                let here = format!("{at}.overrides{tick}");
                if tick.level() != j + 1 || !self.grid.contains(tick) {
                    v.push(Violation::new(&here, "tick not on this level of the grid"));
                }
                if ov.c.as_ref().is_some_and(|c| c.len() != nx) {
                    v.push(Violation::new(&here, "state cost length"));
                }
                if ov.d.as_ref().is_some_and(|d| d.len() != nu) {
                    v.push(Violation::new(&here, "control cost length"));
                }
                if ov.rhs.iter().any(|(r, _)| *r >= t.rows.len()) {
                    v.push(Violation::new(&here, "rhs override for an unknown row"));
                }
            }
        }
        v
    }
}
