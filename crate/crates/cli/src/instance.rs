//! TOML instance files.
//!
//! A file carries `version = 1` and either a generic problem (`[grid]`,
//! `[stochastics]`, `[[levels]]`) or the unit-commitment shorthand `[uc]`,
//! plus optional `[options]`. Unknown keys are rejected. Syntax and schema
//! errors are anchored at a line; semantic violations at a dotted path.

use std::collections::BTreeMap;

use serde::Deserialize;

use mts_core::model::{Affine, HistoryRow, LevelModel, LinRow, MtsProblem, StageTemplate, Term, Terminal, TickOverride};
use mts_core::stochastic::{
    ConditionalNoise, Hazard, LatticeNode, LevelUncertainty, MarkovLattice, NoiseOutcome, ScenarioTree, StochasticSpec, TreeNode,
};
use mts_core::timegrid::{Branching, Interpretation, Tick, Time, TimeGrid};
use mts_core::ucdemo::{self, UcConfig};
use mts_core::{Error, Violation};
use mts_milp::Sense;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub version: u32,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub stochastics: Option<StochSection>,
    #[serde(default)]
    pub levels: Vec<LevelSection>,
    #[serde(default)]
    pub uc: Option<UcConfig>,
    #[serde(default)]
    pub options: Options,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub horizon: u32,
    /// Children per tick for each level below the first: a count, or one
    /// count per parent tick.
    #[serde(default)]
    pub children: Vec<Branching>,
    /// Level-1 tick lengths such as `"1"` or `"1/2"`.
    #[serde(default)]
    pub durations: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSection {
    #[serde(default)]
    pub parent: Option<usize>,
    pub prob: f64,
    #[serde(default)]
    pub outcome: Vec<f64>,
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeNodeSection {
    pub outcome: Vec<f64>,
    pub label: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub outcome: Vec<f64>,
    pub prob: f64,
    #[serde(default)]
    pub label: Option<String>,
}

/// Uncertainty of one level below the first.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FineSection {
    /// `deterministic`, `lattice` or `noise`.
    pub kind: String,
    #[serde(default)]
    pub positions: Option<Vec<Vec<LatticeNodeSection>>>,
    #[serde(default)]
    pub transitions: Option<BTreeMap<String, Vec<Vec<Vec<f64>>>>>,
    /// Distribution per parent label (`"*"` for any).
    #[serde(default)]
    pub noise: Option<BTreeMap<String, Vec<NoiseSection>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochSection {
    pub tree: Vec<NodeSection>,
    #[serde(default)]
    pub levels: Vec<FineSection>,
    /// `hazard-decision` or `decision-hazard` per level.
    #[serde(default)]
    pub hazard: Option<Vec<String>>,
    #[serde(default)]
    pub stage_starts: Option<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineSection {
    /// `[["x0", 1.0], ["u1", -2.0]]`
    pub terms: Vec<(String, f64)>,
    #[serde(default)]
    pub constant: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowSection {
    #[serde(default)]
    pub name: Option<String>,
    pub terms: Vec<(String, f64)>,
    /// `<=`, `>=` or `=`.
    pub sense: String,
    pub rhs: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistorySection {
    #[serde(default)]
    pub name: Option<String>,
    /// `[[lag, "u0", 1.0]]`
    pub terms: Vec<(usize, String, f64)>,
    pub sense: String,
    pub rhs: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideSection {
    pub tick: String,
    #[serde(default)]
    pub c: Option<Vec<f64>>,
    #[serde(default)]
    pub d: Option<Vec<f64>>,
    /// `[[row, rhs]]`
    #[serde(default)]
    pub rhs: Vec<(usize, f64)>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSection {
    #[serde(default)]
    pub x_lb: Vec<f64>,
    #[serde(default)]
    pub x_ub: Vec<f64>,
    #[serde(default)]
    pub x_int: Option<Vec<bool>>,
    #[serde(default)]
    pub u_lb: Vec<f64>,
    #[serde(default)]
    pub u_ub: Vec<f64>,
    #[serde(default)]
    pub u_int: Option<Vec<bool>>,
    #[serde(default)]
    pub c: Option<Vec<f64>>,
    #[serde(default)]
    pub d: Option<Vec<f64>>,
    #[serde(default)]
    pub x0: Vec<f64>,
    #[serde(default)]
    pub dynamics: Vec<AffineSection>,
    #[serde(default)]
    pub rows: Vec<RowSection>,
    #[serde(default)]
    pub state_rows: Vec<RowSection>,
    #[serde(default)]
    pub history: Vec<HistorySection>,
    #[serde(default)]
    pub aggregation: Option<Vec<AffineSection>>,
    #[serde(default)]
    pub terminal: Option<String>,
    #[serde(default)]
    pub overrides: Vec<OverrideSection>,
}

/// Solver settings a file may carry; command-line flags take precedence.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    #[serde(default)]
    pub interpretation: Option<u8>,
    /// Applied to every level below the first.
    #[serde(default)]
    pub terminal: Option<String>,
    #[serde(default)]
    pub node_budget: Option<usize>,
    #[serde(default)]
    pub policy_budget: Option<u128>,
    #[serde(default)]
    pub dp_budget: Option<usize>,
    #[serde(default)]
    pub grid_step: Option<f64>,
    #[serde(default)]
    pub gap_tol: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// A loaded instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub problem: MtsProblem,
    pub uc: Option<UcConfig>,
    pub options: Options,
}

/// Why a file could not be turned into a valid instance.
#[derive(Debug)]
pub enum LoadError {
    /// Syntax or schema problem, with the 1-based line when known.
    Schema { line: Option<usize>, msg: String },
    Invalid(Vec<Violation>),
}

impl std::fmt::Display for LoadError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LoadError::Schema { line: Some(l), msg } => write!(f, "line {l}: {msg}"),
            LoadError::Schema { line: None, msg } => write!(f, "{msg}"),
            LoadError::Invalid(v) => {
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        writeln!(f)?;
                    }
                    write!(f, "{x}")?;
                }
                Ok(())
            }
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

pub fn parse_term(s: &str) -> Option<Term> {
    let (kind, idx) = s.split_at(1.min(s.len()));
    let i: usize = idx.parse().ok()?;
    match kind {
        "x" => Some(Term::X(i)),
        "u" => Some(Term::U(i)),
        "y" => Some(Term::Y(i)),
        "w" => Some(Term::W(i)),
        _ => None,
    }
}

fn parse_sense(s: &str) -> Option<Sense> {
    match s {
        "<=" => Some(Sense::Le),
        ">=" => Some(Sense::Ge),
        "=" | "==" => Some(Sense::Eq),
        _ => None,
    }
}

fn parse_hazard(s: &str) -> Option<Hazard> {
    match s {
        "hazard-decision" => Some(Hazard::HazardDecision),
        "decision-hazard" => Some(Hazard::DecisionHazard),
        _ => None,
    }
}

/// Collects conversion problems while building model types.
struct Conv {
    v: Vec<Violation>,
}

impl Conv {
    fn terms(&mut self, at: &str, raw: &[(String, f64)]) -> Vec<(Term, f64)> {
        let mut out = Vec::new();
        for (k, (t, a)) in raw.iter().enumerate() {
            match parse_term(t) {
                Some(term) => out.push((term, *a)),
                None => self.v.push(Violation::new(format!("{at}.terms[{k}]"), format!("`{t}` is not x<i>, u<i>, y<i> or w<i>"))),
            }
        }
        out
    }

    fn affine(&mut self, at: &str, raw: &AffineSection) -> Affine {
        Affine::new(self.terms(at, &raw.terms), raw.constant)
    }

    fn sense(&mut self, at: &str, s: &str) -> Sense {
        parse_sense(s).unwrap_or_else(|| {
            self.v.push(Violation::new(format!("{at}.sense"), format!("`{s}` is not <=, >= or =")));
            Sense::Eq
        })
    }

    fn row(&mut self, at: &str, raw: &RowSection, k: usize) -> LinRow {
        let terms = self.terms(at, &raw.terms);
        let sense = self.sense(at, &raw.sense);
        LinRow::new(raw.name.clone().unwrap_or_else(|| format!("row{k}")), terms, sense, raw.rhs)
    }

    fn level(&mut self, j: usize, raw: &LevelSection) -> LevelModel {
        let at = format!("levels[{j}]");
        let nx = raw.x_ub.len().max(raw.x_lb.len()).max(raw.x0.len());
        let nu = raw.u_ub.len().max(raw.u_lb.len());
        let mut tpl = StageTemplate {
            x_lb: if raw.x_lb.is_empty() { vec![0.0; nx] } else { raw.x_lb.clone() },
            x_ub: if raw.x_ub.is_empty() { vec![f64::INFINITY; nx] } else { raw.x_ub.clone() },
            x_int: raw.x_int.clone().unwrap_or_else(|| vec![false; nx]),
            u_lb: if raw.u_lb.is_empty() { vec![0.0; nu] } else { raw.u_lb.clone() },
            u_ub: if raw.u_ub.is_empty() { vec![f64::INFINITY; nu] } else { raw.u_ub.clone() },
            u_int: raw.u_int.clone().unwrap_or_else(|| vec![false; nu]),
            c: raw.c.clone().unwrap_or_else(|| vec![0.0; nx]),
            d: raw.d.clone().unwrap_or_else(|| vec![0.0; nu]),
            ..Default::default()
        };
        tpl.dynamics = raw.dynamics.iter().enumerate().map(|(i, a)| self.affine(&format!("{at}.dynamics[{i}]"), a)).collect();
        tpl.rows = raw.rows.iter().enumerate().map(|(i, r)| self.row(&format!("{at}.rows[{i}]"), r, i)).collect();
        tpl.state_rows = raw.state_rows.iter().enumerate().map(|(i, r)| self.row(&format!("{at}.state_rows[{i}]"), r, i)).collect();
        tpl.aggregation =
            raw.aggregation.as_ref().map(|agg| agg.iter().enumerate().map(|(i, a)| self.affine(&format!("{at}.aggregation[{i}]"), a)).collect());
        for (i, h) in raw.history.iter().enumerate() {
            let here = format!("{at}.history[{i}]");
            let mut terms = Vec::new();
            for (k, (lag, t, a)) in h.terms.iter().enumerate() {
                match parse_term(t) {
                    Some(term) => terms.push((*lag, term, *a)),
                    None => self.v.push(Violation::new(format!("{here}.terms[{k}]"), format!("`{t}` is not a term"))),
                }
            }
            let sense = self.sense(&here, &h.sense);
            tpl.history.push(HistoryRow::new(h.name.clone().unwrap_or_else(|| format!("history{i}")), terms, sense, h.rhs));
        }
        let mut lm = LevelModel::new(tpl, raw.x0.clone());
        if let Some(t) = &raw.terminal {
            match t.parse::<Terminal>() {
                Ok(t) => lm.terminal = t,
                Err(e) => self.v.push(Violation::new(format!("{at}.terminal"), e.to_string())),
            }
        }
        for (i, o) in raw.overrides.iter().enumerate() {
            match o.tick.parse::<Tick>() {
                Ok(tick) => {
                    lm.overrides.insert(tick, TickOverride { c: o.c.clone(), d: o.d.clone(), rhs: o.rhs.clone() });
                }
                Err(e) => self.v.push(Violation::new(format!("{at}.overrides[{i}].tick"), e.to_string())),
            }
        }
        lm
    }

    fn fine(&mut self, k: usize, raw: &FineSection) -> LevelUncertainty {
        let at = format!("stochastics.levels[{k}]");
        match raw.kind.as_str() {
            "deterministic" => LevelUncertainty::Deterministic,
            "lattice" => {
                let (Some(pos), Some(tr)) = (&raw.positions, &raw.transitions) else {
                    self.v.push(Violation::new(&at, "a lattice needs `positions` and `transitions`"));
                    return LevelUncertainty::Deterministic;
                };
                LevelUncertainty::Lattice(MarkovLattice {
                    positions: pos
                        .iter()
                        .map(|p| p.iter().map(|n| LatticeNode { outcome: n.outcome.clone(), label: n.label.clone() }).collect())
                        .collect(),
                    transitions: tr.clone(),
                })
            }
            "noise" => {
                let Some(table) = &raw.noise else {
                    self.v.push(Violation::new(&at, "noise needs a `noise` table"));
                    return LevelUncertainty::Deterministic;
                };
                let table = table
                    .iter()
                    .map(|(label, d)| {
                        let dist = d
                            .iter()
                            .enumerate()
                            .map(|(i, o)| NoiseOutcome {
                                outcome: o.outcome.clone(),
                                prob: o.prob,
                                label: o.label.clone().unwrap_or_else(|| i.to_string()),
                            })
                            .collect();
                        (label.clone(), dist)
                    })
                    .collect();
                LevelUncertainty::Noise(ConditionalNoise { table })
            }
            other => {
                self.v.push(Violation::new(format!("{at}.kind"), format!("`{other}` is not deterministic, lattice or noise")));
                LevelUncertainty::Deterministic
            }
        }
    }
}

fn generic(file: &InstanceFile, name: String) -> Result<MtsProblem, LoadError> {
    let mut c = Conv { v: Vec::new() };
    let Some(g) = &file.grid else {
        return Err(LoadError::Invalid(vec![Violation::new("grid", "missing: give [grid], [stochastics] and [[levels]], or [uc]")]));
    };
    let durations: Option<Vec<Time>> = g.durations.as_ref().map(|ds| {
        ds.iter()
            .enumerate()
            .filter_map(|(i, s)| match s.trim().parse::<Time>() {
                Ok(t) => Some(t),
                Err(_) => {
                    c.v.push(Violation::new(format!("grid.durations[{i}]"), format!("`{s}` is not a rational number")));
                    None
                }
            })
            .collect()
    });
    let grid = TimeGrid::new(g.horizon, &g.children, durations.as_deref()).map_err(|e| LoadError::Invalid(vec![Violation::new("grid", e.to_string())]))?;
    let levels: Vec<LevelModel> = file.levels.iter().enumerate().map(|(j, l)| c.level(j, l)).collect();
    let stoch = match &file.stochastics {
        None => StochasticSpec::deterministic(&grid),
        Some(s) => {
            let tree = ScenarioTree {
                nodes: s
                    .tree
                    .iter()
                    .enumerate()
                    .map(|(i, n)| TreeNode {
                        parent: n.parent,
                        prob: n.prob,
                        outcome: n.outcome.clone(),
                        label: n.label.clone().unwrap_or_else(|| i.to_string()),
                    })
                    .collect(),
            };
            let fine = if s.levels.is_empty() {
                vec![LevelUncertainty::Deterministic; grid.num_levels() - 1]
            } else {
                s.levels.iter().enumerate().map(|(k, f)| c.fine(k, f)).collect()
            };
            let hazard = match &s.hazard {
                None => vec![Hazard::HazardDecision; grid.num_levels()],
                Some(hs) => hs
                    .iter()
                    .enumerate()
                    .map(|(i, h)| {
                        parse_hazard(h).unwrap_or_else(|| {
                            c.v.push(Violation::new(format!("stochastics.hazard[{i}]"), format!("`{h}` is not hazard-decision or decision-hazard")));
                            Hazard::HazardDecision
                        })
                    })
                    .collect(),
            };
            StochasticSpec { tree, fine, hazard, stage_starts: s.stage_starts.clone() }
        }
    };
    if !c.v.is_empty() {
        return Err(LoadError::Invalid(c.v));
    }
    Ok(MtsProblem { name, grid, stoch, levels, interpretation: Interpretation::Simultaneous })
}

/// Parses and validates an instance document.
pub fn load_str(text: &str, default_name: &str) -> Result<Instance, LoadError> {
    let file: InstanceFile = toml::from_str(text).map_err(|e| LoadError::Schema {
        line: e.span().map(|s| line_of(text, s.start)),
        msg: e.message().to_string(),
    })?;
    if file.version != FORMAT_VERSION {
        return Err(LoadError::Schema { line: None, msg: format!("unsupported version {} (expected {FORMAT_VERSION})", file.version) });
    }
    let name = file.name.clone().unwrap_or_else(|| default_name.to_string());
    let (mut problem, uc) = match &file.uc {
        Some(cfg) => {
            if file.grid.is_some() || file.stochastics.is_some() || !file.levels.is_empty() {
                return Err(LoadError::Invalid(vec![Violation::new("uc", "the shorthand excludes [grid], [stochastics] and [[levels]]")]));
            }
            let mut cfg = cfg.clone();
            if cfg.name.is_empty() {
                cfg.name = name.clone();
            }
            let p = ucdemo::build_instance(&cfg).map_err(|e| match e {
                Error::Invalid(v) => LoadError::Invalid(v),
                other => LoadError::Invalid(vec![Violation::new("uc", other.to_string())]),
            })?;
            (p, Some(cfg))
        }
        None => (generic(&file, name)?, None),
    };
    let opts = &file.options;
    let mut v = Vec::new();
    if let Some(n) = opts.interpretation {
        match Interpretation::from_number(n) {
            Some(i) => problem.interpretation = i,
            None => v.push(Violation::new("options.interpretation", "must be 1 or 2")),
        }
    }
    if let Some(t) = &opts.terminal {
        match t.parse::<Terminal>() {
            Ok(t) => problem.levels.iter_mut().skip(1).for_each(|l| l.terminal = t),
            Err(e) => v.push(Violation::new("options.terminal", e.to_string())),
        }
    }
    if let Some(s) = opts.grid_step {
        if !(s > 0.0 && s.is_finite()) {
            v.push(Violation::new("options.grid_step", "must be positive"));
        }
    }
    v.extend(problem.validate());
    if !v.is_empty() {
        return Err(LoadError::Invalid(v));
    }
    Ok(Instance { problem, uc, options: file.options })
}
