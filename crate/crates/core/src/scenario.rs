//! Full scenarios (one realized outcome per tick, in linear tick order) and
//! the information classes that non-anticipativity groups them into.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::stochastic::{Hazard, LevelUncertainty, StochasticSpec};
use crate::timegrid::{Interpretation, TickId, TimeGrid};

/// Outcome drawn at one tick of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Realized {
    /// Index of the realized node within its source: tree node, lattice node
    /// at this position, or noise outcome.
    pub node: u32,
    /// Probability of this draw given the history.
    pub prob: f64,
    pub outcome: Vec<f64>,
    pub label: String,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub prob: f64,
    /// Indexed by linear tick position.
    pub real: Vec<Realized>,
}

#[derive(Debug, Clone)]
pub struct ScenarioSet {
    pub scenarios: Vec<Scenario>,
    /// Nodes of the fully expanded tree: distinct histories through each tick.
    pub expanded_nodes: usize,
    pub nodes_per_level: Vec<usize>,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }
}

/// Possible draws at linear tick `lin` given the realized history of the
/// ticks before it. Zero-probability branches are dropped.
pub fn branch_options(grid: &TimeGrid, spec: &StochasticSpec, lin: usize, history: &[Realized]) -> Result<Vec<Realized>> {
    let id = grid.linear_ids()[lin];
    let at = |t: TickId| &history[grid.linear_index(t)];
    if id.level == 0 {
        return draws(grid, spec, id, "", grid.prev_id(id).map(|p| at(p).node));
    }
    let parent = grid.parent_id(id).expect("level > 0");
    let prev = if grid.position_in_segment(id) > 0 { grid.prev_id(id).map(|p| at(p).node) } else { None };
    draws(grid, spec, id, &at(parent).label, prev)
}

/// Possible draws at tick `id`. For level-1 ticks `prev` is the tree node of
/// the previous level-1 tick; for faster ticks it is the node drawn at the
/// previous position of the same segment, and `parent_label` is the label
/// realized at the parent tick.
pub fn draws(grid: &TimeGrid, spec: &StochasticSpec, id: TickId, parent_label: &str, prev: Option<u32>) -> Result<Vec<Realized>> {
    if id.level == 0 {
        let tree = &spec.tree;
        let nodes: Vec<usize> = match prev {
            None => vec![0],
            Some(p) => tree.children(p as usize),
        };
        if nodes.is_empty() {
            return Err(Error::Parse(format!("scenario tree ends before level-1 tick {}", id.index)));
        }
        return Ok(nodes
            .into_iter()
            .filter(|&k| k == 0 || tree.nodes[k].prob > 0.0)
            .map(|k| Realized {
                node: k as u32,
                prob: if k == 0 { 1.0 } else { tree.nodes[k].prob },
                outcome: tree.nodes[k].outcome.clone(),
                label: tree.nodes[k].label.clone(),
            })
            .collect());
    }
    let pos = grid.position_in_segment(id);
    match &spec.fine[id.level - 1] {
        LevelUncertainty::Deterministic => Ok(vec![Realized { node: 0, prob: 1.0, outcome: Vec::new(), label: String::new() }]),
        LevelUncertainty::Lattice(lat) => {
            if pos == 0 {
                let n = &lat.positions[0][0];
                return Ok(vec![Realized { node: 0, prob: 1.0, outcome: n.outcome.clone(), label: n.label.clone() }]);
            }
            let fam = lat
                .family(parent_label)
                .ok_or_else(|| Error::Parse(format!("no transition family for label `{parent_label}`")))?;
            let prev = prev.expect("lattice position > 0 has a predecessor") as usize;
            let row = &fam[pos - 1][prev];
            Ok(row
                .iter()
                .enumerate()
                .filter(|(_, p)| **p > 0.0)
                .map(|(k, p)| {
                    let n = &lat.positions[pos][k];
                    Realized { node: k as u32, prob: *p, outcome: n.outcome.clone(), label: n.label.clone() }
                })
                .collect())
        }
        LevelUncertainty::Noise(noise) => {
            let dist = noise
                .dist(parent_label)
                .ok_or_else(|| Error::Parse(format!("no noise table for label `{parent_label}`")))?;
            Ok(dist
                .iter()
                .enumerate()
                .filter(|(_, o)| o.prob > 0.0)
                .map(|(k, o)| Realized { node: k as u32, prob: o.prob, outcome: o.outcome.clone(), label: o.label.clone() })
                .collect())
        }
    }
}

/// Counts the fully expanded tree without materializing scenarios.
/// Returns `(expanded nodes, per-level nodes, scenarios)`.
pub fn count_expanded(grid: &TimeGrid, spec: &StochasticSpec, budget: usize) -> Result<(usize, Vec<usize>, usize)> {
    let mut per_level = vec![0usize; grid.num_levels()];
    let mut total = 0usize;
    let mut leaves = 0usize;
    let mut hist = Vec::with_capacity(grid.num_ticks());
    count_rec(grid, spec, 0, &mut hist, &mut per_level, &mut total, &mut leaves, budget)?;
    Ok((total, per_level, leaves))
}

#[allow(clippy::too_many_arguments)]
fn count_rec(
    grid: &TimeGrid,
    spec: &StochasticSpec,
    lin: usize,
    hist: &mut Vec<Realized>,
    per_level: &mut [usize],
    total: &mut usize,
    leaves: &mut usize,
    budget: usize,
) -> Result<()> {
    if lin == grid.num_ticks() {
        *leaves += 1;
        return Ok(());
    }
    let level = grid.linear_ids()[lin].level;
    for r in branch_options(grid, spec, lin, hist)? {
        *total += 1;
        per_level[level] += 1;
        if *total > budget {
            return Err(Error::Budget { what: "expanded tree nodes".into(), count: *total as u128, limit: budget as u128 });
        }
        hist.push(r);
        count_rec(grid, spec, lin + 1, hist, per_level, total, leaves, budget)?;
        hist.pop();
    }
    Ok(())
}

/// Enumerates all full scenarios depth-first in linear tick order.
pub fn enumerate(grid: &TimeGrid, spec: &StochasticSpec, budget: usize) -> Result<ScenarioSet> {
    let (expanded, per_level, _) = count_expanded(grid, spec, budget)?;
    let mut out = Vec::new();
    let mut hist = Vec::with_capacity(grid.num_ticks());
    enum_rec(grid, spec, 0, 1.0, &mut hist, &mut out)?;
    Ok(ScenarioSet { scenarios: out, expanded_nodes: expanded, nodes_per_level: per_level })
}

fn enum_rec(grid: &TimeGrid, spec: &StochasticSpec, lin: usize, prob: f64, hist: &mut Vec<Realized>, out: &mut Vec<Scenario>) -> Result<()> {
    if lin == grid.num_ticks() {
        out.push(Scenario { prob, real: hist.clone() });
        return Ok(());
    }
    for r in branch_options(grid, spec, lin, hist)? {
        let p = prob * r.prob;
        hist.push(r);
        enum_rec(grid, spec, lin + 1, p, hist, out)?;
        hist.pop();
    }
    Ok(())
}

/// Tick at which the outcome drawn at `id` becomes known, if it does
/// within the horizon.
pub fn reveal_tick(spec: &StochasticSpec, id: TickId) -> Option<TickId> {
    if id.level == 0 {
        spec.reveal_index(id.index).map(|index| TickId { level: 0, index })
    } else {
        Some(id)
    }
}

/// Whether the outcome drawn at `src` is known when deciding at `at`.
pub fn is_visible(grid: &TimeGrid, spec: &StochasticSpec, interp: Interpretation, src: TickId, at: TickId) -> bool {
    let Some(reveal) = reveal_tick(spec, src) else {
        return false;
    };
    let ord = grid.compare_ids(reveal, at, interp);
    match spec.hazard[src.level] {
        Hazard::HazardDecision => ord != Ordering::Greater,
        Hazard::DecisionHazard => ord == Ordering::Less,
    }
}

/// Partition of scenarios per tick. Classes are ordered by their lowest
/// member, which serves as the representative.
#[derive(Debug, Clone)]
pub struct InfoClasses {
    /// `class_of[lin][s]`
    pub class_of: Vec<Vec<u32>>,
    /// `members[lin][c]`, ascending scenario indices.
    pub members: Vec<Vec<Vec<usize>>>,
}

impl InfoClasses {
    pub fn count(&self) -> usize {
        self.members.iter().map(|m| m.len()).sum()
    }

    pub fn representative(&self, lin: usize, s: usize) -> usize {
        self.members[lin][self.class_of[lin][s] as usize][0]
    }
}

/// Groups scenarios by the realized nodes at a set of visible ticks.
pub fn group_by(set: &ScenarioSet, visible: &[usize]) -> (Vec<u32>, Vec<Vec<usize>>) {
    let mut map: HashMap<Vec<u32>, u32> = HashMap::new();
    let mut class_of = Vec::with_capacity(set.len());
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (s, sc) in set.scenarios.iter().enumerate() {
        let key: Vec<u32> = visible.iter().map(|&l| sc.real[l].node).collect();
        let next = members.len() as u32;
        let c = *map.entry(key).or_insert(next);
        if c == next {
            members.push(Vec::new());
        }
        members[c as usize].push(s);
        class_of.push(c);
    }
    (class_of, members)
}

/// Information classes of the full multistage problem.
pub fn information_classes(grid: &TimeGrid, spec: &StochasticSpec, set: &ScenarioSet, interp: Interpretation) -> InfoClasses {
    let ids = grid.linear_ids();
    let mut class_of = Vec::with_capacity(ids.len());
    let mut members = Vec::with_capacity(ids.len());
    for &at in ids {
        let visible: Vec<usize> = ids
            .iter()
            .enumerate()
            .filter(|(_, &src)| is_visible(grid, spec, interp, src, at))
            .map(|(l, _)| l)
            .collect();
        let (c, m) = group_by(set, &visible);
        class_of.push(c);
        members.push(m);
    }
    InfoClasses { class_of, members }
}

/// Ticks whose outcomes a decision at `at` may use in the synchronized
/// formulation: level-1 outcomes known at the level-1 ancestor, plus the
/// outcomes drawn so far in each enclosing segment.
pub fn sync_visible(grid: &TimeGrid, spec: &StochasticSpec, at: TickId) -> Vec<usize> {
    let a1 = grid.ancestor(at, 0);
    let mut out: Vec<usize> = (0..grid.horizon())
        .map(|d| TickId { level: 0, index: d })
        .filter(|&src| is_visible(grid, spec, Interpretation::Sequential, src, a1))
        .map(|src| grid.linear_index(src))
        .collect();
    for k in 1..=at.level {
        let ak = grid.ancestor(at, k);
        let parent = grid.parent_id(ak).expect("level > 0");
        for b in grid.children_ids(parent) {
            if b.index <= ak.index {
                out.push(grid.linear_index(b));
            }
        }
    }
    out.sort_unstable();
    out
}

/// Information classes of the synchronized formulation.
pub fn sync_classes(grid: &TimeGrid, spec: &StochasticSpec, set: &ScenarioSet) -> InfoClasses {
    let mut class_of = Vec::new();
    let mut members = Vec::new();
    for &at in grid.linear_ids() {
        let (c, m) = group_by(set, &sync_visible(grid, spec, at));
        class_of.push(c);
        members.push(m);
    }
    InfoClasses { class_of, members }
}
