//! Finite uncertainty per timescale: a scenario tree on the slowest level,
//! and for each faster level a Markov lattice, conditional noise, or
//! nothing at all.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::timegrid::{TickId, TimeGrid};

pub const PROB_TOL: f64 = 1e-12;

/// Key used when no transition family or noise table matches the parent's
/// label.
pub const ANY_LABEL: &str = "*";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub parent: Option<usize>,
    /// Probability of this branch given the parent (1 for the root).
    pub prob: f64,
    pub outcome: Vec<f64>,
    pub label: String,
}

/// Rooted tree; node 0 is the root and sits on the first level-1 tick,
/// and a node's depth is the index of the level-1 tick it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTree {
    pub nodes: Vec<TreeNode>,
}

impl ScenarioTree {
    /// Single path of `len` nodes, all carrying `outcome`.
    pub fn chain(len: usize, outcome: Vec<f64>) -> Self {
        let nodes = (0..len)
            .map(|i| TreeNode {
                parent: i.checked_sub(1),
                prob: 1.0,
                outcome: outcome.clone(),
                label: i.to_string(),
            })
            .collect();
        ScenarioTree { nodes }
    }

    /// Complete `b`-ary tree with `depth + 1` levels of nodes and uniform
    /// branch probabilities. Outcomes are the branch index.
    pub fn uniform(b: usize, depth: usize) -> Self {
        let mut nodes = vec![TreeNode { parent: None, prob: 1.0, outcome: vec![0.0], label: "0".into() }];
        let mut frontier = vec![0usize];
        for _ in 0..depth {
            let mut next = Vec::new();
            for &p in &frontier {
                for k in 0..b {
                    let id = nodes.len();
                    nodes.push(TreeNode {
                        parent: Some(p),
                        prob: 1.0 / b as f64,
                        outcome: vec![k as f64],
                        label: id.to_string(),
                    });
                    next.push(id);
                }
            }
            frontier = next;
        }
        ScenarioTree { nodes }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn depth(&self, mut i: usize) -> usize {
        let mut d = 0;
        while let Some(p) = self.nodes[i].parent {
            i = p;
            d += 1;
        }
        d
    }

    pub fn children(&self, i: usize) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&k| self.nodes[k].parent == Some(i)).collect()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.nodes.iter().enumerate().filter_map(|(k, n)| n.parent.map(|p| (p, k))).collect()
    }

    pub fn path_prob(&self, mut i: usize) -> f64 {
        let mut p = self.nodes[i].prob;
        while let Some(q) = self.nodes[i].parent {
            i = q;
            p *= self.nodes[i].prob;
        }
        p
    }

    pub fn leaves(&self) -> Vec<usize> {
        let mut has_child = vec![false; self.nodes.len()];
        for n in &self.nodes {
            if let Some(p) = n.parent {
                has_child[p] = true;
            }
        }
        (0..self.nodes.len()).filter(|&k| !has_child[k]).collect()
    }

    /// Root-to-node index path.
    pub fn path(&self, mut i: usize) -> Vec<usize> {
        let mut out = vec![i];
        while let Some(p) = self.nodes[i].parent {
            out.push(p);
            i = p;
        }
        out.reverse();
        out
    }

    pub fn max_depth(&self) -> usize {
        (0..self.nodes.len()).map(|i| self.depth(i)).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if self.nodes.is_empty() {
            v.push(Violation::new("tree", "no nodes"));
            return v;
        }
        for (i, n) in self.nodes.iter().enumerate() {
            let at = format!("tree.nodes[{i}]");
            match n.parent {
                None if i != 0 => v.push(Violation::new(&at, "only node 0 may be the root")),
                Some(_) if i == 0 => v.push(Violation::new(&at, "node 0 must be the root")),
                Some(p) if p >= i => v.push(Violation::new(&at, format!("parent {p} must precede the node"))),
                _ => {}
            }
            if !(n.prob.is_finite() && n.prob >= 0.0) {
                v.push(Violation::new(&at, format!("branch probability {} is not a probability", n.prob)));
            }
            if i == 0 && (n.prob - 1.0).abs() > PROB_TOL {
                v.push(Violation::new(&at, format!("root probability {} must be 1", n.prob)));
            }
            if n.outcome.len() != self.nodes[0].outcome.len() {
                v.push(Violation::new(&at, "outcome length differs from the root's"));
            }
            if n.outcome.iter().any(|x| !x.is_finite()) {
                v.push(Violation::new(&at, "non-finite outcome"));
            }
        }
        if !v.is_empty() {
            return v;
        }
        let mut sums = vec![0.0; self.nodes.len()];
        let mut has_child = vec![false; self.nodes.len()];
        for n in &self.nodes[1..] {
            let p = n.parent.expect("checked above");
            sums[p] += n.prob;
            has_child[p] = true;
        }
        for i in 0..self.nodes.len() {
            if has_child[i] && (sums[i] - 1.0).abs() > PROB_TOL {
                v.push(Violation::new(
                    if i == 0 { "tree.root".to_string() } else { format!("tree.nodes[{i}]") },
                    format!("children probabilities sum to {}", sums[i]),
                ));
            }
        }
        v
    }

    /// One entry per leaf: the root-to-leaf outcome sequence and the path
    /// probability.
    pub fn scenario_paths(&self) -> Result<Vec<(Vec<Vec<f64>>, f64)>> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyTree);
        }
        Ok(self
            .leaves()
            .into_iter()
            .map(|l| {
                let outcomes = self.path(l).into_iter().map(|k| self.nodes[k].outcome.clone()).collect();
                (outcomes, self.path_prob(l))
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeNode {
    pub outcome: Vec<f64>,
    pub label: String,
}

/// Positions are counted from the start of each segment; position 0 holds
/// the single fixed initial node. `transitions[label][k]` is the
/// row-stochastic matrix from position `k` to `k + 1`, selected by the
/// realized label of the parent tick (falling back to `"*"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovLattice {
    pub positions: Vec<Vec<LatticeNode>>,
    pub transitions: BTreeMap<String, Vec<Vec<Vec<f64>>>>,
}

impl MarkovLattice {
    pub fn family(&self, parent_label: &str) -> Option<&Vec<Vec<Vec<f64>>>> {
        self.transitions.get(parent_label).or_else(|| self.transitions.get(ANY_LABEL))
    }

    pub fn outcome_dim(&self) -> usize {
        self.positions.first().and_then(|p| p.first()).map_or(0, |n| n.outcome.len())
    }

    pub fn validate(&self, at: &str) -> Vec<Violation> {
        let mut v = Vec::new();
        if self.positions.first().map_or(true, |p| p.len() != 1) {
            v.push(Violation::new(format!("{at}.positions[0]"), "the initial position must hold exactly one node"));
        }
        let dim = self.outcome_dim();
        for (k, pos) in self.positions.iter().enumerate() {
            if pos.is_empty() {
                v.push(Violation::new(format!("{at}.positions[{k}]"), "empty node set"));
            }
            for (i, n) in pos.iter().enumerate() {
                if n.outcome.len() != dim {
                    v.push(Violation::new(format!("{at}.positions[{k}][{i}]"), "outcome length differs"));
                }
            }
        }
        if self.transitions.is_empty() && self.positions.len() > 1 {
            v.push(Violation::new(format!("{at}.transitions"), "no transition family"));
        }
        for (label, fam) in &self.transitions {
            if fam.len() + 1 != self.positions.len() {
                v.push(Violation::new(
                    format!("{at}.transitions.{label}"),
                    format!("expected {} matrices, found {}", self.positions.len().saturating_sub(1), fam.len()),
                ));
                continue;
            }
            for (k, m) in fam.iter().enumerate() {
                let (r, c) = (self.positions[k].len(), self.positions[k + 1].len());
                if m.len() != r {
                    v.push(Violation::new(format!("{at}.transitions.{label}[{k}]"), format!("expected {r} rows, found {}", m.len())));
                    continue;
                }
                for (i, row) in m.iter().enumerate() {
                    let here = format!("{at}.transitions.{label}[{k}][{i}]");
                    if row.len() != c {
                        v.push(Violation::new(here, format!("expected {c} columns, found {}", row.len())));
                        continue;
                    }
                    if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                        v.push(Violation::new(&here, "entries must be probabilities"));
                    }
                    let s: f64 = row.iter().sum();
                    if (s - 1.0).abs() > PROB_TOL {
                        v.push(Violation::new(here, format!("row sums to {s}")));
                    }
                }
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseOutcome {
    pub outcome: Vec<f64>,
    pub prob: f64,
    pub label: String,
}

/// Independent draws at every tick of the level, conditioned on the
/// realized label of the parent tick (falling back to `"*"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalNoise {
    pub table: BTreeMap<String, Vec<NoiseOutcome>>,
}

impl ConditionalNoise {
    pub fn unconditional(outcomes: Vec<(Vec<f64>, f64)>) -> Self {
        let dist = outcomes
            .into_iter()
            .enumerate()
            .map(|(i, (outcome, prob))| NoiseOutcome { outcome, prob, label: i.to_string() })
            .collect();
        ConditionalNoise { table: BTreeMap::from([(ANY_LABEL.to_string(), dist)]) }
    }

    pub fn dist(&self, parent_label: &str) -> Option<&Vec<NoiseOutcome>> {
        self.table.get(parent_label).or_else(|| self.table.get(ANY_LABEL))
    }

    pub fn outcome_dim(&self) -> usize {
        self.table.values().next().and_then(|d| d.first()).map_or(0, |o| o.outcome.len())
    }

    pub fn validate(&self, at: &str) -> Vec<Violation> {
        let mut v = Vec::new();
        if self.table.is_empty() {
            v.push(Violation::new(at, "empty noise table"));
        }
        let dim = self.outcome_dim();
        for (label, dist) in &self.table {
            let here = format!("{at}.{label}");
            if dist.is_empty() {
                v.push(Violation::new(&here, "empty distribution"));
            }
            if dist.iter().any(|o| !(o.prob.is_finite() && o.prob >= 0.0)) {
                v.push(Violation::new(&here, "entries must be probabilities"));
            }
            if dist.iter().any(|o| o.outcome.len() != dim) {
                v.push(Violation::new(&here, "outcome length differs"));
            }
            let s: f64 = dist.iter().map(|o| o.prob).sum();
            if (s - 1.0).abs() > PROB_TOL {
                v.push(Violation::new(here, format!("probabilities sum to {s}")));
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LevelUncertainty {
    Deterministic,
    Lattice(MarkovLattice),
    Noise(ConditionalNoise),
}

impl LevelUncertainty {
    pub fn outcome_dim(&self) -> usize {
        match self {
            LevelUncertainty::Deterministic => 0,
            LevelUncertainty::Lattice(l) => l.outcome_dim(),
            LevelUncertainty::Noise(n) => n.outcome_dim(),
        }
    }
}

/// Whether the outcome at a tick is known before the decision at that tick
/// is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Hazard {
    #[default]
    HazardDecision,
    DecisionHazard,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticSpec {
    pub tree: ScenarioTree,
    /// Uncertainty of levels 2, 3, ... in order.
    pub fine: Vec<LevelUncertainty>,
    /// One flag per level.
    pub hazard: Vec<Hazard>,
    /// Level-1 tick indices at which a stochastic stage begins; all level-1
    /// outcomes of a stage are revealed at its first tick. `None` means
    /// every tick starts a stage.
    pub stage_starts: Option<Vec<usize>>,
}

impl StochasticSpec {
    pub fn deterministic(grid: &TimeGrid) -> Self {
        let levels = grid.num_levels();
        StochasticSpec {
            tree: ScenarioTree::chain(grid.horizon(), Vec::new()),
            fine: vec![LevelUncertainty::Deterministic; levels - 1],
            hazard: vec![Hazard::HazardDecision; levels],
            stage_starts: None,
        }
    }

    pub fn outcome_dim(&self, level: usize) -> usize {
        if level == 0 {
            self.tree.nodes.first().map_or(0, |n| n.outcome.len())
        } else {
            self.fine[level - 1].outcome_dim()
        }
    }

    /// Level-1 tick at which the outcome drawn at level-1 tick `d` becomes
    /// known: the first stage start at or after `d`. Decisions inside a stage
    /// see only what was known when it started. `None` when no stage starts
    /// after `d`.
    pub fn reveal_index(&self, d: usize) -> Option<usize> {
        match &self.stage_starts {
            None => Some(d),
            Some(s) => s.iter().copied().filter(|&b| b >= d).min(),
        }
    }

    pub fn stage_length_one(&self) -> bool {
        match &self.stage_starts {
            None => true,
            Some(s) => {
                let mut s = s.clone();
                s.sort_unstable();
                s.dedup();
                s.iter().enumerate().all(|(i, &b)| i == b)
            }
        }
    }

    pub fn all_hazard_decision(&self) -> bool {
        self.hazard.iter().all(|h| *h == Hazard::HazardDecision)
    }

    /// Checks probabilities and shapes, and that the structure fits `grid`.
    pub fn validate(&self, grid: &TimeGrid) -> Vec<Violation> {
        let mut v: Vec<Violation> = self.tree.validate().into_iter().map(|x| Violation::new(format!("stochastics.{}", x.at), x.msg)).collect();
        let levels = grid.num_levels();
        if self.fine.len() + 1 != levels {
            v.push(Violation::new(
                "stochastics.levels",
                format!("{} fine levels given for a {levels}-level grid", self.fine.len()),
            ));
        }
        if self.hazard.len() != levels {
            v.push(Violation::new("stochastics.hazard", format!("expected {levels} flags, found {}", self.hazard.len())));
        }
        if v.is_empty() {
            for leaf in self.tree.leaves() {
                let d = self.tree.depth(leaf);
                if d + 1 != grid.horizon() {
                    v.push(Violation::new(
                        format!("stochastics.tree.nodes[{leaf}]"),
                        format!("leaf at depth {d}, expected {} (one node per level-1 tick)", grid.horizon() - 1),
                    ));
                }
            }
        }
        if let Some(s) = &self.stage_starts {
            if !s.contains(&0) {
                v.push(Violation::new("stochastics.stage_starts", "must include tick 0"));
            }
            if s.iter().any(|&b| b >= grid.horizon()) {
                v.push(Violation::new("stochastics.stage_starts", "entry beyond the horizon"));
            }
        }
        for (k, f) in self.fine.iter().enumerate() {
            let at = format!("stochastics.level{}", k + 2);
            match f {
                LevelUncertainty::Deterministic => {}
                LevelUncertainty::Lattice(l) => {
                    v.extend(l.validate(&at));
                    if k + 1 < levels {
                        let longest = (0..grid.level_len(k))
                            .map(|p| grid.children_ids(TickId { level: k, index: p }).len())
                            .max()
                            .unwrap_or(0);
                        if longest > l.positions.len() {
                            v.push(Violation::new(
                                format!("{at}.positions"),
                                format!("{} positions cannot cover a segment of {longest} ticks", l.positions.len()),
                            ));
                        }
                    }
                }
                LevelUncertainty::Noise(n) => v.extend(n.validate(&at)),
            }
        }
        v
    }
}

/// Fast trees hung from the edges of a slow tree.
#[derive(Debug, Clone)]
pub struct MultihorizonTree {
    pub slow: ScenarioTree,
    pub fast: Vec<((usize, usize), ScenarioTree)>,
}

impl MultihorizonTree {
    pub fn node_count(&self) -> usize {
        self.slow.len() + self.fast.iter().map(|(_, t)| t.len()).sum::<usize>()
    }
}

/// Attaches `fast(edge)` to every slow edge `(parent, child)`.
pub fn compose_multihorizon(
    slow: &ScenarioTree,
    fast: impl Fn((usize, usize)) -> Option<ScenarioTree>,
) -> Result<MultihorizonTree> {
    let mut out = Vec::new();
    for e in slow.edges() {
        match fast(e) {
            Some(t) => out.push((e, t)),
            None => return Err(Error::Parse(format!("no fast tree for slow edge {e:?}"))),
        }
    }
    Ok(MultihorizonTree { slow: slow.clone(), fast: out })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_leaf(p: f64, q: f64) -> ScenarioTree {
        ScenarioTree {
            nodes: vec![
                TreeNode { parent: None, prob: 1.0, outcome: vec![0.0], label: "r".into() },
                TreeNode { parent: Some(0), prob: p, outcome: vec![1.0], label: "a".into() },
                TreeNode { parent: Some(0), prob: q, outcome: vec![2.0], label: "b".into() },
            ],
        }
    }

    #[test]
    fn probability_sums_are_checked() {
        assert!(two_leaf(0.5, 0.5).validate().is_empty());
        let bad = two_leaf(0.6, 0.5).validate();
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].at, "tree.root");
    }

    #[test]
    fn lattice_row_sum_is_checked() {
        let node = |l: &str| LatticeNode { outcome: vec![0.0], label: l.into() };
        let lat = MarkovLattice {
            positions: vec![vec![node("0")], vec![node("a"), node("b"), node("c")]],
            transitions: BTreeMap::from([("*".to_string(), vec![vec![vec![0.3, 0.3, 0.3]]])]),
        };
        let v = lat.validate("lat");
        assert_eq!(v.len(), 1);
        assert!(v[0].msg.contains("sums to"));
    }

    #[test]
    fn scenario_paths_examples() {
        let p = two_leaf(0.4, 0.6).scenario_paths().unwrap();
        assert_eq!(p.len(), 2);
        assert!((p[0].1 - 0.4).abs() < 1e-15 && (p[1].1 - 0.6).abs() < 1e-15);

        let chain = ScenarioTree::chain(3, vec![1.0]).scenario_paths().unwrap();
        assert_eq!(chain.len(), 1);
        assert_eq!(chain[0].1, 1.0);
        assert_eq!(chain[0].0.len(), 3);

        let quad = ScenarioTree::uniform(2, 2).scenario_paths().unwrap();
        assert_eq!(quad.len(), 4);
        assert!(quad.iter().all(|(_, p)| (p - 0.25).abs() < 1e-15));

        assert!(matches!(ScenarioTree { nodes: vec![] }.scenario_paths(), Err(Error::EmptyTree)));
    }

    #[test]
    fn composition_counts() {
        let slow = ScenarioTree::uniform(2, 1);
        let m = compose_multihorizon(&slow, |_| Some(ScenarioTree::uniform(2, 2))).unwrap();
        assert_eq!(m.node_count(), 17);

        let chain = ScenarioTree::chain(2, vec![]);
        let m = compose_multihorizon(&chain, |_| Some(ScenarioTree::chain(1, vec![]))).unwrap();
        assert_eq!(m.node_count(), 3);

        assert!(compose_multihorizon(&slow, |e| (e.1 == 1).then(|| ScenarioTree::chain(1, vec![]))).is_err());
    }

    #[test]
    fn stage_start_lookup() {
        let g = TimeGrid::uniform(8, &[]).unwrap();
        let mut s = StochasticSpec::deterministic(&g);
        s.stage_starts = Some(vec![0, 4]);
        assert_eq!(s.reveal_index(0), Some(0));
        assert_eq!(s.reveal_index(3), Some(4));
        assert_eq!(s.reveal_index(5), None);
        assert!(!s.stage_length_one());
        s.stage_starts = None;
        assert_eq!(s.reveal_index(5), Some(5));
        assert!(s.stage_length_one());
    }
}
