//! Small hand-built instances with integer data, so that optimal solutions
//! lie on the integer control grid and every solver can be cross-checked
//! against brute force.

use std::collections::BTreeMap;

use mts_milp::Sense;

use crate::model::{Affine, LevelModel, LinRow, MtsProblem, StageTemplate, Term, Terminal};
use crate::stochastic::{
    ConditionalNoise, Hazard, LatticeNode, LevelUncertainty, MarkovLattice, ScenarioTree, StochasticSpec, TreeNode, ANY_LABEL,
};
use crate::timegrid::{Interpretation, TimeGrid};

use Term::{U, W, X, Y};

fn ints(n: usize) -> Vec<bool> {
    vec![true; n]
}

/// One product, stock carried over, demand drawn from the tree.
/// Buying costs 1 at the first tick and 3 later, so the optimum stocks up
/// early as long as it does not overshoot storage.
pub fn inventory() -> MtsProblem {
    let grid = TimeGrid::uniform(3, &[]).unwrap();
    let tree = ScenarioTree {
        nodes: vec![
            TreeNode { parent: None, prob: 1.0, outcome: vec![1.0], label: "0".into() },
            TreeNode { parent: Some(0), prob: 0.5, outcome: vec![0.0], label: "low".into() },
            TreeNode { parent: Some(0), prob: 0.5, outcome: vec![2.0], label: "high".into() },
            TreeNode { parent: Some(1), prob: 1.0, outcome: vec![1.0], label: "low".into() },
            TreeNode { parent: Some(2), prob: 1.0, outcome: vec![2.0], label: "high".into() },
        ],
    };
    let tpl = StageTemplate {
        x_lb: vec![0.0],
        x_ub: vec![3.0],
        x_int: ints(1),
        u_lb: vec![0.0],
        u_ub: vec![2.0],
        u_int: ints(1),
        c: vec![0.5],
        d: vec![3.0],
        dynamics: vec![Affine::new([(X(0), 1.0), (U(0), 1.0), (W(0), -1.0)], 0.0)],
        rows: vec![LinRow::new("serve", [(X(0), 1.0), (U(0), 1.0), (W(0), -1.0)], Sense::Ge, 0.0)],
        ..Default::default()
    };
    let mut lm = LevelModel::new(tpl, vec![0.0]);
    lm.overrides.insert("(0)".parse().unwrap(), crate::model::TickOverride { d: Some(vec![1.0]), ..Default::default() });
    MtsProblem {
        name: "inventory".into(),
        stoch: StochasticSpec { tree, fine: vec![], hazard: vec![Hazard::HazardDecision], stage_starts: None },
        grid,
        levels: vec![lm],
        interpretation: Interpretation::Simultaneous,
    }
}

/// How uncertainty enters [`dispatch`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DispatchVariant {
    /// Supply shock on the slow timescale, fast demand known.
    SlowBranching,
    /// Fast demand moves within each segment, slow side known.
    FastLattice,
}

/// Two timescales: a slow contract position that supplies a constant amount
/// to every fast tick of its period, and a fast storage unit that can
/// discharge or recharge by one unit per tick to cover demand.
pub fn dispatch(variant: DispatchVariant) -> MtsProblem {
    let grid = TimeGrid::uniform(2, &[2]).unwrap();
    let tree = match variant {
        DispatchVariant::SlowBranching => {
            let mut t = ScenarioTree::uniform(2, 1);
            t.nodes[1].outcome = vec![0.0];
            t.nodes[2].outcome = vec![1.0];
            t
        }
        DispatchVariant::FastLattice => ScenarioTree::chain(2, vec![0.0]),
    };
    let fine = match variant {
        DispatchVariant::SlowBranching => LevelUncertainty::Noise(ConditionalNoise::unconditional(vec![(vec![1.0], 1.0)])),
        DispatchVariant::FastLattice => LevelUncertainty::Lattice(MarkovLattice {
            positions: vec![
                vec![LatticeNode { outcome: vec![1.0], label: "mid".into() }],
                vec![
                    LatticeNode { outcome: vec![0.0], label: "low".into() },
                    LatticeNode { outcome: vec![2.0], label: "high".into() },
                ],
            ],
            transitions: BTreeMap::from([(ANY_LABEL.to_string(), vec![vec![vec![0.5, 0.5]]])]),
        }),
    };
    let slow = StageTemplate {
        x_lb: vec![0.0],
        x_ub: vec![2.0],
        x_int: ints(1),
        u_lb: vec![0.0],
        u_ub: vec![2.0],
        u_int: ints(1),
        c: vec![2.0],
        d: vec![0.0],
        dynamics: vec![Affine::new([(U(0), 1.0)], 0.0)],
        aggregation: Some(vec![Affine::new([(X(0), 1.0), (W(0), 1.0)], 0.0)]),
        ..Default::default()
    };
    let fast = StageTemplate {
        x_lb: vec![0.0],
        x_ub: vec![2.0],
        x_int: ints(1),
        u_lb: vec![-1.0],
        u_ub: vec![1.0],
        u_int: ints(1),
        // stored energy is credited at every tick
        c: vec![-0.5],
        d: vec![0.0],
        dynamics: vec![Affine::new([(X(0), 1.0), (U(0), -1.0)], 0.0)],
        rows: vec![
            LinRow::new("balance", [(Y(0), 1.0), (U(0), 1.0), (W(0), -1.0)], Sense::Ge, 0.0),
            LinRow::new("stored", [(X(0), 1.0), (U(0), -1.0)], Sense::Ge, 0.0),
        ],
        ..Default::default()
    };
    let name = match variant {
        DispatchVariant::SlowBranching => "dispatch_slow_branching",
        DispatchVariant::FastLattice => "dispatch_fast_lattice",
    };
    MtsProblem {
        name: name.into(),
        stoch: StochasticSpec { tree, fine: vec![fine], hazard: vec![Hazard::HazardDecision; 2], stage_starts: None },
        grid,
        levels: vec![LevelModel::new(slow, vec![1.0]), LevelModel::new(fast, vec![1.0])],
        interpretation: Interpretation::Simultaneous,
    }
}

/// A fast state pushed by ±2 while controls move it by at most 1: no
/// single goal state is reachable from both outcomes, so the synchronized
/// formulation is infeasible while the full problem is not.
pub fn unreachable_goal() -> MtsProblem {
    let grid = TimeGrid::uniform(2, &[1]).unwrap();
    let slow = StageTemplate {
        aggregation: Some(vec![]),
        ..Default::default()
    };
    let fast = StageTemplate {
        x_lb: vec![0.0],
        x_ub: vec![6.0],
        x_int: ints(1),
        u_lb: vec![-1.0],
        u_ub: vec![1.0],
        u_int: ints(1),
        c: vec![0.0],
        d: vec![1.0],
        dynamics: vec![Affine::new([(X(0), 1.0), (U(0), 1.0), (W(0), 1.0)], 0.0)],
        ..Default::default()
    };
    let mut lm = LevelModel::new(fast, vec![3.0]);
    lm.terminal = Terminal::Hard;
    MtsProblem {
        name: "unreachable_goal".into(),
        stoch: StochasticSpec {
            tree: ScenarioTree::chain(2, vec![]),
            fine: vec![LevelUncertainty::Noise(ConditionalNoise::unconditional(vec![(vec![-2.0], 0.5), (vec![2.0], 0.5)]))],
            hazard: vec![Hazard::HazardDecision; 2],
            stage_starts: None,
        },
        grid,
        levels: vec![LevelModel::new(slow, vec![]), lm],
        interpretation: Interpretation::Simultaneous,
    }
}

/// A slow outcome `ω ∈ {0, 2}` drawn at the second slow tick under
/// decision-hazard timing, passed down as the aggregate; the fast tick
/// starting at the same instant pays `|u - ω|`. Ordering coinciding ticks
/// by start time hides `ω` from that decision (expected cost 1); ordering
/// them parent-first reveals it (cost 0).
pub fn coinciding_reveal(interpretation: Interpretation) -> MtsProblem {
    let grid = TimeGrid::uniform(2, &[1]).unwrap();
    let tree = ScenarioTree {
        nodes: vec![
            TreeNode { parent: None, prob: 1.0, outcome: vec![0.0], label: "0".into() },
            TreeNode { parent: Some(0), prob: 0.5, outcome: vec![0.0], label: "a".into() },
            TreeNode { parent: Some(0), prob: 0.5, outcome: vec![2.0], label: "b".into() },
        ],
    };
    let slow = StageTemplate {
        aggregation: Some(vec![Affine::new([(W(0), 1.0)], 0.0)]),
        ..Default::default()
    };
    // controls: guess, absolute miss
    let fast = StageTemplate {
        u_lb: vec![0.0, 0.0],
        u_ub: vec![2.0, 2.0],
        u_int: ints(2),
        d: vec![0.0, 1.0],
        rows: vec![
            LinRow::new("miss_above", [(U(1), 1.0), (U(0), -1.0), (Y(0), 1.0)], Sense::Ge, 0.0),
            LinRow::new("miss_below", [(U(1), 1.0), (U(0), 1.0), (Y(0), -1.0)], Sense::Ge, 0.0),
        ],
        ..Default::default()
    };
    MtsProblem {
        name: format!("coinciding_reveal_{}", interpretation.number()),
        stoch: StochasticSpec {
            tree,
            fine: vec![LevelUncertainty::Deterministic],
            hazard: vec![Hazard::DecisionHazard, Hazard::HazardDecision],
            stage_starts: None,
        },
        grid,
        levels: vec![LevelModel::new(slow, vec![]), LevelModel::new(fast, vec![])],
        interpretation,
    }
}

/// The small instances used for cross-checking solvers.
pub fn golden_set() -> Vec<MtsProblem> {
    vec![
        inventory(),
        dispatch(DispatchVariant::SlowBranching),
        dispatch(DispatchVariant::FastLattice),
        unreachable_goal(),
        coinciding_reveal(Interpretation::Simultaneous),
        coinciding_reveal(Interpretation::Sequential),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_instances_validate() {
        for p in golden_set() {
            assert!(p.validate().is_empty(), "{}: {:?}", p.name, p.validate());
        }
    }
}
