//! Best-first branch-and-bound over LP relaxations.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::form::StandardForm;
use crate::simplex::{solve_lp_with_bounds, LpOptions, LpStatus};
use crate::INT_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MilpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Node limit reached; `incumbent` (if any) and `best_bound` are valid.
    NodeLimit,
    /// An LP relaxation failed numerically.
    Failed,
}

#[derive(Debug, Clone)]
pub struct MilpOptions {
    /// Absolute optimality gap at which the search stops.
    pub gap_tol: f64,
    pub node_limit: usize,
    pub lp: LpOptions,
}

impl Default for MilpOptions {
    fn default() -> Self {
        MilpOptions { gap_tol: 1e-9, node_limit: 1_000_000, lp: LpOptions::default() }
    }
}

#[derive(Debug, Clone)]
pub struct MilpResult {
    pub status: MilpStatus,
    pub objective: f64,
    pub x: Vec<f64>,
    pub best_bound: f64,
    pub nodes: usize,
    /// Pivot trace of the root relaxation when `lp.trace` is set.
    pub root_trace: Vec<String>,
}

impl MilpResult {
    pub fn gap(&self) -> f64 {
        self.objective - self.best_bound
    }

    pub fn has_solution(&self) -> bool {
        matches!(self.status, MilpStatus::Optimal) || (self.status == MilpStatus::NodeLimit && self.objective.is_finite())
    }
}

struct Node {
    bound: f64,
    seq: usize,
    lb: Vec<f64>,
    ub: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: the "greatest" node is the one with the
    // lowest bound, then the earliest sequence number.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.seq.cmp(&self.seq))
    }
}

fn most_fractional(sf: &StandardForm, x: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for j in 0..sf.num_vars() {
        if !sf.integer[j] {
            continue;
        }
        let f = x[j] - x[j].floor();
        let frac = f.min(1.0 - f);
        if frac > INT_TOL && best.map_or(true, |(_, b)| frac > b + 1e-12) {
            best = Some((j, frac));
        }
    }
    best.map(|(j, _)| j)
}

/// Solves `sf` to optimality (within `gap_tol`) by best-first branch-and-bound
/// on the most fractional variable. Ties: lowest variable index, FIFO nodes.
pub fn solve_milp(sf: &StandardForm, opts: &MilpOptions) -> MilpResult {
    let n = sf.num_vars();
    let mut result = MilpResult {
        status: MilpStatus::Infeasible,
        objective: f64::INFINITY,
        x: vec![0.0; n],
        best_bound: f64::INFINITY,
        nodes: 0,
        root_trace: Vec::new(),
    };
    let mut lb = sf.lb.clone();
    let mut ub = sf.ub.clone();
    for j in 0..n {
        if sf.integer[j] {
            lb[j] = (lb[j] - INT_TOL).ceil();
            ub[j] = (ub[j] + INT_TOL).floor();
        }
    }
    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;
    heap.push(Node { bound: f64::NEG_INFINITY, seq, lb, ub });
    let mut first = true;

    while let Some(node) = heap.pop() {
        if node.bound >= result.objective - opts.gap_tol {
            // best-first: every remaining node is at least as bad
            heap.push(node);
            break;
        }
        if result.nodes >= opts.node_limit {
            heap.push(node);
            result.status = MilpStatus::NodeLimit;
            break;
        }
        result.nodes += 1;
        let lp_opts = LpOptions { trace: first && opts.lp.trace, ..opts.lp.clone() };
        let lp = solve_lp_with_bounds(sf, &node.lb, &node.ub, &lp_opts);
        if first {
            result.root_trace = lp.trace.clone();
        }
        match lp.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => {
                first = false;
                continue;
            }
            LpStatus::Unbounded => {
                if first {
                    result.status = MilpStatus::Unbounded;
                    result.best_bound = f64::NEG_INFINITY;
                    result.objective = f64::NEG_INFINITY;
                    return result;
                }
                // bounded integer box below an unbounded root cannot happen
                result.status = MilpStatus::Failed;
                return result;
            }
            LpStatus::Failed => {
                result.status = MilpStatus::Failed;
                return result;
            }
        }
        first = false;
        let bound = lp.objective;
        if bound >= result.objective - opts.gap_tol {
            continue;
        }
        match most_fractional(sf, &lp.x) {
            None => {
                let mut x = lp.x;
                for j in 0..n {
                    if sf.integer[j] {
                        x[j] = x[j].round();
                    }
                }
                result.objective = sf.objective(&x);
                result.x = x;
                result.status = MilpStatus::Optimal;
            }
            Some(j) => {
                let v = lp.x[j];
                let mut down_ub = node.ub.clone();
                down_ub[j] = v.floor();
                let mut up_lb = node.lb.clone();
                up_lb[j] = v.ceil();
                seq += 1;
                heap.push(Node { bound, seq, lb: node.lb.clone(), ub: down_ub });
                seq += 1;
                heap.push(Node { bound, seq, lb: up_lb, ub: node.ub });
            }
        }
    }

    let open_bound = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    result.best_bound = open_bound.min(result.objective);
    if result.status == MilpStatus::NodeLimit {
        return result;
    }
    if result.objective.is_finite() {
        result.status = MilpStatus::Optimal;
    } else {
        result.status = MilpStatus::Infeasible;
        result.best_bound = f64::INFINITY;
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{solve_lp, Sense};

    #[test]
    fn knapsack_picks_heavier_item() {
        // max 3x1 + 2x2, 2x1 + x2 <= 2, binary
        let mut sf = StandardForm::new();
        sf.add_var(0.0, 1.0, true, -3.0, "x1");
        sf.add_var(0.0, 1.0, true, -2.0, "x2");
        sf.add_row(vec![(0, 2.0), (1, 1.0)], Sense::Le, 2.0, "cap");
        let r = solve_milp(&sf, &MilpOptions::default());
        assert_eq!(r.status, MilpStatus::Optimal);
        assert!((r.objective + 3.0).abs() < 1e-9);
        assert_eq!(r.x, vec![1.0, 0.0]);
        assert!(r.best_bound <= r.objective + 1e-12);
    }

    #[test]
    fn pure_lp_matches_simplex() {
        let mut sf = StandardForm::new();
        sf.add_var(0.0, 4.0, false, -1.0, "a");
        sf.add_var(0.0, 4.0, false, -1.5, "b");
        sf.add_row(vec![(0, 1.0), (1, 2.0)], Sense::Le, 5.0, "r");
        let a = solve_milp(&sf, &MilpOptions::default());
        let b = solve_lp(&sf, &LpOptions::default());
        assert!((a.objective - b.objective).abs() < 1e-12);
        assert_eq!(a.nodes, 1);
    }

    #[test]
    fn no_integer_in_fractional_window() {
        let mut sf = StandardForm::new();
        sf.add_var(0.3, 0.7, true, 1.0, "x");
        assert_eq!(solve_milp(&sf, &MilpOptions::default()).status, MilpStatus::Infeasible);
    }

    #[test]
    fn node_limit_keeps_valid_bound() {
        let mut sf = StandardForm::new();
        for j in 0..6 {
            sf.add_var(0.0, 1.0, true, -((j + 2) as f64), format!("x{j}"));
        }
        sf.add_row((0..6).map(|j| (j, (j + 1) as f64 + 0.5)).collect(), Sense::Le, 7.3, "cap");
        let full = solve_milp(&sf, &MilpOptions::default());
        let capped = solve_milp(&sf, &MilpOptions { node_limit: 2, ..Default::default() });
        assert_eq!(capped.status, MilpStatus::NodeLimit);
        assert!(capped.best_bound <= full.objective + 1e-9);
    }
}
