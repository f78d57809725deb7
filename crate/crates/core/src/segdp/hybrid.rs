//! Slow level as a scenario MILP, level 2 and below as value tables.
//!
//! For every (level-1 tick, information class) the segment value depends on
//! the start state, the goal and the aggregate passed down, all of which
//! take finitely many grid values. One binary per admissible combination
//! selects exactly one of them, and its precomputed value enters the
//! objective weighted by the class probability.

use std::collections::HashMap;
use std::rc::Rc;

use mts_milp::{solve_milp, MilpOptions, MilpStatus, Sense, StandardForm};

use super::{bits, Dp, SegmentTable, StateGrid, DEFAULT_DP_BUDGET};
use crate::error::{Error, Result};
use crate::instantiate::{check_sync_supported, emit_level1, FormSink, Level1Layout, Lin, Sink};
use crate::model::MtsProblem;
use crate::timegrid::TickId;

#[derive(Debug, Clone)]
pub struct HybridOptions {
    pub dp_budget: usize,
    /// Maximum number of selection binaries.
    pub selection_budget: usize,
    pub milp: MilpOptions,
}

impl Default for HybridOptions {
    fn default() -> Self {
        HybridOptions { dp_budget: DEFAULT_DP_BUDGET, selection_budget: 200_000, milp: MilpOptions::default() }
    }
}

#[derive(Debug, Clone)]
pub struct HybridResult {
    pub status: MilpStatus,
    pub objective: f64,
    pub sf: StandardForm,
    /// MILP solution (empty when none was found).
    pub x: Vec<f64>,
    pub level1: Level1Layout,
    pub selections: usize,
    pub segment_tables: usize,
}

impl HybridResult {
    /// Level-1 control of level-1 scenario `s` at level-1 tick `d`.
    pub fn control(&self, p: &MtsProblem, d: usize, s: usize) -> Vec<f64> {
        let u = self.level1.u[d][s];
        (0..p.nu(0)).map(|i| self.x[u + i]).collect()
    }
}

fn dedup(points: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for p in points {
        if !out.iter().any(|q| q.iter().zip(&p).all(|(a, b)| (a - b).abs() <= 1e-9)) {
            out.push(p);
        }
    }
    out
}

pub fn hybrid_solve(p: &MtsProblem, grids: &StateGrid, opts: &HybridOptions) -> Result<HybridResult> {
    check_sync_supported(p)?;
    let mut dp = Dp::new(p, grids, opts.dp_budget)?;
    let mut sink = FormSink::new(false);
    let l1 = emit_level1(p, &mut sink, true)?;
    let mut selections = 0usize;
    let mut cache: HashMap<(usize, Option<usize>, Vec<u64>, String), Rc<SegmentTable>> = HashMap::new();
    if p.num_levels() > 1 {
        let tree = &p.stoch.tree;
        let tpl1 = &p.levels[0].template;
        let g1 = &grids.levels[0];
        let g2 = &grids.levels[1];
        let nx2 = p.nx(1);
        let terminal2 = p.levels[1].terminal;
        let s0 = grids.index_of(1, &p.levels[1].x0)?;
        for d in 0..p.grid.horizon() {
            let id = TickId { level: 0, index: d };
            for (c, members) in l1.classes[d].1.iter().enumerate() {
                let rep = members[0];
                let node = &tree.nodes[l1.paths[rep][d]];
                let weight = l1.class_prob(d, c);
                let ys = dedup(g1.iter().map(|x| tpl1.aggregate(x, &[], &node.outcome)).collect::<Result<_>>()?);
                let start_var = if d > 0 { l1.z[d - 1][rep] } else { None };
                let goal_var = l1.z[d][rep];
                let starts: Vec<usize> = if start_var.is_some() { (0..g2.len()).collect() } else { vec![s0] };
                let goals: Vec<Option<usize>> = if goal_var.is_some() { (0..g2.len()).map(Some).collect() } else { vec![None] };
                let mut sum = Lin::default();
                let mut start_link: Vec<Lin> = (0..nx2).map(|_| Lin::default()).collect();
                let mut goal_link: Vec<Lin> = (0..nx2).map(|_| Lin::default()).collect();
                let mut y_link: Vec<Lin> = (0..p.ny_in(1)).map(|_| Lin::default()).collect();
                for y in &ys {
                    for &g in &goals {
                        let key = (d, g, bits(y).collect::<Vec<_>>(), node.label.clone());
                        let table = match cache.get(&key) {
                            Some(t) => t.clone(),
                            None => {
                                let t = Rc::new(dp.segment(1, Some(id), g.map(|g| g2[g].as_slice()), terminal2, y, &node.label)?);
                                cache.insert(key, t.clone());
                                t
                            }
                        };
                        for &si in &starts {
                            let v = table.value_at(si);
                            if !v.is_finite() {
                                continue;
                            }
                            selections += 1;
                            if selections > opts.selection_budget {
                                return Err(Error::Budget {
                                    what: "hybrid selection variables".into(),
                                    count: selections as u128,
                                    limit: opts.selection_budget as u128,
                                });
                            }
                            let lam = sink.var(0.0, 1.0, true, weight * v, &|| format!("sel({d})c{c}y{y:?}g{g:?}s{si}"));
                            sum.add(lam, 1.0);
                            for i in 0..nx2 {
                                start_link[i].add(lam, g2[si][i]);
                                if let Some(g) = g {
                                    goal_link[i].add(lam, g2[g][i]);
                                }
                            }
                            for (i, yv) in y.iter().enumerate() {
                                y_link[i].add(lam, *yv);
                            }
                        }
                    }
                }
                let tag = format!("({d})c{c}");
                sink.row(sum, Sense::Eq, 1.0, &|| format!("pick{tag}"));
                for i in 0..nx2 {
                    if let Some(zb) = start_var {
                        let mut l = std::mem::take(&mut start_link[i]);
                        l.add(zb + i, -1.0);
                        sink.row(l, Sense::Eq, 0.0, &|| format!("start{i}{tag}"));
                    }
                    if let Some(zb) = goal_var {
                        let mut l = std::mem::take(&mut goal_link[i]);
                        l.add(zb + i, -1.0);
                        sink.row(l, Sense::Eq, 0.0, &|| format!("goal{i}{tag}"));
                    }
                }
                for (i, mut l) in y_link.into_iter().enumerate() {
                    l.add_lin(&l1.y[d][rep][i], -1.0);
                    sink.row(l, Sense::Eq, 0.0, &|| format!("agg{i}{tag}"));
                }
            }
        }
    }
    let sf = sink.sf;
    let r = solve_milp(&sf, &opts.milp);
    Ok(HybridResult {
        status: r.status,
        objective: r.objective,
        x: if r.has_solution() { r.x } else { Vec::new() },
        sf,
        level1: l1,
        selections,
        segment_tables: cache.len(),
    })
}
