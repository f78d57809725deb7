//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mts_cli::{configure, solve, Instance, Outcome, SolveArgs, SolveMode};
use mts_core::instantiate::{build_full_equivalent, build_synchronized, count_nodes, BuildOptions, Mode};
use mts_core::model::{LevelModel, MtsProblem, StageTemplate, Terminal};
use mts_core::oracle::{enumerate, OracleGrid, OracleOptions, Trajectory};
use mts_core::scenario::is_visible;
use mts_core::segdp::{bellman_check, expected_rollout, Dp, StateGrid, DEFAULT_DP_BUDGET};
use mts_core::stochastic::{ConditionalNoise, Hazard, LevelUncertainty, ScenarioTree, StochasticSpec};
use mts_core::timegrid::{Branching, Interpretation, TickId, TimeGrid};
use mts_core::ucdemo::{self, DaBranch, DaTree, RtOutcome};
use mts_milp::{solve_lp, solve_milp, LpOptions, LpStatus, MilpOptions, MilpStatus, Sense, StandardForm};

type Check = Result<String, String>;

fn instances_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../instances")
}

fn load(name: &str) -> Instance {
    mts_cli::load_path(&instances_dir().join(format!("{name}.toml"))).unwrap_or_else(|c| panic!("{name}: exit code {c}"))
}

const GOLDEN: [&str; 6] = [
    "inventory",
    "dispatch_slow_branching",
    "dispatch_fast_lattice",
    "unreachable_goal",
    "coinciding_reveal_1",
    "coinciding_reveal_2",
];

fn run(inst: &Instance, mode: SolveMode, terminal: Option<String>) -> Result<Outcome, String> {
    let mut inst = inst.clone();
    let s = configure(&mut inst, &SolveArgs { mode, terminal, ..Default::default() }).map_err(|e| e.to_string())?;
    solve(&inst, &s).map_err(|e| format!("{}: {e}", inst.problem.name))
}

fn same(a: f64, b: f64, tol: f64) -> bool {
    (a.is_infinite() && b.is_infinite() && a.signum() == b.signum()) || (a - b).abs() <= tol
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn full_solution(p: &MtsProblem) -> (f64, Option<Trajectory>) {
    let b = build_full_equivalent(p, &BuildOptions::default()).expect("full build");
    let r = solve_milp(&b.sf, &MilpOptions::default());
    let t = r.has_solution().then(|| b.layout.trajectory(p, &r.x));
    (r.objective, t)
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut checked = 0;
    for name in GOLDEN {
        let p = load(name).problem;
        ensure(p.num_levels() <= 2, || format!("{name}: more than two levels"))?;
        let (full, _) = full_solution(&p);
        let grid = OracleGrid::from_bounds(&p, 1.0).map_err(|e| e.to_string())?;
        let o = enumerate(&p, &grid, &OracleOptions { mode: Mode::Full, ..Default::default() }).map_err(|e| format!("{name}: {e}"))?;
        ensure(same(full, o.objective, 1e-6), || format!("{name}: full MILP {full} vs oracle {}", o.objective))?;
        checked += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(checked >= 5, || format!("only {checked} instances"))?;
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("{checked} instances agree within 1e-6 in {secs:.2} s"))
}

fn criterion_2() -> Check {
    let mut feasible = 0;
    let mut max_gap = 0.0f64;
    let mut warned = Vec::new();
    for name in GOLDEN.iter().copied().chain(["uc_tiny"]) {
        let inst = load(name);
        let full = run(&inst, SolveMode::Full, None)?;
        let sync = match run(&inst, SolveMode::Sync, None) {
            Ok(o) => o,
            Err(e) if e.contains("unsupported") => continue,
            Err(e) => return Err(e),
        };
        if sync.status == "Infeasible" {
            ensure(sync.notes.iter().any(|(k, _)| k == "warning"), || format!("{name}: infeasible without a warning"))?;
            warned.push(name);
            continue;
        }
        ensure(sync.objective >= full.objective - 1e-9, || format!("{name}: sync {} below full {}", sync.objective, full.objective))?;
        feasible += 1;
        max_gap = max_gap.max(sync.objective - full.objective);
    }
    ensure(max_gap > 1e-9, || "no instance shows a positive gap".into())?;
    ensure(!warned.is_empty(), || "no infeasible synchronized instance".into())?;
    Ok(format!("sync >= full on {feasible} feasible instances, largest gap {max_gap}, infeasibility reported on {warned:?}"))
}

fn criterion_3() -> Check {
    let inst = load("uc_tiny");
    let sync = run(&inst, SolveMode::Sync, None)?;
    let hybrid = run(&inst, SolveMode::Hybrid, None)?;
    ensure(sync.status == "Optimal" && hybrid.status == "Optimal", || format!("statuses {} / {}", sync.status, hybrid.status))?;
    ensure(same(sync.objective, hybrid.objective, 1e-6), || format!("hybrid {} vs sync {}", hybrid.objective, sync.objective))?;
    Ok(format!("hybrid {} = synchronized MILP {}", hybrid.objective, sync.objective))
}

/// Count-only problem: every level stateless with one bounded control.
fn counting_problem(horizon: u32, branches: usize, children: &[Branching], outcomes: &[usize]) -> MtsProblem {
    let grid = TimeGrid::new(horizon, children, None).unwrap();
    let levels = grid.num_levels();
    let tree = ScenarioTree::uniform(branches, horizon as usize - 1);
    let fine = outcomes
        .iter()
        .map(|&k| LevelUncertainty::Noise(ConditionalNoise::unconditional((0..k).map(|i| (vec![i as f64], 1.0 / k as f64)).collect())))
        .collect();
    let lm = |last: bool| {
        LevelModel::new(
            StageTemplate {
                u_lb: vec![0.0],
                u_ub: vec![1.0],
                u_int: vec![true],
                d: vec![1.0],
                aggregation: (!last).then(Vec::new),
                ..Default::default()
            },
            vec![],
        )
    };
    MtsProblem {
        name: "count".into(),
        stoch: StochasticSpec { tree, fine, hazard: vec![Hazard::HazardDecision; levels], stage_starts: None },
        grid,
        levels: (0..levels).map(|j| lm(j + 1 == levels)).collect(),
        interpretation: Interpretation::Simultaneous,
    }
}

/// Child counts of every tick on each level, from the branching spec alone.
fn child_counts(horizon: usize, children: &[Branching]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut parents = horizon;
    for br in children {
        let counts: Vec<usize> = match br {
            Branching::Uniform(c) => vec![*c as usize; parents],
            Branching::PerParent(v) => v.iter().map(|&c| c as usize).collect(),
        };
        parents = counts.iter().sum();
        out.push(counts);
    }
    out
}

/// Expanded-tree nodes per level: walk ticks chronologically, multiplying
/// by the branching of each tick.
fn independent_full(horizon: usize, branches: usize, children: &[Branching], outcomes: &[usize]) -> Vec<usize> {
    let counts = child_counts(horizon, children);
    let levels = children.len() + 1;
    let mut per = vec![0usize; levels];
    let mut next_index = vec![0usize; levels];
    fn walk(level: usize, idx: usize, mult: usize, counts: &[Vec<usize>], outcomes: &[usize], next_index: &mut [usize], per: &mut [usize]) -> usize {
        per[level] += mult;
        let mut m = mult;
        if level < counts.len() {
            for _ in 0..counts[level][idx] {
                let child = next_index[level + 1];
                next_index[level + 1] += 1;
                m = walk(level + 1, child, m * outcomes[level], counts, outcomes, next_index, per);
            }
        }
        m
    }
    let mut mult = 1;
    for d in 0..horizon {
        if d > 0 {
            mult *= branches;
        }
        mult = walk(0, d, mult, &counts, outcomes, &mut next_index, &mut per);
    }
    per
}

/// Multi-horizon nodes per level: slow tree nodes, then one fast tree per
/// owner node, whose k-th tick carries `outcomes^k` nodes.
fn independent_sync(horizon: usize, branches: usize, children: &[Branching], outcomes: &[usize]) -> Vec<usize> {
    let counts = child_counts(horizon, children);
    let mut at_tick: Vec<usize> = (0..horizon).map(|d| branches.pow(d as u32)).collect();
    let mut per = vec![at_tick.iter().sum()];
    for (j, c) in counts.iter().enumerate() {
        let mut next = Vec::new();
        for (parent, &n) in c.iter().enumerate() {
            for k in 1..=n {
                next.push(at_tick[parent] * outcomes[j].pow(k as u32));
            }
        }
        per.push(next.iter().sum());
        at_tick = next;
    }
    per
}

fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let opts = BuildOptions::default();
    for case in 0..10 {
        let horizon = rng.gen_range(1..=3u32);
        let levels = rng.gen_range(2..=3usize);
        let branches = rng.gen_range(1..=2usize);
        let mut children = Vec::new();
        let mut parents = horizon as usize;
        for _ in 1..levels {
            let br = if rng.gen_bool(0.5) {
                Branching::Uniform(rng.gen_range(1..=3))
            } else {
                Branching::PerParent((0..parents).map(|_| rng.gen_range(1..=3)).collect())
            };
            parents = match &br {
                Branching::Uniform(c) => parents * *c as usize,
                Branching::PerParent(v) => v.iter().map(|&c| c as usize).sum(),
            };
            children.push(br);
        }
        let outcomes: Vec<usize> = (1..levels).map(|_| rng.gen_range(1..=2)).collect();
        let p = counting_problem(horizon, branches, &children, &outcomes);
        let full = count_nodes(&p, Mode::Full, &opts).map_err(|e| format!("case {case}: {e}"))?;
        let sync = count_nodes(&p, Mode::Synchronized, &opts).map_err(|e| format!("case {case}: {e}"))?;
        let ef = independent_full(horizon as usize, branches, &children, &outcomes);
        let es = independent_sync(horizon as usize, branches, &children, &outcomes);
        ensure(full.nodes_per_level == ef, || format!("case {case} full: {:?} vs {ef:?}", full.nodes_per_level))?;
        ensure(sync.nodes_per_level == es, || format!("case {case} sync: {:?} vs {es:?}", sync.nodes_per_level))?;
    }
    let mut ratios = Vec::new();
    for c in [2u32, 3, 4] {
        let p = counting_problem(2, 2, &[Branching::Uniform(c)], &[2]);
        let full = count_nodes(&p, Mode::Full, &opts).map_err(|e| e.to_string())?;
        let sync = count_nodes(&p, Mode::Synchronized, &opts).map_err(|e| e.to_string())?;
        ratios.push(sync.total_nodes() as f64 / full.total_nodes() as f64);
    }
    ensure(ratios.windows(2).all(|w| w[1] < w[0]), || format!("ratios {ratios:?} do not shrink"))?;
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    Ok(format!("10 random configurations match; sync/full ratio {}", shown.join(" > ")))
}

/// Largest spread of a decision among scenarios sharing all visible draws.
fn nac_deviation(p: &MtsProblem, t: &Trajectory) -> f64 {
    let ids = p.grid.linear_ids();
    let mut worst = 0.0f64;
    for (lin, &at) in ids.iter().enumerate() {
        let visible: Vec<usize> = (0..ids.len()).filter(|&l| is_visible(&p.grid, &p.stoch, p.interpretation, ids[l], at)).collect();
        let key = |s: usize| -> Vec<u32> { visible.iter().map(|&l| t.scenarios.scenarios[s].real[l].node).collect() };
        for a in 0..t.scenarios.len() {
            for b in a + 1..t.scenarios.len() {
                if key(a) == key(b) {
                    for (x, y) in t.u[lin][a].iter().zip(&t.u[lin][b]) {
                        worst = worst.max((x - y).abs());
                    }
                }
            }
        }
    }
    worst
}

fn criterion_5() -> Check {
    let mut worst = 0.0f64;
    let mut n = 0;
    for name in GOLDEN.iter().copied().chain(["uc_tiny"]) {
        let p = load(name).problem;
        if let (_, Some(t)) = full_solution(&p) {
            worst = worst.max(nac_deviation(&p, &t));
            n += 1;
        }
    }
    ensure(worst <= 1e-9, || format!("deviation {worst}"))?;
    let one = full_solution(&load("coinciding_reveal_1").problem).0;
    let two = full_solution(&load("coinciding_reveal_2").problem).0;
    ensure(two <= one + 1e-9, || format!("interpretation 2 gives {two}, above {one}"))?;
    Ok(format!("max deviation {worst:.1e} over {n} solutions; interpretation 1 -> 2: {one} -> {two}"))
}

fn criterion_6() -> Check {
    let rhos = [0.0, 0.25, 1.0, 4.0, 16.0, 100.0, 1e6];
    let mut n = 0;
    for name in ["dispatch_slow_branching", "dispatch_fast_lattice", "uc_tiny"] {
        let inst = load(name);
        let hard = run(&inst, SolveMode::Sync, Some("hard".into()))?;
        ensure(hard.status == "Optimal", || format!("{name}: hard problem {}", hard.status))?;
        let mut prev = f64::NEG_INFINITY;
        let mut last = 0.0;
        for rho in rhos {
            let o = run(&inst, SolveMode::Sync, Some(format!("l1:{rho}")))?;
            ensure(o.objective >= prev - 1e-9, || format!("{name}: {} at rho {rho} below {prev}", o.objective))?;
            ensure(o.objective <= hard.objective + 1e-9, || format!("{name}: {} at rho {rho} above hard {}", o.objective, hard.objective))?;
            prev = o.objective;
            last = o.objective;
        }
        ensure(same(last, hard.objective, 1e-6), || format!("{name}: {last} at rho 1e6 vs hard {}", hard.objective))?;
        n += 1;
    }
    Ok(format!("{n} instances: nondecreasing in rho, bounded by and converging to the hard objective"))
}

fn criterion_7() -> Check {
    let mut entries = 0;
    let mut residual = 0.0f64;
    let mut rollout = 0.0f64;
    for name in ["dispatch_slow_branching", "dispatch_fast_lattice"] {
        let p = load(name).problem;
        let g = StateGrid::from_bounds(&p, 1.0).map_err(|e| e.to_string())?;
        let mut dp = Dp::new(&p, &g, DEFAULT_DP_BUDGET).map_err(|e| e.to_string())?;
        let goals: Vec<Option<Vec<f64>>> = std::iter::once(None).chain(g.levels[1].iter().cloned().map(Some)).collect();
        for d in 0..p.grid.horizon() {
            let parent = TickId { level: 0, index: d };
            for goal in &goals {
                for terminal in [Terminal::Hard, Terminal::L1(0.5)] {
                    for y in [0.0, 1.0, 2.0, 3.0] {
                        let t = dp.segment(1, Some(parent), goal.as_deref(), terminal, &[y], "").map_err(|e| e.to_string())?;
                        let rep = bellman_check(&mut dp, &t).map_err(|e| e.to_string())?;
                        ensure(rep.failures.is_empty(), || format!("{name}: {:?}", rep.failures))?;
                        entries += rep.entries;
                        residual = residual.max(rep.max_residual);
                        for (si, x) in g.levels[1].iter().enumerate() {
                            let v = t.value_at(si);
                            if v.is_finite() {
                                let r = expected_rollout(&p, &g, &t, x).map_err(|e| e.to_string())?;
                                rollout = rollout.max((r - v).abs());
                            }
                        }
                    }
                }
            }
        }
    }
    ensure(residual <= 1e-9, || format!("Bellman residual {residual}"))?;
    ensure(rollout <= 1e-9, || format!("rollout deviation {rollout}"))?;
    Ok(format!("{entries} table entries, max residual {residual}, max rollout deviation {rollout}"))
}

fn criterion_8() -> Check {
    let inst = load("uc_tiny");
    let cfg = inst.uc.clone().unwrap();
    let p = &inst.problem;
    let mut accepted = 0;
    let mut sync_t = None;
    for mode in [SolveMode::Full, SolveMode::Sync] {
        let o = run(&inst, mode, None)?;
        let t = o.trajectory.ok_or_else(|| format!("{mode}: no solution"))?;
        let chk = ucdemo::check_physics(&cfg, p, &t, 1e-6);
        ensure(chk.violations.is_empty(), || format!("{mode} solution rejected: {:?}", chk.violations))?;
        ensure(same(chk.cost, o.objective, 1e-6), || format!("{mode}: recomputed cost {} vs {}", chk.cost, o.objective))?;
        accepted += 1;
        if mode == SolveMode::Sync {
            sync_t = Some(t);
        }
    }
    let t = sync_t.unwrap();
    let l0 = |d: usize| p.grid.linear_index(TickId { level: 0, index: d });
    let set_on = |t: &mut Trajectory, seq: [f64; 3]| {
        for s in 0..t.scenarios.len() {
            t.x[l0(0)][s][..2].copy_from_slice(&[seq[0], 2.0 * seq[0]]);
            t.next[l0(0)][s][..2].copy_from_slice(&[seq[1], 2.0 * seq[1]]);
            t.x[l0(1)][s][..2].copy_from_slice(&[seq[1], 2.0 * seq[1]]);
            t.next[l0(1)][s][..2].copy_from_slice(&[seq[2], 2.0 * seq[2]]);
        }
    };
    let mut cases: Vec<(&str, &str, Trajectory)> = Vec::new();
    let mut m = t.clone();
    m.x[l0(1)][0][1] = 7.0;
    cases.push(("pmax", "above pmax", m));
    let mut m = t.clone();
    m.next[l0(0)][0][1] = m.x[l0(0)][0][1] + 3.0;
    cases.push(("ramp", "ramp", m));
    let mut m = t.clone();
    set_on(&mut m, [0.0, 1.0, 0.0]);
    cases.push(("min-uptime", "min_up", m));
    let mut m = t.clone();
    set_on(&mut m, [1.0, 0.0, 1.0]);
    cases.push(("min-downtime", "min_down", m));
    let mut m = t.clone();
    m.u[l0(0)][1][2] += 1.0;
    cases.push(("NAC", "same information", m));
    let mut m = t.clone();
    for s in 0..m.scenarios.len() {
        m.goals[0][s][1] += 1.0;
    }
    cases.push(("terminal goal", "segment ends at", m));
    for (what, needle, m) in &cases {
        let v = ucdemo::check_physics(&cfg, p, m, 1e-6).violations;
        ensure(v.iter().any(|v| v.msg.contains(needle)), || format!("{what} mutation not caught: {v:?}"))?;
    }

    let mut det = cfg.clone();
    det.da_tree = None;
    det.st_lattice = None;
    det.rt_noise = None;
    let mut flat = cfg.clone();
    flat.da_tree = Some(DaTree { branch_at: 1, branches: vec![DaBranch { shift: 0.0, prob: 0.5 }, DaBranch { shift: 0.0, prob: 0.5 }] });
    flat.st_lattice = Some(ucdemo::two_node_lattice(2, 0.0));
    flat.rt_noise = Some(vec![RtOutcome { deviation: vec![0.0], prob: 0.5 }, RtOutcome { deviation: vec![0.0], prob: 0.5 }]);
    let (d, _) = full_solution(&ucdemo::build_instance(&det).map_err(|e| e.to_string())?);
    let pf = ucdemo::build_instance(&flat).map_err(|e| e.to_string())?;
    let f = solve_milp(&build_synchronized(&pf, &BuildOptions::default()).map_err(|e| e.to_string())?.sf, &MilpOptions::default()).objective;
    ensure(same(d, f, 1e-6), || format!("zero-variance {f} vs deterministic {d}"))?;
    Ok(format!("{accepted} solver outputs accepted, {} mutations rejected, zero-variance {f} = deterministic {d}", cases.len()))
}

fn random_lp(rng: &mut ChaCha8Rng) -> StandardForm {
    let n = rng.gen_range(3..=8);
    let m = rng.gen_range(2..=6);
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..4.0)).collect();
    let mut sf = StandardForm::new();
    for j in 0..n {
        let ub = if rng.gen_bool(0.7) { 5.0 } else { f64::INFINITY };
        sf.add_var(0.0, ub, false, rng.gen_range(-3.0..3.0), format!("x{j}"));
    }
    for i in 0..m {
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-2i32..=3) as f64).collect();
        let ax: f64 = a.iter().zip(&x).map(|(a, b)| a * b).sum();
        let (sense, rhs) = match rng.gen_range(0..3) {
            0 => (Sense::Le, ax + rng.gen_range(0.0..2.0)),
            1 => (Sense::Ge, ax - rng.gen_range(0.0..2.0)),
            _ => (Sense::Eq, ax),
        };
        sf.add_row(a.into_iter().enumerate().collect(), sense, rhs, format!("r{i}"));
    }
    // keep the LP bounded: a cap on the total
    sf.add_row((0..n).map(|j| (j, 1.0)).collect(), Sense::Le, 40.0, "cap");
    sf
}

fn random_binary_milp(rng: &mut ChaCha8Rng) -> StandardForm {
    let n = rng.gen_range(6..=12);
    let m = rng.gen_range(2..=5);
    let mut sf = StandardForm::new();
    for j in 0..n {
        sf.add_var(0.0, 1.0, true, rng.gen_range(-10i32..=6) as f64, format!("b{j}"));
    }
    for i in 0..m {
        let a: Vec<(usize, f64)> = (0..n).map(|j| (j, rng.gen_range(-3i32..=5) as f64)).collect();
        let sense = if rng.gen_bool(0.75) { Sense::Le } else { Sense::Ge };
        let rhs = match sense {
            Sense::Le => rng.gen_range(2i32..=10) as f64,
            _ => rng.gen_range(-4i32..=3) as f64,
        };
        sf.add_row(a, sense, rhs, format!("r{i}"));
    }
    sf
}

fn enumerate_binary(sf: &StandardForm) -> Option<f64> {
    let n = sf.num_vars();
    (0u32..1 << n)
        .filter_map(|mask| {
            let x: Vec<f64> = (0..n).map(|j| f64::from((mask >> j) & 1)).collect();
            (sf.max_violation(&x) <= 1e-9).then(|| sf.objective(&x))
        })
        .min_by(|a, b| a.total_cmp(b))
}

fn criterion_9() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut gap = 0.0f64;
    for k in 0..20 {
        let sf = random_lp(&mut rng);
        let r = solve_lp(&sf, &LpOptions::default());
        ensure(r.status == LpStatus::Optimal, || format!("LP {k}: {:?}", r.status))?;
        ensure(sf.max_violation(&r.x) <= 1e-7, || format!("LP {k}: infeasible point"))?;
        gap = gap.max((r.dual_objective(&sf) - r.objective).abs());
    }
    ensure(gap <= 1e-6, || format!("duality gap {gap}"))?;
    let mut feasible = 0;
    for k in 0..20 {
        let sf = random_binary_milp(&mut rng);
        let r = solve_milp(&sf, &MilpOptions::default());
        match enumerate_binary(&sf) {
            None => ensure(r.status == MilpStatus::Infeasible, || format!("MILP {k}: {:?} on an infeasible instance", r.status))?,
            Some(best) => {
                ensure(r.status == MilpStatus::Optimal && same(r.objective, best, 1e-6), || format!("MILP {k}: {} vs enumeration {best}", r.objective))?;
                feasible += 1;
            }
        }
    }
    Ok(format!("20 LPs with duality gap <= {gap:.1e}; 20 MILPs ({feasible} feasible) equal enumeration"))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("oracle equivalence", criterion_1),
        ("approximation bound", criterion_2),
        ("hybrid equals extensive", criterion_3),
        ("node-count arithmetic", criterion_4),
        ("non-anticipativity", criterion_5),
        ("terminal penalties", criterion_6),
        ("Bellman consistency", criterion_7),
        ("unit-commitment physics", criterion_8),
        ("solver soundness", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let ms = start.elapsed().as_millis();
        match result {
            Ok(detail) => println!("PASS {} {name}: {detail} [{ms} ms]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why} [{ms} ms]", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
