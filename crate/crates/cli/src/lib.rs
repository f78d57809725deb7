//! Command-line front end: load instance files, validate them, solve them in
//! any of the available modes and write flat CSV reports.
//!
//! Exit codes: 0 answered (including infeasible), 1 unreadable input,
//! 2 invalid or unsupported instance, 3 budget exceeded, 4 internal failure.

pub mod instance;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mts_core::instantiate::{build_full_equivalent, build_synchronized, count_nodes, BuildOptions, BuildReport, Mode, DEFAULT_NODE_BUDGET};
use mts_core::model::Terminal;
use mts_core::oracle::{enumerate, OracleGrid, OracleOptions, PolicyEntry, Trajectory, DEFAULT_POLICY_BUDGET};
use mts_core::segdp::{hybrid_solve, solve_dp, HybridOptions, StateGrid, DEFAULT_DP_BUDGET};
use mts_core::timegrid::Interpretation;
use mts_core::ucdemo;
use mts_core::Error;
use mts_milp::{interchange, solve_milp, MilpOptions, MilpStatus};

pub use instance::{load_str, Instance, LoadError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_UNREADABLE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "MTS_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "mts", version, about = "Multi-timescale stochastic programs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check an instance file and list violations.
    Validate { path: PathBuf },
    /// Solve an instance and write reports.
    Solve {
        path: PathBuf,
        #[command(flatten)]
        flags: SolveArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve several configurations and tabulate objectives and gaps.
    Compare {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Comma-separated modes.
        #[arg(long, value_delimiter = ',', default_value = "full,sync")]
        modes: Vec<SolveMode>,
        /// Comma-separated goal penalties; each runs with `l1:<rho>`.
        #[arg(long, value_delimiter = ',')]
        rho: Vec<f64>,
        #[command(flatten)]
        flags: SolveArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exhaustive search over grid policies.
    Oracle {
        path: PathBuf,
        #[arg(long)]
        budget: Option<u128>,
        #[command(flatten)]
        flags: SolveArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tree sizes and model dimensions without building the model.
    Count {
        path: PathBuf,
        #[arg(long, value_enum, default_value_t = SolveMode::Full)]
        mode: SolveMode,
        #[arg(long)]
        node_budget: Option<usize>,
    },
    /// Write the extensive-form MILP in the interchange format.
    Export {
        path: PathBuf,
        #[arg(long, value_enum, default_value_t = SolveMode::Full)]
        mode: SolveMode,
        #[arg(long)]
        compact: bool,
        /// Target file (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve a MILP given in the interchange format.
    SolveSf {
        path: PathBuf,
        #[arg(long)]
        gap_tol: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum SolveMode {
    #[default]
    Full,
    Sync,
    Dp,
    Hybrid,
    Oracle,
}

impl std::fmt::Display for SolveMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveMode::Full => "full",
            SolveMode::Sync => "sync",
            SolveMode::Dp => "dp",
            SolveMode::Hybrid => "hybrid",
            SolveMode::Oracle => "oracle",
        })
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SolveArgs {
    #[arg(long, value_enum, default_value_t = SolveMode::Full)]
    pub mode: SolveMode,
    /// `hard` or `l1:<rho>` for segment ends below the first level.
    #[arg(long)]
    pub terminal: Option<String>,
    #[arg(long)]
    pub interpretation: Option<u8>,
    /// Spacing of continuous grid points (oracle, dp, hybrid).
    #[arg(long)]
    pub grid_step: Option<f64>,
    #[arg(long)]
    pub node_budget: Option<usize>,
    #[arg(long)]
    pub gap_tol: Option<f64>,
    /// Share variables per information class in full mode.
    #[arg(long)]
    pub compact: bool,
    /// What the oracle enumerates: the full problem or the synchronized one.
    #[arg(long, value_enum)]
    pub oracle_of: Option<SolveMode>,
}

/// Settings after combining file options with flags.
#[derive(Debug, Clone)]
pub struct Settings {
    pub mode: SolveMode,
    pub grid_step: f64,
    pub node_budget: usize,
    pub policy_budget: u128,
    pub dp_budget: usize,
    pub gap_tol: f64,
    pub compact: bool,
    pub oracle_of: Mode,
}

/// Applies flags to a loaded instance, returning the effective settings.
pub fn configure(inst: &mut Instance, args: &SolveArgs) -> Result<Settings, Error> {
    let o = &inst.options;
    if let Some(t) = &args.terminal {
        let t: Terminal = t.parse()?;
        inst.problem.levels.iter_mut().skip(1).for_each(|l| l.terminal = t);
        if let Some(cfg) = inst.uc.as_mut() {
            cfg.terminal = t.to_string();
        }
    }
    if let Some(n) = args.interpretation {
        inst.problem.interpretation = Interpretation::from_number(n).ok_or_else(|| Error::Parse(format!("interpretation {n} is not 1 or 2")))?;
    }
    let oracle_of = match args.oracle_of {
        None | Some(SolveMode::Full) => Mode::Full,
        Some(SolveMode::Sync) => Mode::Synchronized,
        Some(m) => return Err(Error::Parse(format!("the oracle enumerates `full` or `sync`, not `{m}`"))),
    };
    Ok(Settings {
        mode: args.mode,
        grid_step: args.grid_step.or(o.grid_step).unwrap_or(1.0),
        node_budget: args.node_budget.or(o.node_budget).unwrap_or(DEFAULT_NODE_BUDGET),
        policy_budget: o.policy_budget.unwrap_or(DEFAULT_POLICY_BUDGET),
        dp_budget: o.dp_budget.unwrap_or(DEFAULT_DP_BUDGET),
        gap_tol: args.gap_tol.or(o.gap_tol).unwrap_or(1e-9),
        compact: args.compact,
        oracle_of,
    })
}

/// Result of one solve.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub mode: SolveMode,
    pub status: String,
    pub objective: f64,
    pub report: Option<BuildReport>,
    pub trajectory: Option<Trajectory>,
    pub policy: Vec<PolicyEntry>,
    /// Further `key, value` lines for the report.
    pub notes: Vec<(String, String)>,
}

impl Outcome {
    fn new(mode: SolveMode, status: impl Into<String>, objective: f64) -> Self {
        Outcome { mode, status: status.into(), objective, report: None, trajectory: None, policy: Vec::new(), notes: Vec::new() }
    }
}

fn milp_status(s: MilpStatus) -> String {
    format!("{s:?}")
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|a| format!("{}", a + 0.0)).collect();
    format!("[{}]", parts.join(" "))
}

/// Solves `inst` as configured.
pub fn solve(inst: &Instance, s: &Settings) -> Result<Outcome, Error> {
    let p = &inst.problem;
    let bopts = BuildOptions { node_budget: s.node_budget, compact: s.compact };
    let milp = MilpOptions { gap_tol: s.gap_tol, ..Default::default() };
    let mut out = match s.mode {
        SolveMode::Full => {
            let b = build_full_equivalent(p, &bopts)?;
            let r = solve_milp(&b.sf, &milp);
            let mut o = Outcome::new(s.mode, milp_status(r.status), r.objective);
            o.notes.push(("bb_nodes".into(), r.nodes.to_string()));
            if r.has_solution() {
                o.trajectory = Some(b.layout.trajectory(p, &r.x));
            }
            o.report = Some(b.report);
            o
        }
        SolveMode::Sync => {
            let b = build_synchronized(p, &bopts)?;
            let r = solve_milp(&b.sf, &milp);
            let mut o = Outcome::new(s.mode, milp_status(r.status), r.objective);
            o.notes.push(("bb_nodes".into(), r.nodes.to_string()));
            if r.has_solution() {
                o.trajectory = Some(b.layout.trajectory(p, &r.x, s.node_budget)?);
            }
            if r.status == MilpStatus::Infeasible {
                o.notes.push(("warning".into(), "the synchronized approximation is infeasible: no goal states are reachable from every branch".into()));
            }
            o.report = Some(b.report);
            o
        }
        SolveMode::Dp => {
            let grids = StateGrid::from_bounds(p, s.grid_step)?;
            let r = solve_dp(p, &grids, s.dp_budget)?;
            let status = if r.objective.is_finite() { "Optimal" } else { "Infeasible" };
            let mut o = Outcome::new(s.mode, status, r.objective);
            if let Some(u) = &r.first_control {
                o.notes.push(("first_control".into(), fmt_vec(u)));
            }
            if let Some(g) = &r.first_goal {
                o.notes.push(("first_goal".into(), fmt_vec(g)));
            }
            o.notes.push(("transition_solves".into(), r.solves.to_string()));
            o.notes.push(("table_evaluations".into(), r.evaluations.to_string()));
            o
        }
        SolveMode::Hybrid => {
            let grids = StateGrid::from_bounds(p, s.grid_step)?;
            let r = hybrid_solve(p, &grids, &HybridOptions { dp_budget: s.dp_budget, milp, ..Default::default() })?;
            let mut o = Outcome::new(s.mode, milp_status(r.status), r.objective);
            if !r.x.is_empty() {
                o.notes.push(("first_control".into(), fmt_vec(&r.control(p, 0, 0))));
            }
            o.notes.push(("selection_variables".into(), r.selections.to_string()));
            o.notes.push(("segment_tables".into(), r.segment_tables.to_string()));
            if r.status == MilpStatus::Infeasible {
                o.notes.push(("warning".into(), "the synchronized approximation is infeasible".into()));
            }
            o
        }
        SolveMode::Oracle => {
            let grid = OracleGrid::from_bounds(p, s.grid_step)?;
            let r = enumerate(p, &grid, &OracleOptions { mode: s.oracle_of, budget: s.policy_budget, node_budget: s.node_budget })?;
            let status = if r.objective.is_finite() { "Optimal" } else { "Infeasible" };
            let mut o = Outcome::new(s.mode, status, r.objective);
            o.notes.push(("oracle_of".into(), s.oracle_of.to_string()));
            o.notes.push(("policy_space".into(), r.policy_space.to_string()));
            o.notes.push(("evaluated".into(), r.evaluated.to_string()));
            o.notes.push(("pruned".into(), r.pruned.to_string()));
            o.trajectory = r.trajectory;
            o.policy = r.policy;
            o
        }
    };
    if let (Some(cfg), Some(t)) = (&inst.uc, &out.trajectory) {
        let chk = ucdemo::check_physics(cfg, p, t, 1e-6);
        out.notes.push(("physics_violations".into(), chk.violations.len().to_string()));
        out.notes.push(("physics_cost".into(), format!("{}", chk.cost)));
    }
    Ok(out)
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Budget { .. } => EXIT_BUDGET,
        Error::Io(_) => EXIT_INTERNAL,
        Error::Milp(_) => EXIT_INTERNAL,
        Error::InfeasibleRollout(_) => EXIT_INTERNAL,
        _ => EXIT_INVALID,
    }
}

fn report_csv(name: &str, o: &Outcome) -> String {
    let mut s = String::from("key,value\n");
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k},{}", if v.contains(',') { format!("\"{v}\"") } else { v });
    };
    kv("instance", name.into());
    kv("mode", o.mode.to_string());
    kv("status", o.status.clone());
    kv("objective", format!("{}", o.objective));
    if let Some(r) = &o.report {
        kv("variables", r.variables.to_string());
        kv("constraints", r.constraints.to_string());
        kv("integer_variables", r.integer_variables.to_string());
        kv("scenarios", r.scenarios.to_string());
        kv("nac_classes", r.nac_classes.to_string());
        kv("nac_rows", r.nac_rows.to_string());
        for (j, n) in r.nodes_per_level.iter().enumerate() {
            kv(&format!("nodes_level{}", j + 1), n.to_string());
        }
        kv("nodes_total", r.total_nodes().to_string());
    }
    for (k, v) in &o.notes {
        kv(k, v.clone());
    }
    s
}

/// Generic solution listing: one line per tick, scenario and component.
pub fn solution_csv(inst: &Instance, t: &Trajectory) -> String {
    let p = &inst.problem;
    let mut s = String::from("tick,scenario,prob,kind,index,value\n");
    for (sc_i, sc) in t.scenarios.scenarios.iter().enumerate() {
        for (lin, &id) in p.grid.linear_ids().iter().enumerate() {
            let tick = p.grid.tick(id);
            for (kind, v) in [("x", &t.x[lin][sc_i]), ("u", &t.u[lin][sc_i])] {
                for (k, a) in v.iter().enumerate() {
                    let _ = writeln!(s, "\"{tick}\",{sc_i},{},{kind},{k},{a}", sc.prob);
                }
            }
            if id.level == 0 {
                if let Some(g) = t.goals.get(id.index) {
                    for (k, a) in g[sc_i].iter().enumerate() {
                        let _ = writeln!(s, "\"{tick}\",{sc_i},{},goal,{k},{a}", sc.prob);
                    }
                }
            }
        }
    }
    s
}

fn policy_csv(policy: &[PolicyEntry]) -> String {
    let mut s = String::from("tick,class,members,kind,value\n");
    for e in policy {
        let members: Vec<String> = e.members.iter().map(|m| m.to_string()).collect();
        let kind = if e.is_goal { "goal" } else { "control" };
        let _ = writeln!(s, "\"{}\",{},{},{kind},{}", e.tick, e.class, members.join(" "), fmt_vec(&e.value));
    }
    s
}

fn summary(name: &str, o: &Outcome, elapsed_ms: Option<u128>) -> String {
    let mut s = format!("instance {name}\nmode {}\nstatus {}\nobjective {}\n", o.mode, o.status, o.objective);
    if let Some(r) = &o.report {
        let _ = writeln!(
            s,
            "model {} variables ({} integer), {} constraints\ntree {} nodes {:?}, {} scenarios, {} information classes",
            r.variables, r.integer_variables, r.constraints, r.total_nodes(), r.nodes_per_level, r.scenarios, r.nac_classes
        );
    }
    for (k, v) in &o.notes {
        let _ = writeln!(s, "{k} {v}");
    }
    if let Some(ms) = elapsed_ms {
        let _ = writeln!(s, "wall {ms} ms");
    }
    s
}

pub fn out_dir(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("mts-out"))
}

/// Writes the report files of one solve; returns their paths.
pub fn write_reports(dir: &Path, inst: &Instance, o: &Outcome) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let stem = format!("{}.{}", inst.problem.name, o.mode);
    let mut files = vec![(format!("{stem}.summary.txt"), summary(&inst.problem.name, o, None)), (format!("{stem}.report.csv"), report_csv(&inst.problem.name, o))];
    if let Some(t) = &o.trajectory {
        match &inst.uc {
            Some(cfg) => {
                files.push((format!("{stem}.solution.csv"), ucdemo::solution_csv(cfg, &inst.problem, t)));
                files.push((format!("{stem}.reserve.csv"), ucdemo::reserve_csv(&ucdemo::reserve_report(cfg, &inst.problem, t))));
            }
            None => files.push((format!("{stem}.solution.csv"), solution_csv(inst, t))),
        }
    }
    if !o.policy.is_empty() {
        files.push((format!("{stem}.policy.csv"), policy_csv(&o.policy)));
    }
    let mut paths = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body)?;
        paths.push(path);
    }
    Ok(paths)
}

fn read(path: &Path) -> Result<String, i32> {
    fs::read_to_string(path).map_err(|e| {
        eprintln!("cannot read {}: {e}", path.display());
        EXIT_UNREADABLE
    })
}

/// Reads and validates an instance file, printing problems to stderr.
pub fn load_path(path: &Path) -> Result<Instance, i32> {
    let text = read(path)?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("instance");
    load_str(&text, stem).map_err(|e| {
        eprintln!("{}: invalid instance", path.display());
        match &e {
            LoadError::Schema { line: Some(l), msg } => eprintln!("{}:{l}: {msg}", path.display()),
            LoadError::Schema { line: None, msg } => eprintln!("{}: {msg}", path.display()),
            LoadError::Invalid(v) => v.iter().for_each(|x| eprintln!("{}: {x}", path.display())),
        }
        EXIT_INVALID
    })
}

fn fail(e: &Error) -> i32 {
    eprintln!("error: {e}");
    exit_code(e)
}

fn cmd_solve(path: &Path, args: &SolveArgs, out: Option<&Path>) -> i32 {
    let mut inst = match load_path(path) {
        Ok(i) => i,
        Err(c) => return c,
    };
    let settings = match configure(&mut inst, args) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    let start = Instant::now();
    let o = match solve(&inst, &settings) {
        Ok(o) => o,
        Err(e) => return fail(&e),
    };
    print!("{}", summary(&inst.problem.name, &o, Some(start.elapsed().as_millis())));
    match write_reports(&out_dir(out), &inst, &o) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("cannot write reports: {e}");
            EXIT_INTERNAL
        }
    }
}

/// One line of a comparison table.
#[derive(Debug, Clone)]
pub struct CompareRow {
    pub instance: String,
    pub mode: SolveMode,
    pub terminal: String,
    pub status: String,
    pub objective: f64,
    /// Objective minus the first row of the same instance.
    pub gap: f64,
    pub nodes: Option<usize>,
    pub nac_classes: Option<usize>,
    pub wall_ms: u128,
}

/// Runs every mode (and every `rho`, if given) on every instance.
pub fn compare(instances: &[Instance], modes: &[SolveMode], rhos: &[f64], base: &SolveArgs) -> Result<Vec<CompareRow>, Error> {
    if let Some(first) = instances.first() {
        let shape = |i: &Instance| {
            let p = &i.problem;
            (p.num_levels(), (0..p.num_levels()).map(|j| (p.grid.level_len(j), p.nx(j), p.nu(j))).collect::<Vec<_>>())
        };
        for other in &instances[1..] {
            if shape(other) != shape(first) {
                return Err(Error::Parse(format!("instances `{}` and `{}` differ in grid or dimensions", first.problem.name, other.problem.name)));
            }
        }
    }
    let terminals: Vec<Option<String>> = if rhos.is_empty() { vec![base.terminal.clone()] } else { rhos.iter().map(|r| Some(format!("l1:{r}"))).collect() };
    let mut rows: Vec<CompareRow> = Vec::new();
    for inst in instances {
        let first_row = rows.len();
        for term in &terminals {
            for &mode in modes {
                let mut inst = inst.clone();
                let args = SolveArgs { mode, terminal: term.clone(), ..base.clone() };
                let s = configure(&mut inst, &args)?;
                let start = Instant::now();
                let o = solve(&inst, &s)?;
                let wall_ms = start.elapsed().as_millis();
                let reference = rows.get(first_row).map_or(o.objective, |r: &CompareRow| r.objective);
                rows.push(CompareRow {
                    instance: inst.problem.name.clone(),
                    mode,
                    terminal: term.clone().unwrap_or_else(|| "file".into()),
                    status: o.status,
                    objective: o.objective,
                    gap: o.objective - reference,
                    nodes: o.report.as_ref().map(|r| r.total_nodes()),
                    nac_classes: o.report.as_ref().map(|r| r.nac_classes),
                    wall_ms,
                });
            }
        }
    }
    Ok(rows)
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut s = String::from("instance,mode,terminal,status,objective,gap,nodes,nac_classes,wall_ms\n");
    let opt = |v: Option<usize>| v.map_or(String::new(), |n| n.to_string());
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.instance, r.mode, r.terminal, r.status, r.objective, r.gap, opt(r.nodes), opt(r.nac_classes), r.wall_ms
        );
    }
    s
}

fn cmd_compare(paths: &[PathBuf], modes: &[SolveMode], rhos: &[f64], args: &SolveArgs, out: Option<&Path>) -> i32 {
    let mut insts = Vec::new();
    for p in paths {
        match load_path(p) {
            Ok(i) => insts.push(i),
            Err(c) => return c,
        }
    }
    let rows = match compare(&insts, modes, rhos, args) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    let table = compare_csv(&rows);
    print!("{table}");
    let dir = out_dir(out);
    let path = dir.join("compare.csv");
    match fs::create_dir_all(&dir).and_then(|_| fs::write(&path, table)) {
        Ok(()) => {
            println!("wrote {}", path.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("cannot write {}: {e}", path.display());
            EXIT_INTERNAL
        }
    }
}

fn cmd_validate(path: &Path) -> i32 {
    match load_path(path) {
        Ok(inst) => {
            let p = &inst.problem;
            println!(
                "{}: valid ({} levels, {} ticks, {} tree nodes{})",
                path.display(),
                p.num_levels(),
                p.grid.num_ticks(),
                p.stoch.tree.len(),
                if inst.uc.is_some() { ", unit commitment" } else { "" }
            );
            EXIT_OK
        }
        Err(c) => c,
    }
}

fn cmd_count(path: &Path, mode: SolveMode, node_budget: Option<usize>) -> i32 {
    let inst = match load_path(path) {
        Ok(i) => i,
        Err(c) => return c,
    };
    let m = match mode {
        SolveMode::Full => Mode::Full,
        SolveMode::Sync => Mode::Synchronized,
        other => {
            eprintln!("count supports full or sync, not {other}");
            return EXIT_INVALID;
        }
    };
    let opts = BuildOptions { node_budget: node_budget.unwrap_or(DEFAULT_NODE_BUDGET), compact: false };
    match count_nodes(&inst.problem, m, &opts) {
        Ok(r) => {
            println!("mode {}\nnodes {} {:?}\nscenarios {}\nvariables {}\nconstraints {}\nnac_classes {}", r.mode, r.total_nodes(), r.nodes_per_level, r.scenarios, r.variables, r.constraints, r.nac_classes);
            EXIT_OK
        }
        Err(e) => fail(&e),
    }
}

fn cmd_export(path: &Path, mode: SolveMode, compact: bool, out: Option<&Path>) -> i32 {
    let inst = match load_path(path) {
        Ok(i) => i,
        Err(c) => return c,
    };
    let opts = BuildOptions { compact, ..Default::default() };
    let sf = match mode {
        SolveMode::Full => build_full_equivalent(&inst.problem, &opts).map(|b| b.sf),
        SolveMode::Sync => build_synchronized(&inst.problem, &opts).map(|b| b.sf),
        other => {
            eprintln!("export supports full or sync, not {other}");
            return EXIT_INVALID;
        }
    };
    let sf = match sf {
        Ok(sf) => sf,
        Err(e) => return fail(&e),
    };
    let text = interchange::to_string(&sf);
    match out {
        None => {
            print!("{text}");
            EXIT_OK
        }
        Some(f) => match fs::write(f, text) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                eprintln!("cannot write {}: {e}", f.display());
                EXIT_INTERNAL
            }
        },
    }
}

fn cmd_solve_sf(path: &Path, gap_tol: Option<f64>) -> i32 {
    let text = match read(path) {
        Ok(t) => t,
        Err(c) => return c,
    };
    let sf = match interchange::from_str(&text) {
        Ok(sf) => sf,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return EXIT_INVALID;
        }
    };
    let r = solve_milp(&sf, &MilpOptions { gap_tol: gap_tol.unwrap_or(1e-9), ..Default::default() });
    println!("status {:?}\nobjective {}\nbest_bound {}\nnodes {}", r.status, r.objective, r.best_bound, r.nodes);
    if r.has_solution() {
        for (j, v) in r.x.iter().enumerate() {
            println!("{} {v}", sf.names[j]);
        }
    }
    EXIT_OK
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match &cli.command {
        Command::Validate { path } => cmd_validate(path),
        Command::Solve { path, flags, out } => cmd_solve(path, flags, out.as_deref()),
        Command::Compare { paths, modes, rho, flags, out } => cmd_compare(paths, modes, rho, flags, out.as_deref()),
        Command::Oracle { path, budget, flags, out } => {
            let mut inst = match load_path(path) {
                Ok(i) => i,
                Err(c) => return c,
            };
            let mut settings = match configure(&mut inst, &SolveArgs { mode: SolveMode::Oracle, ..flags.clone() }) {
                Ok(s) => s,
                Err(e) => return fail(&e),
            };
            if let Some(b) = budget {
                settings.policy_budget = *b;
            }
            let start = Instant::now();
            match solve(&inst, &settings) {
                Ok(o) => {
                    print!("{}", summary(&inst.problem.name, &o, Some(start.elapsed().as_millis())));
                    match write_reports(&out_dir(out.as_deref()), &inst, &o) {
                        Ok(paths) => {
                            paths.iter().for_each(|p| println!("wrote {}", p.display()));
                            EXIT_OK
                        }
                        Err(e) => {
                            eprintln!("cannot write reports: {e}");
                            EXIT_INTERNAL
                        }
                    }
                }
                Err(e) => fail(&e),
            }
        }
        Command::Count { path, mode, node_budget } => cmd_count(path, *mode, *node_budget),
        Command::Export { path, mode, compact, out } => cmd_export(path, *mode, *compact, out.as_deref()),
        Command::SolveSf { path, gap_tol } => cmd_solve_sf(path, *gap_tol),
    }
}
