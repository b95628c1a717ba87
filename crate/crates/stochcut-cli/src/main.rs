//! `stochcut` command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use stochcut::dsa::{self, ConvexityMode, DsaSchedule};
use stochcut::dualsddp::{self, DualConfig};
use stochcut::eddp::{self, EddpConfig};
use stochcut::horizon::{self, HorizonConfig, StationaryProblem};
use stochcut::io::{self, IoError, ProblemDocument};
use stochcut::oracle;
use stochcut::scen::{self, SampleSeries};
use stochcut::sddp::{self, SddpConfig, SddpError, UpperBoundRule};
use stochcut::soc::{self, SocConfig};

#[derive(Parser, Debug)]
#[command(name = "stochcut", version, about = "Cutting-plane and stochastic approximation solvers for multistage stochastic programs")]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true, env = "STOCHCUT_THREADS")]
    threads: Option<usize>,
    /// Raise log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a problem file and write iterations.csv and summary.json.
    Solve(SolveArgs),
    /// Train a policy, then estimate its value by simulation.
    Simulate(SimulateArgs),
    /// Run primal and dual SDDP side by side and print the bound table.
    Bound(RunArgs),
    /// Fit a Markov lattice to a sample series.
    FitLattice(FitArgs),
    /// Cross-check the bundled fixtures.
    Oracle(OracleArgs),
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, default_value_t = 500)]
    iters: usize,
    #[arg(long, env = "STOCHCUT_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    gap_tol: Option<f64>,
    /// JSON file with one risk measure or a list; replaces the problem's risk block.
    #[arg(long)]
    risk_file: Option<PathBuf>,
    /// Initial cost-to-go floor.
    #[arg(long, allow_hyphen_values = true)]
    floor: Option<f64>,
    /// Directory for iterations.csv and summary.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Method {
    Sddp,
    Eddp,
    Dual,
    Dsa,
    Stationary,
    Periodic,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Sddp => "sddp",
            Method::Eddp => "eddp",
            Method::Dual => "dual",
            Method::Dsa => "dsa",
            Method::Stationary => "stationary",
            Method::Periodic => "periodic",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    General,
    Strong,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum, default_value = "sddp")]
    method: Method,
    /// Simulated paths for the statistical upper bound.
    #[arg(long, default_value_t = 100)]
    paths: usize,
    #[arg(long, default_value_t = 2.0)]
    z_alpha: f64,
    /// EDDP saturation tolerance, or the truncation tolerance of the
    /// infinite-horizon solvers.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Overrides the discount factor of the control block.
    #[arg(long)]
    gamma: Option<f64>,
    /// Repeats a single control block this many times.
    #[arg(long)]
    period: Option<usize>,
    /// Inner loop counts per stage for DSA, comma separated.
    #[arg(long, value_delimiter = ',')]
    loops: Vec<usize>,
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    n2: Option<usize>,
    #[arg(long)]
    n3: Option<usize>,
    #[arg(long, value_enum, default_value = "general")]
    mode: Mode,
    /// Multiplier box of the dual solver.
    #[arg(long)]
    penalty: Option<f64>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 2000)]
    paths: usize,
    #[arg(long, default_value_t = 2.0)]
    z_alpha: f64,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// CSV with one row per time step.
    #[arg(long)]
    series: PathBuf,
    /// Nodes per stage after the first.
    #[arg(long)]
    clusters: usize,
    /// Steps per path; the record is cut into consecutive paths.
    #[arg(long)]
    period: usize,
    #[arg(long, env = "STOCHCUT_SEED", default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OracleArgs {
    /// Recompute every frozen fixture.
    #[arg(long)]
    check: bool,
    /// Restrict the check to one fixture.
    #[arg(long)]
    fixture: Option<String>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Solver(String),
    Validation(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Solver(_) => 2,
            Failure::Validation(_) => 3,
        }
    }
}

impl From<SddpError> for Failure {
    fn from(e: SddpError) -> Self {
        match e {
            SddpError::Invalid(m) => Failure::Validation(m),
            other => Failure::Solver(other.to_string()),
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Read { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

/// One line of iterations.csv; absent values are written as empty fields.
struct Row {
    iteration: usize,
    lower_bound: f64,
    dual_upper_bound: Option<f64>,
    elapsed: Option<f64>,
    cuts: Option<usize>,
}

struct Report {
    method: &'static str,
    seed: u64,
    config: Value,
    stop_rule: String,
    iterations: usize,
    lower_bound: Option<f64>,
    upper_bound: Option<f64>,
    x1: Vec<f64>,
    statistical: Option<sddp::UpperBoundReport>,
    details: Value,
    rows: Vec<Row>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Bound(a) => cmd_bound(&a),
        Command::FitLattice(a) => cmd_fit(&a),
        Command::Oracle(a) => cmd_oracle(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let msg = match &f {
                Failure::Usage(m) | Failure::Solver(m) | Failure::Validation(m) => m,
            };
            let kind = match &f {
                Failure::Usage(_) => "usage error",
                Failure::Solver(_) => "solver failure",
                Failure::Validation(_) => "validation failure",
            };
            eprintln!("{kind}: {msg}");
            ExitCode::from(f.code())
        }
    }
}

fn load(run: &RunArgs) -> Outcome<ProblemDocument> {
    let mut doc = io::read_problem(&run.problem)?;
    if let Some(path) = &run.risk_file {
        let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
        doc.risk = io::parse_risk(&text)?;
    }
    Ok(doc)
}

fn linear(doc: &ProblemDocument) -> Outcome<&stochcut::model::MultistageProblem> {
    doc.problem
        .as_ref()
        .ok_or_else(|| Failure::Validation("this method needs linear stages in the problem file".into()))
}

fn run_echo(run: &RunArgs) -> Value {
    json!({
        "problem": run.problem.display().to_string(),
        "iters": run.iters,
        "seed": run.seed,
        "gap_tol": run.gap_tol,
        "risk_file": run.risk_file.as_ref().map(|p| p.display().to_string()),
        "floor": run.floor,
    })
}

fn sddp_config(run: &RunArgs, doc: &ProblemDocument, paths: usize, z_alpha: f64) -> SddpConfig {
    SddpConfig {
        max_iterations: run.iters,
        seed: run.seed,
        gap_tol: Some(run.gap_tol.unwrap_or(1e-6)),
        floor: run.floor.unwrap_or(0.0),
        upper_bound_paths: paths,
        z_alpha,
        risk: doc.risk.clone(),
        ..SddpConfig::default()
    }
}

fn soc_config(run: &RunArgs, doc: &ProblemDocument) -> SocConfig {
    SocConfig {
        max_iterations: run.iters,
        seed: run.seed,
        gap_tol: Some(run.gap_tol.unwrap_or(1e-6)),
        floor: run.floor.unwrap_or(0.0),
        psi: doc.psi(),
        ..SocConfig::default()
    }
}

fn sddp_rows(log: &[sddp::IterationRecord]) -> Vec<Row> {
    log.iter()
        .map(|r| Row {
            iteration: r.iteration,
            lower_bound: r.lower_bound,
            dual_upper_bound: None,
            elapsed: Some(r.elapsed),
            cuts: Some(r.cuts.iter().sum()),
        })
        .collect()
}

fn bound_rows(rows: &[dualsddp::BoundRow]) -> Vec<Row> {
    rows.iter()
        .map(|r| Row {
            iteration: r.iteration,
            lower_bound: r.lower_bound,
            dual_upper_bound: Some(r.dual_upper_bound),
            elapsed: Some(r.elapsed),
            cuts: None,
        })
        .collect()
}

fn plain_rows(lbs: &[f64]) -> Vec<Row> {
    lbs.iter()
        .enumerate()
        .map(|(k, &lb)| Row {
            iteration: k + 1,
            lower_bound: lb,
            dual_upper_bound: None,
            elapsed: None,
            cuts: None,
        })
        .collect()
}

fn stop_name(s: sddp::StopRule) -> String {
    serde_json::to_value(s).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

fn solve_sddp(a: &SolveArgs, doc: &ProblemDocument, echo: Value) -> Outcome<Report> {
    if let (None, Some(socp)) = (&doc.problem, &doc.soc) {
        let cfg = soc_config(&a.run, doc);
        let r = soc::run_soc(socp, &cfg)?;
        let ub = soc::risk_upper_bound(socp, &cfg.psi, &r.state, a.paths, a.z_alpha, a.run.seed)?;
        return Ok(Report {
            method: "sddp",
            seed: a.run.seed,
            config: json!({ "run": echo, "soc": cfg, "paths": a.paths, "z_alpha": a.z_alpha }),
            stop_rule: stop_name(r.stop),
            iterations: r.iterations,
            lower_bound: Some(r.lower_bound),
            upper_bound: r.policy_value,
            x1: r.u1,
            statistical: Some(ub),
            details: json!({ "problem_kind": "control", "policy_value": r.policy_value }),
            rows: plain_rows(&r.state.lower_bounds),
        });
    }
    let p = linear(doc)?;
    let cfg = sddp_config(&a.run, doc, a.paths, a.z_alpha);
    let r = sddp::run(p, &cfg)?;
    Ok(Report {
        method: "sddp",
        seed: a.run.seed,
        config: json!({ "run": echo, "sddp": cfg }),
        stop_rule: stop_name(r.stop),
        iterations: r.iterations,
        lower_bound: Some(r.lower_bound),
        upper_bound: r.policy_value,
        x1: r.x1,
        statistical: r.upper,
        details: json!({ "instance_hash": oracle::instance_hash(p), "policy_value": r.policy_value }),
        rows: sddp_rows(&r.log),
    })
}

fn solve_eddp(a: &SolveArgs, doc: &ProblemDocument, echo: Value) -> Outcome<Report> {
    let p = linear(doc)?;
    let cfg = EddpConfig {
        epsilon: a.epsilon.unwrap_or(1e-2),
        max_iterations: a.run.iters,
        floor: a.run.floor.unwrap_or(0.0),
        ..EddpConfig::default()
    };
    let r = eddp::run_eddp(p, &cfg)?;
    Ok(Report {
        method: "eddp",
        seed: a.run.seed,
        config: json!({ "run": echo, "eddp": cfg }),
        stop_rule: if r.terminated { "saturated" } else { "iteration-limit" }.into(),
        iterations: r.iterations,
        lower_bound: Some(r.lower_bound),
        upper_bound: None,
        x1: r.x1.clone(),
        statistical: None,
        details: json!({
            "instance_hash": oracle::instance_hash(p),
            "k_bar": r.iteration_bound,
            "iterations_used": r.iterations,
            "gap_certificate": r.gap_bound,
            "certified_gap": r.certified_gap,
            "lipschitz_estimate": r.lipschitz,
            "diameter": r.diameter,
            "state_dim": r.state_dim,
            "terminated": r.terminated,
        }),
        rows: sddp_rows(&r.log),
    })
}

fn solve_dual(run: &RunArgs, doc: &ProblemDocument, penalty: Option<f64>, echo: Value) -> Outcome<Report> {
    let p = linear(doc)?;
    if !doc.risk.iter().all(|r| r.is_expectation()) {
        return Err(Failure::Validation("the dual solver is risk neutral".into()));
    }
    let cfg = SddpConfig {
        upper_bound: UpperBoundRule::Off,
        ..sddp_config(run, doc, 100, 2.0)
    };
    let dcfg = DualConfig {
        penalty,
        gap_tol: run.gap_tol.unwrap_or(1e-4),
        ..DualConfig::default()
    };
    let r = dualsddp::run_sandwich(p, &cfg, &dcfg)?;
    let x1 = sddp::solve_stage(p, &r.primal, 0, 0, &[])?.x;
    Ok(Report {
        method: "dual",
        seed: run.seed,
        config: json!({ "run": echo, "sddp": cfg, "dual": dcfg }),
        stop_rule: if r.converged { "gap" } else { "iteration-limit" }.into(),
        iterations: r.rows.len(),
        lower_bound: Some(r.lower_bound),
        upper_bound: Some(r.upper_bound),
        x1,
        statistical: None,
        details: json!({
            "instance_hash": oracle::instance_hash(p),
            "penalty": r.penalty,
            "gap": r.upper_bound - r.lower_bound,
            "converged": r.converged,
        }),
        rows: bound_rows(&r.rows),
    })
}

fn solve_dsa(a: &SolveArgs, doc: &ProblemDocument, echo: Value) -> Outcome<Report> {
    let prob = doc.dsa_problem().map_err(Failure::Validation)?;
    let t_len = prob.horizon();
    let mut loops = if a.loops.is_empty() {
        (0..t_len).map(|t| if t == 0 { 200 } else { 20 }).collect()
    } else {
        a.loops.clone()
    };
    for (i, n) in [a.n1, a.n2, a.n3].into_iter().enumerate() {
        if let Some(n) = n {
            if i >= loops.len() {
                return Err(Failure::Usage(format!("--n{} given for a {t_len}-stage problem", i + 1)));
            }
            loops[i] = n;
        }
    }
    if loops.len() != t_len {
        return Err(Failure::Usage(format!("{} loop counts for {t_len} stages", loops.len())));
    }
    let mode = match a.mode {
        Mode::General => ConvexityMode::General,
        Mode::Strong => ConvexityMode::Strong,
    };
    let schedule = DsaSchedule::from_data(&prob, loops, mode);
    let r = dsa::dsa_solve(&prob, &schedule, a.run.seed).map_err(|e| Failure::Validation(e.to_string()))?;
    Ok(Report {
        method: "dsa",
        seed: a.run.seed,
        config: json!({ "run": echo, "schedule": schedule }),
        stop_rule: "loops-completed".into(),
        iterations: schedule.loops[0],
        lower_bound: None,
        upper_bound: None,
        x1: r.x1.clone(),
        statistical: None,
        details: json!({
            "objective": r.objective,
            "residual": r.residual,
            "samples": r.samples,
            "dual_clips": r.dual_clips,
            "spdt_steps": r.spdt_steps,
        }),
        rows: Vec::new(),
    })
}

fn stationary_problem(a: &SolveArgs, doc: &ProblemDocument) -> Outcome<StationaryProblem> {
    let mut p = doc.stationary().map_err(Failure::Validation)?;
    if let Some(g) = a.gamma {
        p.gamma = g;
    }
    if let Some(per) = a.period {
        if p.blocks.len() == 1 {
            p.blocks = vec![p.blocks[0].clone(); per];
        } else if p.blocks.len() != per {
            return Err(Failure::Validation(format!("--period {per} but the file has {} blocks", p.blocks.len())));
        }
    }
    let issues = p.validate();
    if !issues.is_empty() {
        return Err(Failure::Validation(issues.join("; ")));
    }
    Ok(p)
}

fn solve_horizon(a: &SolveArgs, doc: &ProblemDocument, echo: Value) -> Outcome<Report> {
    let p = stationary_problem(a, doc)?;
    let cfg = HorizonConfig {
        epsilon: a.epsilon.unwrap_or(1e-2),
        max_iterations: a.run.iters,
        seed: a.run.seed,
        floor: a.run.floor,
        ..HorizonConfig::default()
    };
    let r = if a.method == Method::Stationary {
        horizon::stationary_solve(&p, &cfg)?
    } else {
        horizon::periodic_solve(&p, &cfg)?
    };
    let ub = if p.period() == 1 {
        Some(horizon::stationary_upper_bound(&p, &r.state, cfg.epsilon, a.paths, a.z_alpha, a.run.seed)?)
    } else {
        None
    };
    let lbs: Vec<f64> = r.log.iter().map(|l| l.lower_bound).collect();
    Ok(Report {
        method: a.method.name(),
        seed: a.run.seed,
        config: json!({ "run": echo, "horizon": cfg, "gamma": p.gamma, "period": p.period() }),
        stop_rule: stop_name(r.stop),
        iterations: r.log.len(),
        lower_bound: Some(r.lower_bound),
        upper_bound: None,
        x1: p.x1.clone(),
        statistical: ub,
        details: json!({ "truncation_horizon": r.horizon, "kappa": r.kappa }),
        rows: plain_rows(&lbs),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn write_report(out: &Path, rep: &Report, elapsed: f64) -> Outcome<()> {
    fs::create_dir_all(out).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", out.display())))?;
    let mut w = csv::Writer::from_path(out.join("iterations.csv"))
        .map_err(|e| Failure::Usage(format!("cannot write iterations.csv: {e}")))?;
    let fail = |e: csv::Error| Failure::Usage(format!("cannot write iterations.csv: {e}"));
    w.write_record(["iteration", "lower_bound", "dual_upper_bound", "wall_time", "cuts"]).map_err(fail)?;
    for r in &rep.rows {
        w.write_record([
            r.iteration.to_string(),
            format!("{}", r.lower_bound),
            fmt_opt(r.dual_upper_bound),
            fmt_opt(r.elapsed),
            r.cuts.map(|c| c.to_string()).unwrap_or_default(),
        ])
        .map_err(fail)?;
    }
    w.flush().map_err(|e| Failure::Usage(e.to_string()))?;
    let statistical = rep.statistical.as_ref().map(|s| {
        json!({
            "mean": s.mean,
            "std_error": s.std_error,
            "paths": s.paths,
            "z_alpha": s.z_alpha,
            "edge": s.edge,
        })
    });
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let summary = json!({
        "method": rep.method,
        "seed": rep.seed,
        "streams": ["forward-path", "upper-bound", "trial", "saa", "k-means", "dsa"],
        "config": rep.config,
        "stop_rule": rep.stop_rule,
        "iterations": rep.iterations,
        "lower_bound": rep.lower_bound,
        "upper_bound": rep.upper_bound,
        "x1": rep.x1,
        "statistical_upper_bound": statistical,
        "details": rep.details,
        "timestamp": now,
        "elapsed_seconds": elapsed,
    });
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    fs::write(out.join("summary.json"), text).map_err(|e| Failure::Usage(format!("cannot write summary.json: {e}")))
}

fn print_report(rep: &Report) {
    for r in &rep.rows {
        match r.dual_upper_bound {
            Some(u) => println!("iter {:>5}  LB {:>16.9}  UB {:>16.9}", r.iteration, r.lower_bound, u),
            None => println!("iter {:>5}  LB {:>16.9}", r.iteration, r.lower_bound),
        }
    }
    println!("method      {}", rep.method);
    println!("stop        {}", rep.stop_rule);
    println!("iterations  {}", rep.iterations);
    if let Some(lb) = rep.lower_bound {
        println!("lower bound {lb:.9}");
    }
    if let Some(ub) = rep.upper_bound {
        println!("upper bound {ub:.9}");
    }
    if let Some(s) = &rep.statistical {
        println!("statistical {:.9} +- {:.9} (edge {:.9}, {} paths)", s.mean, s.std_error, s.edge, s.paths);
    }
    if let Some(o) = rep.details.get("objective") {
        println!("objective   {o}");
    }
    println!("x1          {:?}", rep.x1);
}

fn cmd_solve(a: &SolveArgs) -> Outcome<()> {
    let clock = Instant::now();
    let doc = load(&a.run)?;
    let mut echo = run_echo(&a.run);
    echo["method"] = json!(a.method.name());
    echo["paths"] = json!(a.paths);
    echo["z_alpha"] = json!(a.z_alpha);
    let rep = match a.method {
        Method::Sddp => solve_sddp(a, &doc, echo)?,
        Method::Eddp => solve_eddp(a, &doc, echo)?,
        Method::Dual => solve_dual(&a.run, &doc, a.penalty, echo)?,
        Method::Dsa => solve_dsa(a, &doc, echo)?,
        Method::Stationary | Method::Periodic => solve_horizon(a, &doc, echo)?,
    };
    print_report(&rep);
    write_report(&a.run.out, &rep, clock.elapsed().as_secs_f64())
}

fn cmd_simulate(a: &SimulateArgs) -> Outcome<()> {
    if a.paths < 2 {
        return Err(Failure::Usage("--paths must be at least 2".into()));
    }
    let clock = Instant::now();
    let doc = load(&a.run)?;
    let echo = run_echo(&a.run);
    let rep = if let (None, Some(socp)) = (&doc.problem, &doc.soc) {
        let cfg = soc_config(&a.run, &doc);
        let r = soc::run_soc(socp, &cfg)?;
        let ub = soc::risk_upper_bound(socp, &cfg.psi, &r.state, a.paths, a.z_alpha, a.run.seed)?;
        Report {
            method: "simulate",
            seed: a.run.seed,
            config: json!({ "run": echo, "soc": cfg, "paths": a.paths, "z_alpha": a.z_alpha }),
            stop_rule: stop_name(r.stop),
            iterations: r.iterations,
            lower_bound: Some(r.lower_bound),
            upper_bound: None,
            x1: r.u1,
            statistical: Some(ub),
            details: json!({ "problem_kind": "control" }),
            rows: plain_rows(&r.state.lower_bounds),
        }
    } else {
        let p = linear(&doc)?;
        if !doc.risk.iter().all(|r| r.is_expectation()) {
            return Err(Failure::Validation(
                "statistical bounds of linear problems are risk neutral; use a control block for risk".into(),
            ));
        }
        let cfg = SddpConfig {
            upper_bound: UpperBoundRule::Off,
            ..sddp_config(&a.run, &doc, a.paths, a.z_alpha)
        };
        let r = sddp::run(p, &cfg)?;
        let ub = sddp::statistical_upper_bound(p, &r.state, a.paths, a.z_alpha, a.run.seed)?;
        Report {
            method: "simulate",
            seed: a.run.seed,
            config: json!({ "run": echo, "sddp": cfg, "paths": a.paths, "z_alpha": a.z_alpha }),
            stop_rule: stop_name(r.stop),
            iterations: r.iterations,
            lower_bound: Some(r.lower_bound),
            upper_bound: None,
            x1: r.x1,
            statistical: Some(ub),
            details: json!({ "instance_hash": oracle::instance_hash(p) }),
            rows: sddp_rows(&r.log),
        }
    };
    print_report(&rep);
    write_report(&a.run.out, &rep, clock.elapsed().as_secs_f64())
}

fn cmd_bound(a: &RunArgs) -> Outcome<()> {
    let clock = Instant::now();
    let doc = load(a)?;
    let mut echo = run_echo(a);
    echo["method"] = json!("dual");
    let rep = solve_dual(a, &doc, None, echo)?;
    println!("{:>6} {:>18} {:>18} {:>14}", "iter", "LB", "UB", "gap");
    for r in &rep.rows {
        let ub = r.dual_upper_bound.unwrap_or(f64::NAN);
        println!("{:>6} {:>18.9} {:>18.9} {:>14.3e}", r.iteration, r.lower_bound, ub, ub - r.lower_bound);
    }
    write_report(&a.out, &rep, clock.elapsed().as_secs_f64())
}

fn cmd_fit(a: &FitArgs) -> Outcome<()> {
    let file = fs::File::open(&a.series).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", a.series.display())))?;
    let rows = scen::read_series_csv(file).map_err(|e| Failure::Validation(e.to_string()))?;
    let series = SampleSeries::from_periodic(&rows, a.period).map_err(|e| Failure::Validation(e.to_string()))?;
    if a.clusters == 0 {
        return Err(Failure::Usage("--clusters must be positive".into()));
    }
    let clusters: Vec<usize> = (0..a.period).map(|t| if t == 0 { 1 } else { a.clusters }).collect();
    let lattice = scen::fit_lattice(&series, &clusters, a.seed).map_err(|e| Failure::Validation(e.to_string()))?;
    let text = serde_json::to_string_pretty(&io::lattice_json(&lattice)).expect("lattice serializes") + "\n";
    match &a.out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_oracle(a: &OracleArgs) -> Outcome<()> {
    if !a.check {
        return Err(Failure::Usage("nothing to do; pass --check".into()));
    }
    let mut recs = oracle::frozen_fixtures();
    if let Some(name) = &a.fixture {
        recs.retain(|r| &r.name == name);
        if recs.is_empty() {
            return Err(Failure::Usage(format!("unknown fixture {name}")));
        }
    }
    let mut failed = 0;
    for rec in &recs {
        let c = oracle::check_fixture(rec).map_err(|e| Failure::Solver(format!("{}: {e}", rec.name)))?;
        let verdict = if c.passed { "PASS" } else { "FAIL" };
        println!(
            "{verdict} {:<20} frozen {:.9} extensive {:.9} sddp {:.9} hash {}",
            c.name,
            rec.value,
            c.extensive,
            c.sddp_lower_bound,
            if c.hash_ok { "ok" } else { "changed" }
        );
        if !c.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(Failure::Solver(format!("{failed} of {} fixtures failed", recs.len())));
    }
    Ok(())
}
