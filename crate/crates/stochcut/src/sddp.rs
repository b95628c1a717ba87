//! Risk-neutral (and weighted risk-adjusted) SDDP for stagewise-independent
//! and Markov-lattice problems.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cuts::{read_pools, write_pools, Cut, CutError, CutPool};
use crate::lp::{solve_with_cuts, CutLpSolution, LpError, LpStatus};
use crate::model::{Dependence, MultistageProblem, ScenarioTree, StageRealization, DEFAULT_TREE_CAP};
use crate::risk::CoherentRisk;
use crate::rng::{inverse_cdf, stream_rng, Stream};

#[derive(Debug, thiserror::Error)]
pub enum SddpError {
    #[error("stage {stage}, realization {realization}: stage LP infeasible at trial point {trial:?}")]
    Infeasible {
        stage: usize,
        realization: usize,
        trial: Vec<f64>,
    },
    #[error("stage {stage}, realization {realization}: stage LP unbounded")]
    Unbounded { stage: usize, realization: usize },
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Cut(#[from] CutError),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, SddpError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpperBoundRule {
    /// Exact policy evaluation when the tree fits the cap, else statistical.
    Auto,
    ExactPolicy,
    Statistical,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stabilization {
    pub window: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SddpConfig {
    pub max_iterations: usize,
    pub forward_paths: usize,
    pub upper_bound_paths: usize,
    pub z_alpha: f64,
    pub seed: u64,
    pub gap_tol: Option<f64>,
    pub stabilization: Option<Stabilization>,
    pub floor: f64,
    pub upper_bound: UpperBoundRule,
    pub tree_cap: usize,
    /// Empty: risk neutral. One entry: shared by every stage. Otherwise one
    /// entry per stage; entry t aggregates the outcomes of stage t.
    pub risk: Vec<CoherentRisk>,
}

impl Default for SddpConfig {
    fn default() -> Self {
        SddpConfig {
            max_iterations: 500,
            forward_paths: 1,
            upper_bound_paths: 100,
            z_alpha: 2.0,
            seed: 0,
            gap_tol: Some(1e-6),
            stabilization: Some(Stabilization {
                window: 20,
                threshold: 1e-6,
            }),
            floor: 0.0,
            upper_bound: UpperBoundRule::Auto,
            tree_cap: DEFAULT_TREE_CAP,
            risk: Vec::new(),
        }
    }
}

impl SddpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.upper_bound_paths < 2 {
            return Err(SddpError::Invalid("upper-bound paths must be at least 2".into()));
        }
        if !(self.z_alpha > 0.0) {
            return Err(SddpError::Invalid("z_alpha must be positive".into()));
        }
        if self.forward_paths == 0 {
            return Err(SddpError::Invalid("need at least one forward path".into()));
        }
        for r in &self.risk {
            r.validate().map_err(|e| SddpError::Invalid(e.to_string()))?;
        }
        Ok(())
    }
}

/// Risk measure applied to the outcomes of stage t.
pub(crate) fn risk_at(risks: &[CoherentRisk], t: usize) -> CoherentRisk {
    match risks.len() {
        0 => CoherentRisk::Expectation,
        1 => risks[0],
        _ => risks[t],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveState {
    /// `pools[t][node]` approximates the cost-to-go after stage t.
    pub pools: Vec<Vec<CutPool>>,
    pub iteration: usize,
    pub lower_bounds: Vec<f64>,
    pub seed: u64,
    /// Forward paths drawn so far; the next path uses this stream index.
    pub paths_drawn: u64,
    pub trial_log: Vec<Vec<Vec<f64>>>,
}

impl SolveState {
    pub fn new(problem: &MultistageProblem, floor: f64, seed: u64) -> Self {
        let t_len = problem.horizon();
        let pools = (0..t_len.saturating_sub(1))
            .map(|t| {
                let n = problem.stages[t].n();
                match &problem.dependence {
                    Dependence::StagewiseIndependent => vec![CutPool::with_floor(t, None, n, floor)],
                    Dependence::MarkovLattice(_) => (0..problem.stages[t].realizations.len())
                        .map(|i| CutPool::with_floor(t, Some(i), n, floor))
                        .collect(),
                }
            })
            .collect();
        SolveState {
            pools,
            iteration: 0,
            lower_bounds: Vec::new(),
            seed,
            paths_drawn: 0,
            trial_log: Vec::new(),
        }
    }

    pub fn cut_counts(&self) -> Vec<usize> {
        self.pools.iter().map(|ps| ps.iter().map(|p| p.len()).sum()).collect()
    }

    pub fn all_pools(&self) -> impl Iterator<Item = &CutPool> {
        self.pools.iter().flatten()
    }

    pub fn max_gradient_norm(&self) -> f64 {
        self.all_pools().map(|p| p.max_gradient_norm()).fold(0.0, f64::max)
    }

    /// Text checkpoint: header comments with counters, then the pools.
    pub fn to_checkpoint(&self) -> String {
        let mut s = format!(
            "# checkpoint iteration {} seed {} paths {} stages {}\n",
            self.iteration,
            self.seed,
            self.paths_drawn,
            self.pools.len()
        );
        s.push_str("# lower-bounds");
        for v in &self.lower_bounds {
            s.push_str(&format!(" {v:?}"));
        }
        s.push('\n');
        s.push_str(&write_pools(self.all_pools()));
        s
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let bad = |m: &str| SddpError::Invalid(format!("checkpoint: {m}"));
        let mut lines = text.lines();
        let head: Vec<&str> = lines.next().ok_or_else(|| bad("empty"))?.split_whitespace().collect();
        if head.len() != 10 || head[1] != "checkpoint" {
            return Err(bad("missing header"));
        }
        let num = |i: usize| head[i].parse::<u64>().map_err(|_| bad("bad counter"));
        let (iteration, seed, paths_drawn, stages) = (num(3)? as usize, num(5)?, num(7)?, num(9)? as usize);
        let lb_line = lines.next().ok_or_else(|| bad("missing lower bounds"))?;
        let lower_bounds = lb_line
            .trim_start_matches("# lower-bounds")
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| bad("bad lower bound")))
            .collect::<Result<Vec<_>>>()?;
        let mut pools: Vec<Vec<CutPool>> = vec![Vec::new(); stages];
        for p in read_pools(text)? {
            let t = p.stage;
            if t >= stages {
                return Err(bad("pool stage out of range"));
            }
            pools[t].push(p);
        }
        for ps in pools.iter_mut() {
            ps.sort_by_key(|p| p.node);
        }
        Ok(SolveState {
            pools,
            iteration,
            lower_bounds,
            seed,
            paths_drawn,
            trial_log: Vec::new(),
        })
    }
}

/// Pool index used by the stage-t LP of node/realization j.
fn pool_index(problem: &MultistageProblem, j: usize) -> usize {
    match problem.dependence {
        Dependence::StagewiseIndependent => 0,
        Dependence::MarkovLattice(_) => j,
    }
}

/// Stage-t LP of realization j against the cuts after stage t.
pub fn solve_stage(
    problem: &MultistageProblem,
    state: &SolveState,
    t: usize,
    j: usize,
    x_prev: &[f64],
) -> Result<CutLpSolution> {
    let st = &problem.stages[t];
    let pool = state.pools.get(t).map(|ps| &ps[pool_index(problem, j)]);
    solve_realization(&st.realizations[j], &st.lower, &st.upper, pool, t, j, x_prev)
}

pub(crate) fn solve_realization(
    r: &StageRealization,
    lower: &[f64],
    upper: &[f64],
    pool: Option<&CutPool>,
    t: usize,
    j: usize,
    x_prev: &[f64],
) -> Result<CutLpSolution> {
    let lp = crate::lp::LpProblem::new(r.cost.clone(), r.tech.clone(), r.rhs.clone(), lower.to_vec(), upper.to_vec());
    let sol = solve_with_cuts(&lp, &r.linking, x_prev, pool)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol),
        LpStatus::Infeasible => Err(SddpError::Infeasible {
            stage: t,
            realization: j,
            trial: x_prev.to_vec(),
        }),
        LpStatus::Unbounded => Err(SddpError::Unbounded { stage: t, realization: j }),
    }
}

/// `-Bᵀλ`.
pub(crate) fn link_gradient(linking: &DMatrix<f64>, duals: &[f64]) -> Vec<f64> {
    (0..linking.ncols())
        .map(|k| -(0..linking.nrows()).map(|i| linking[(i, k)] * duals[i]).sum::<f64>())
        .collect()
}

fn stage_cost(r: &StageRealization, x: &[f64]) -> f64 {
    r.cost.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// One solved child of a backward step.
#[derive(Debug, Clone)]
pub struct ChildSolve {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub x: Vec<f64>,
}

/// Solves every realization of stage t at `x_prev` in parallel.
pub fn solve_children(problem: &MultistageProblem, state: &SolveState, t: usize, x_prev: &[f64]) -> Result<Vec<ChildSolve>> {
    let st = &problem.stages[t];
    (0..st.realizations.len())
        .into_par_iter()
        .map(|j| {
            let s = solve_stage(problem, state, t, j, x_prev)?;
            Ok(ChildSolve {
                value: s.value,
                gradient: link_gradient(&st.realizations[j].linking, &s.duals),
                x: s.x,
            })
        })
        .collect()
}

/// `Σ w_j (v_j, g_j)` with `w_j = p_j ζ_j`, summed in index order.
pub(crate) fn weighted_cut(children: &[ChildSolve], probs: &[f64], risk: CoherentRisk) -> (f64, Vec<f64>) {
    let values: Vec<f64> = children.iter().map(|c| c.value).collect();
    let zeta = risk.subgradient(&values, probs);
    let dim = children.first().map(|c| c.gradient.len()).unwrap_or(0);
    let mut v = 0.0;
    let mut g = vec![0.0; dim];
    for ((c, p), z) in children.iter().zip(probs).zip(&zeta) {
        let w = p * z;
        if w == 0.0 {
            continue;
        }
        v += w * c.value;
        for (gk, ck) in g.iter_mut().zip(&c.gradient) {
            *gk += w * ck;
        }
    }
    (v, g)
}

/// Probabilities of the stage-t children seen from pool `node` of stage t-1.
pub(crate) fn child_probs(problem: &MultistageProblem, t: usize, node: usize) -> Vec<f64> {
    match &problem.dependence {
        Dependence::StagewiseIndependent => problem.stages[t].probs(),
        Dependence::MarkovLattice(l) => l.transitions[t - 1].row(node).iter().copied().collect(),
    }
}

/// Adds the cuts of stage t-1 at `trial`; returns the children solves.
pub fn backward_step(
    problem: &MultistageProblem,
    state: &mut SolveState,
    t: usize,
    trial: &[f64],
    risk: CoherentRisk,
) -> Result<Vec<ChildSolve>> {
    let children = solve_children(problem, state, t, trial)?;
    let iteration = state.iteration;
    for node in 0..state.pools[t - 1].len() {
        let probs = child_probs(problem, t, node);
        let (v, g) = weighted_cut(&children, &probs, risk);
        state.pools[t - 1][node].add_cut(Cut::at_point(v, g, trial, iteration))?;
    }
    Ok(children)
}

/// Backward pass over one path of trial points (`trial[t]` is the stage-t
/// decision, t = 0..T-2); risk-neutral when `risks` is empty.
pub fn backward_pass_weighted(
    problem: &MultistageProblem,
    state: &mut SolveState,
    trials: &[&[Vec<f64>]],
    risks: &[CoherentRisk],
) -> Result<()> {
    let t_len = problem.horizon();
    for t in (1..t_len).rev() {
        for path in trials {
            backward_step(problem, state, t, &path[t - 1], risk_at(risks, t))?;
        }
    }
    Ok(())
}

pub fn backward_pass(problem: &MultistageProblem, state: &mut SolveState, trial_points: &[Vec<f64>]) -> Result<()> {
    backward_pass_weighted(problem, state, &[trial_points], &[])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPath {
    /// Decisions x̄_t for every stage.
    pub states: Vec<Vec<f64>>,
    /// Realization (or lattice node) visited per stage.
    pub nodes: Vec<usize>,
    pub stage_costs: Vec<f64>,
    pub cost: f64,
    /// Equality-row duals of each visited stage LP.
    pub duals: Vec<Vec<f64>>,
}

impl ForwardPath {
    /// Trial points x̄_0..x̄_{T-2}.
    pub fn trial_points(&self) -> &[Vec<f64>] {
        &self.states[..self.states.len() - 1]
    }
}

/// Simulates the current policy along path `index` of `stream`.
pub fn simulate_path(problem: &MultistageProblem, state: &SolveState, stream: Stream, seed: u64, index: u64) -> Result<ForwardPath> {
    let mut rng = stream_rng(seed, stream, index);
    let t_len = problem.horizon();
    let mut path = ForwardPath {
        states: Vec::with_capacity(t_len),
        nodes: Vec::with_capacity(t_len),
        stage_costs: Vec::with_capacity(t_len),
        cost: 0.0,
        duals: Vec::with_capacity(t_len),
    };
    let mut node = 0;
    let mut x_prev: Vec<f64> = Vec::new();
    for t in 0..t_len {
        if t > 0 {
            let u: f64 = rng.gen();
            let probs = child_probs(problem, t, node);
            node = inverse_cdf(&probs, u);
        }
        let s = solve_stage(problem, state, t, node, &x_prev)?;
        let c = stage_cost(&problem.stages[t].realizations[node], &s.x);
        path.cost += c;
        path.stage_costs.push(c);
        path.nodes.push(node);
        path.duals.push(s.duals);
        path.states.push(s.x.clone());
        x_prev = s.x;
    }
    Ok(path)
}

/// Forward pass on the next forward-path stream index.
pub fn forward_pass(problem: &MultistageProblem, state: &mut SolveState) -> Result<ForwardPath> {
    let p = simulate_path(problem, state, Stream::ForwardPath, state.seed, state.paths_drawn)?;
    state.paths_drawn += 1;
    Ok(p)
}

/// Follows the lattice policy along observed data: each observation is
/// mapped to its nearest center, the stage LP uses `realize(t, ξ)`.
pub fn replay_path(
    problem: &MultistageProblem,
    state: &SolveState,
    observations: &[Vec<f64>],
    realize: impl Fn(usize, &[f64]) -> StageRealization,
) -> Result<ForwardPath> {
    let lat = problem
        .lattice()
        .ok_or_else(|| SddpError::Invalid("replay needs a lattice problem".into()))?;
    let t_len = problem.horizon();
    if observations.len() != t_len {
        return Err(SddpError::Invalid("one observation per stage required".into()));
    }
    let mut path = ForwardPath {
        states: Vec::new(),
        nodes: Vec::new(),
        stage_costs: Vec::new(),
        cost: 0.0,
        duals: Vec::new(),
    };
    let mut x_prev = Vec::new();
    for t in 0..t_len {
        let node = lat.nearest_node(t, &observations[t]);
        let r = realize(t, &observations[t]);
        let st = &problem.stages[t];
        let pool = state.pools.get(t).map(|ps| &ps[node]);
        let s = solve_realization(&r, &st.lower, &st.upper, pool, t, node, &x_prev)?;
        let c = stage_cost(&r, &s.x);
        path.cost += c;
        path.stage_costs.push(c);
        path.nodes.push(node);
        path.duals.push(s.duals);
        path.states.push(s.x.clone());
        x_prev = s.x;
    }
    Ok(path)
}

/// First-stage LP value with the current cuts.
pub fn lower_bound(problem: &MultistageProblem, state: &SolveState) -> Result<f64> {
    Ok(solve_stage(problem, state, 0, 0, &[])?.value)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpperBoundReport {
    pub mean: f64,
    pub std_error: f64,
    pub edge: f64,
    pub paths: usize,
    pub z_alpha: f64,
}

impl UpperBoundReport {
    pub fn from_samples(samples: &[f64], z_alpha: f64) -> Self {
        let m = samples.len();
        let mean = samples.iter().sum::<f64>() / m as f64;
        let var = if m > 1 {
            samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1) as f64
        } else {
            0.0
        };
        let std_error = (var / m as f64).sqrt();
        UpperBoundReport {
            mean,
            std_error,
            edge: mean + z_alpha * std_error,
            paths: m,
            z_alpha,
        }
    }
}

/// `M` independent policy simulations on the upper-bound stream.
pub fn statistical_upper_bound(
    problem: &MultistageProblem,
    state: &SolveState,
    paths: usize,
    z_alpha: f64,
    seed: u64,
) -> Result<UpperBoundReport> {
    if paths < 2 {
        return Err(SddpError::Invalid("upper bound needs at least 2 paths".into()));
    }
    let costs: Vec<f64> = (0..paths as u64)
        .into_par_iter()
        .map(|i| simulate_path(problem, state, Stream::UpperBound, seed, i).map(|p| p.cost))
        .collect::<Result<_>>()?;
    Ok(UpperBoundReport::from_samples(&costs, z_alpha))
}

/// Nested (risk-adjusted) value of the current policy over the full tree.
/// Risk-neutral when `risks` is empty; `None` when the tree exceeds `cap`.
pub fn exact_policy_value(
    problem: &MultistageProblem,
    state: &SolveState,
    risks: &[CoherentRisk],
    cap: usize,
) -> Result<Option<f64>> {
    if ScenarioTree::build(problem, 0, &[(0, 1.0)], cap).is_err() {
        return Ok(None);
    }
    policy_value_from(problem, state, risks, 0, 0, &[]).map(Some)
}

fn policy_value_from(
    problem: &MultistageProblem,
    state: &SolveState,
    risks: &[CoherentRisk],
    t: usize,
    j: usize,
    x_prev: &[f64],
) -> Result<f64> {
    let s = solve_stage(problem, state, t, j, x_prev)?;
    let c = stage_cost(&problem.stages[t].realizations[j], &s.x);
    if t + 1 == problem.horizon() {
        return Ok(c);
    }
    let kids = problem.children_of(t, j);
    let values: Vec<f64> = kids
        .par_iter()
        .map(|&(k, _)| policy_value_from(problem, state, risks, t + 1, k, &s.x))
        .collect::<Result<_>>()?;
    let probs: Vec<f64> = kids.iter().map(|k| k.1).collect();
    Ok(c + risk_at(risks, t + 1).evaluate(&values, &probs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopRule {
    Gap,
    Stabilization,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub lower_bound: f64,
    pub upper_bound: Option<f64>,
    pub elapsed: f64,
    pub cuts: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SddpResult {
    pub x1: Vec<f64>,
    pub lower_bound: f64,
    /// Exact policy value at the last evaluation, when computed.
    pub policy_value: Option<f64>,
    pub upper: Option<UpperBoundReport>,
    pub stop: StopRule,
    pub iterations: usize,
    pub log: Vec<IterationRecord>,
    pub state: SolveState,
}

pub fn run(problem: &MultistageProblem, config: &SddpConfig) -> Result<SddpResult> {
    let state = SolveState::new(problem, config.floor, config.seed);
    run_from(problem, config, state)
}

/// Continues a run from `state` (fresh or restored from a checkpoint).
pub fn run_from(problem: &MultistageProblem, config: &SddpConfig, mut state: SolveState) -> Result<SddpResult> {
    config.validate()?;
    let violations = problem.validate();
    if !violations.is_empty() {
        let msg: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(SddpError::Invalid(msg.join("; ")));
    }
    if config.risk.len() > 1 && config.risk.len() != problem.horizon() {
        return Err(SddpError::Invalid("risk list must have one entry or one per stage".into()));
    }
    let exact = match config.upper_bound {
        UpperBoundRule::Auto | UpperBoundRule::ExactPolicy => {
            ScenarioTree::build(problem, 0, &[(0, 1.0)], config.tree_cap).is_ok()
        }
        _ => false,
    };
    if config.upper_bound == UpperBoundRule::ExactPolicy && !exact {
        return Err(SddpError::Invalid(format!("scenario tree exceeds {} nodes", config.tree_cap)));
    }
    let clock = Instant::now();
    let mut log = Vec::new();
    let mut stop = StopRule::IterationLimit;
    let mut policy_value = None;
    while state.iteration < config.max_iterations {
        state.iteration += 1;
        let paths = (0..config.forward_paths)
            .map(|_| forward_pass(problem, &mut state))
            .collect::<Result<Vec<_>>>()?;
        let trials: Vec<&[Vec<f64>]> = paths.iter().map(|p| p.trial_points()).collect();
        backward_pass_weighted(problem, &mut state, &trials, &config.risk)?;
        for p in &paths {
            state.trial_log.push(p.trial_points().to_vec());
        }
        let raw = lower_bound(problem, &state)?;
        let lb = state.lower_bounds.last().map_or(raw, |&prev| raw.max(prev));
        state.lower_bounds.push(lb);
        let ub = if exact {
            exact_policy_value(problem, &state, &config.risk, config.tree_cap)?
        } else {
            None
        };
        if ub.is_some() {
            policy_value = ub;
        }
        log.push(IterationRecord {
            iteration: state.iteration,
            lower_bound: lb,
            upper_bound: ub,
            elapsed: clock.elapsed().as_secs_f64(),
            cuts: state.cut_counts(),
        });
        if let (Some(tol), Some(u)) = (config.gap_tol, ub) {
            if gap_closed(lb, u, tol) {
                stop = StopRule::Gap;
                break;
            }
        }
        if let Some(s) = config.stabilization {
            if stabilized(&state.lower_bounds, s) {
                stop = StopRule::Stabilization;
                break;
            }
        }
    }
    let first = solve_stage(problem, &state, 0, 0, &[])?;
    let upper = match config.upper_bound {
        UpperBoundRule::Off => None,
        _ if !config.risk.iter().all(|r| r.is_expectation()) => None,
        _ => Some(statistical_upper_bound(problem, &state, config.upper_bound_paths, config.z_alpha, config.seed)?),
    };
    Ok(SddpResult {
        x1: first.x,
        lower_bound: state.lower_bounds.last().copied().unwrap_or(first.value),
        policy_value,
        upper,
        stop,
        iterations: state.iteration,
        log,
        state,
    })
}

pub fn gap_closed(lb: f64, ub: f64, tol: f64) -> bool {
    ub - lb <= tol * ub.abs() + 1e-9
}

pub(crate) fn stabilized(history: &[f64], s: Stabilization) -> bool {
    let k = history.len();
    if k <= s.window {
        return false;
    }
    let now = history[k - 1];
    let then = history[k - 1 - s.window];
    now - then <= s.threshold * now.abs().max(1.0)
}
