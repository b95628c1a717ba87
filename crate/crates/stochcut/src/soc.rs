//! Cutting planes for stochastic optimal control over state-value functions,
//! the Ψ-risk variant, the Q-factor form, and the relabeling of an SOC
//! problem as a multistage linear program.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cuts::{dot, Cut, CutPool};
use crate::lp::{CutLp, CutsSolution, LpStatus};
use crate::model::{max_affine, AffinePiece, MultistageProblem, SocProblem, SocStage, StageBlock, StageRealization};
use crate::oracle;
use crate::risk::PsiForm;
use crate::rng::{inverse_cdf, stream_rng, Stream};
use crate::sddp::{gap_closed, Result, SddpError, StopRule, UpperBoundReport};

fn psi_at(psis: &[PsiForm], t: usize) -> PsiForm {
    match psis.len() {
        0 => PsiForm::IDENTITY,
        1 => psis[0],
        _ => psis[t],
    }
}

/// `pools[t]` approximates `V_t`, t = 0..T; `pools[T]` holds the terminal
/// pieces and is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct SocState {
    pub pools: Vec<CutPool>,
    pub iteration: usize,
    pub lower_bounds: Vec<f64>,
    pub seed: u64,
    pub paths_drawn: u64,
}

fn terminal_pool(problem: &SocProblem, stage: usize, dim: usize, width: usize) -> CutPool {
    let mut p = CutPool::empty(stage, None, width);
    if problem.terminal.is_empty() {
        p.add_cut(Cut::new(0.0, vec![0.0; width])).expect("zero cut");
    }
    for piece in &problem.terminal {
        let mut beta = piece.gx.clone();
        beta.resize(width, 0.0);
        debug_assert!(dim <= width);
        p.add_cut(Cut::new(piece.constant, beta)).expect("terminal piece");
    }
    p
}

impl SocState {
    pub fn new(problem: &SocProblem, floor: f64, seed: u64) -> Self {
        let n = problem.state_dim();
        let t_len = problem.horizon();
        let mut pools: Vec<CutPool> = (0..t_len).map(|t| CutPool::with_floor(t, None, n, floor)).collect();
        pools.push(terminal_pool(problem, t_len, n, n));
        SocState {
            pools,
            iteration: 0,
            lower_bounds: Vec::new(),
            seed,
            paths_drawn: 0,
        }
    }
}

/// Solution of the stage problem at state x.
#[derive(Debug, Clone)]
pub struct SocStageSolution {
    pub value: f64,
    /// Subgradient in x assembled from the LP duals.
    pub gradient: Vec<f64>,
    pub u: Vec<f64>,
    /// Minimizing θ of the Ψ form (0 in the risk-neutral case).
    pub theta: f64,
}

struct StageIndex {
    u: usize,
    cost_rows: Vec<Vec<usize>>,
    theta: Option<usize>,
}

/// `min_u Σ_j p_j Ψ(c_j(x,u) + γ V_{t+1}(A_j x + B_j u + b_j), θ)` as an LP.
fn build_stage<'p>(st: &SocStage, next: &'p CutPool, x: &[f64], psi: PsiForm, gamma: f64) -> (CutLp<'p>, StageIndex) {
    let m = st.control_dim();
    let mut lp = CutLp::new();
    let u = lp.add_vars(&vec![0.0; m], &st.u_lower, &st.u_upper);
    let lam = psi.lambda;
    let theta = if lam > 0.0 {
        Some(lp.add_var(lam, f64::NEG_INFINITY, f64::INFINITY))
    } else {
        None
    };
    let xv = DVector::from_column_slice(x);
    let mut cost_rows = Vec::with_capacity(st.realizations.len());
    for r in &st.realizations {
        let w_direct = r.prob * (1.0 - lam);
        let e = lp.add_var(w_direct, f64::NEG_INFINITY, f64::INFINITY);
        let mut rows = Vec::with_capacity(r.cost.len());
        for piece in &r.cost {
            // e - gu·u - s = const + gx·x
            let s = lp.add_var(0.0, 0.0, f64::INFINITY);
            let mut coeffs = vec![(e, 1.0), (s, -1.0)];
            coeffs.extend(piece.gu.iter().enumerate().filter(|(_, g)| **g != 0.0).map(|(k, g)| (u + k, -g)));
            rows.push(lp.add_row(coeffs, piece.constant + dot(&piece.gx, x)));
        }
        cost_rows.push(rows);
        let offset: Vec<f64> = (&r.a * &xv).iter().zip(&r.drift).map(|(a, b)| a + b).collect();
        let th = lp.add_epigraph(next, w_direct * gamma, (u..u + m).collect(), r.b.clone(), offset);
        if let Some(tv) = theta {
            // w ≥ e + γ θ_j - θ
            let w = lp.add_var(r.prob * lam / (1.0 - psi.alpha), 0.0, f64::INFINITY);
            let s = lp.add_var(0.0, 0.0, f64::INFINITY);
            lp.add_row(vec![(w, 1.0), (e, -1.0), (th, -gamma), (tv, 1.0), (s, -1.0)], 0.0);
        }
    }
    (lp, StageIndex { u, cost_rows, theta })
}

fn assemble_gradient(st: &SocStage, n: usize, next: &CutPool, idx: &StageIndex, s: &CutsSolution) -> Vec<f64> {
    let mut g = vec![0.0; n];
    for (j, r) in st.realizations.iter().enumerate() {
        for (piece, &row) in r.cost.iter().zip(&idx.cost_rows[j]) {
            let mu = s.row_duals[row];
            for k in 0..n {
                g[k] += mu * piece.gx[k];
            }
        }
        for &(ci, mu) in &s.cut_duals[j] {
            let beta = &next.cuts()[ci].beta;
            for k in 0..n {
                g[k] += mu * (0..n).map(|i| r.a[(i, k)] * beta[i]).sum::<f64>();
            }
        }
    }
    g
}

/// Stage LP for one block against the next approximation, with the next
/// value discounted by `gamma`; `t` only labels errors.
pub(crate) fn solve_block(st: &SocStage, next: &CutPool, t: usize, x: &[f64], psi: PsiForm, gamma: f64) -> Result<SocStageSolution> {
    let (lp, idx) = build_stage(st, next, x, psi, gamma);
    let s = lp.solve()?;
    match s.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(SddpError::Infeasible {
                stage: t,
                realization: 0,
                trial: x.to_vec(),
            })
        }
        LpStatus::Unbounded => return Err(SddpError::Unbounded { stage: t, realization: 0 }),
    }
    let m = st.control_dim();
    Ok(SocStageSolution {
        value: s.value,
        gradient: assemble_gradient(st, x.len(), next, &idx, &s),
        u: s.x[idx.u..idx.u + m].to_vec(),
        theta: idx.theta.map(|v| s.x[v]).unwrap_or(0.0),
    })
}

pub fn solve_soc_stage(problem: &SocProblem, state: &SocState, t: usize, x: &[f64], psi: PsiForm) -> Result<SocStageSolution> {
    solve_block(&problem.stages[t], &state.pools[t + 1], t, x, psi, 1.0)
}

/// Cut gradient by the explicit chain rule at the LP minimizer: active
/// cost pieces and active cuts, weighted by `p_j Ψ'(·, θ̄)`. `None` when an
/// active set is not unique, where the rule does not apply.
pub fn formula_gradient(problem: &SocProblem, state: &SocState, t: usize, x: &[f64], psi: PsiForm) -> Result<Option<Vec<f64>>> {
    const TIE: f64 = 1e-9;
    let sol = solve_soc_stage(problem, state, t, x, psi)?;
    let next = &state.pools[t + 1];
    let n = problem.state_dim();
    let mut g = vec![0.0; n];
    for r in &problem.stages[t].realizations {
        let (cv, k) = max_affine(&r.cost, x, &sol.u);
        let y = r.next_state(x, &sol.u);
        let (vv, ci) = next.evaluate(&y)?;
        let piece_ties = r.cost.iter().filter(|p| p.eval(x, &sol.u) >= cv - TIE).count();
        let cut_ties = next.cuts().iter().filter(|c| c.eval(&y) >= vv - TIE).count();
        let z = cv + vv;
        if piece_ties > 1 || cut_ties > 1 || (psi.lambda > 0.0 && (z - sol.theta).abs() < TIE) {
            return Ok(None);
        }
        let w = r.prob * psi.dz(z, sol.theta);
        let beta = &next.cuts()[ci].beta;
        for col in 0..n {
            let at: f64 = (0..n).map(|i| r.a[(i, col)] * beta[i]).sum();
            g[col] += w * (r.cost[k].gx[col] + at);
        }
    }
    Ok(Some(g))
}

/// Adds cuts at `trials[t]` (state x_t), t = T-1..0.
pub fn risk_soc_backward(problem: &SocProblem, psis: &[PsiForm], state: &mut SocState, trials: &[Vec<f64>]) -> Result<()> {
    for t in (0..problem.horizon()).rev() {
        let x = &trials[t];
        let s = solve_soc_stage(problem, state, t, x, psi_at(psis, t))?;
        let it = state.iteration;
        state.pools[t].add_cut(Cut::at_point(s.value, s.gradient, x, it))?;
    }
    Ok(())
}

pub fn soc_backward(problem: &SocProblem, state: &mut SocState, trials: &[Vec<f64>]) -> Result<()> {
    risk_soc_backward(problem, &[], state, trials)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SocPath {
    /// x_0..x_T.
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub realizations: Vec<usize>,
    /// Stage costs ĉ_t; the terminal cost is separate.
    pub stage_costs: Vec<f64>,
    pub terminal_cost: f64,
    pub thetas: Vec<f64>,
    pub cost: f64,
}

pub fn simulate_soc(problem: &SocProblem, state: &SocState, psis: &[PsiForm], stream: Stream, seed: u64, index: u64) -> Result<SocPath> {
    let mut rng = stream_rng(seed, stream, index);
    let t_len = problem.horizon();
    let mut x = problem.x1.clone();
    let mut path = SocPath {
        states: vec![x.clone()],
        controls: Vec::with_capacity(t_len),
        realizations: Vec::with_capacity(t_len),
        stage_costs: Vec::with_capacity(t_len),
        terminal_cost: 0.0,
        thetas: Vec::with_capacity(t_len),
        cost: 0.0,
    };
    for t in 0..t_len {
        let s = solve_soc_stage(problem, state, t, &x, psi_at(psis, t))?;
        let st = &problem.stages[t];
        let u_draw: f64 = rng.gen();
        let j = inverse_cdf(&st.probs(), u_draw);
        let r = &st.realizations[j];
        let c = r.stage_cost(&x, &s.u);
        path.cost += c;
        path.stage_costs.push(c);
        x = r.next_state(&x, &s.u);
        path.states.push(x.clone());
        path.controls.push(s.u);
        path.realizations.push(j);
        path.thetas.push(s.theta);
    }
    path.terminal_cost = problem.terminal_cost(&x);
    path.cost += path.terminal_cost;
    Ok(path)
}

pub fn soc_forward(problem: &SocProblem, state: &mut SocState, psis: &[PsiForm]) -> Result<SocPath> {
    let p = simulate_soc(problem, state, psis, Stream::ForwardPath, state.seed, state.paths_drawn)?;
    state.paths_drawn += 1;
    Ok(p)
}

/// `𝔳_t = Ψ(ĉ_t + 𝔳_{t+1}, θ̄_t)`, `𝔳_T = c_{T+1}(x_T)`.
pub fn path_upper_value(path: &SocPath, psis: &[PsiForm]) -> f64 {
    let mut v = path.terminal_cost;
    for t in (0..path.stage_costs.len()).rev() {
        v = psi_at(psis, t).value(path.stage_costs[t] + v, path.thetas[t]);
    }
    v
}

pub fn risk_upper_bound(
    problem: &SocProblem,
    psis: &[PsiForm],
    state: &SocState,
    paths: usize,
    z_alpha: f64,
    seed: u64,
) -> Result<UpperBoundReport> {
    if paths < 2 {
        return Err(SddpError::Invalid("upper bound needs at least 2 paths".into()));
    }
    let v: Vec<f64> = (0..paths as u64)
        .into_par_iter()
        .map(|i| simulate_soc(problem, state, psis, Stream::UpperBound, seed, i).map(|p| path_upper_value(&p, psis)))
        .collect::<Result<_>>()?;
    Ok(UpperBoundReport::from_samples(&v, z_alpha))
}

/// Control chosen by the current approximations at (t, x).
pub fn policy_control(problem: &SocProblem, state: &SocState, psis: &[PsiForm], t: usize, x: &[f64]) -> Result<Vec<f64>> {
    Ok(solve_soc_stage(problem, state, t, x, psi_at(psis, t))?.u)
}

pub fn soc_lower_bound(problem: &SocProblem, state: &SocState, psis: &[PsiForm]) -> Result<f64> {
    Ok(solve_soc_stage(problem, state, 0, &problem.x1, psi_at(psis, 0))?.value)
}

/// Nested value of the current policy over the full scenario tree.
pub fn soc_policy_value(problem: &SocProblem, state: &SocState, psis: &[PsiForm], cap: usize) -> Result<f64> {
    let risks: Vec<_> = psis.iter().map(|p| p.risk()).collect();
    let policy = |t: usize, x: &[f64]| policy_control(problem, state, psis, t, x).expect("policy LP");
    oracle::soc_policy_nested_value(problem, &risks, &policy, cap).map_err(|e| SddpError::Invalid(e.to_string()))
}

#[derive(Debug, Clone, Serialize)]
pub struct SocConfig {
    pub max_iterations: usize,
    pub seed: u64,
    pub gap_tol: Option<f64>,
    pub floor: f64,
    /// Empty: risk neutral; one entry shared; else one per stage.
    pub psi: Vec<PsiForm>,
    pub tree_cap: usize,
}

impl Default for SocConfig {
    fn default() -> Self {
        SocConfig {
            max_iterations: 500,
            seed: 0,
            gap_tol: Some(1e-6),
            floor: 0.0,
            psi: Vec::new(),
            tree_cap: crate::model::DEFAULT_TREE_CAP,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SocResult {
    pub u1: Vec<f64>,
    pub lower_bound: f64,
    pub policy_value: Option<f64>,
    pub stop: StopRule,
    pub iterations: usize,
    pub state: SocState,
}

pub fn run_soc(problem: &SocProblem, config: &SocConfig) -> Result<SocResult> {
    let issues = problem.validate();
    if !issues.is_empty() {
        return Err(SddpError::Invalid(issues.join("; ")));
    }
    let mut state = SocState::new(problem, config.floor, config.seed);
    let mut stop = StopRule::IterationLimit;
    let mut policy_value = None;
    while state.iteration < config.max_iterations {
        state.iteration += 1;
        let path = soc_forward(problem, &mut state, &config.psi)?;
        risk_soc_backward(problem, &config.psi, &mut state, &path.states[..problem.horizon()])?;
        let raw = soc_lower_bound(problem, &state, &config.psi)?;
        let lb = state.lower_bounds.last().map_or(raw, |&p: &f64| p.max(raw));
        state.lower_bounds.push(lb);
        if let Some(tol) = config.gap_tol {
            if let Ok(v) = soc_policy_value(problem, &state, &config.psi, config.tree_cap) {
                policy_value = Some(v);
                if gap_closed(lb, v, tol) {
                    stop = StopRule::Gap;
                    break;
                }
            }
        }
    }
    let first = solve_soc_stage(problem, &state, 0, &problem.x1, psi_at(&config.psi, 0))?;
    Ok(SocResult {
        u1: first.u,
        lower_bound: *state.lower_bounds.last().unwrap_or(&first.value),
        policy_value,
        stop,
        iterations: state.iteration,
        state,
    })
}

/// Q-factor approximations: `pools[t]` over `(x, u)`, t = 0..T-1.
#[derive(Debug, Clone, PartialEq)]
pub struct QFactorState {
    pub pools: Vec<CutPool>,
    pub iteration: usize,
    pub seed: u64,
    pub paths_drawn: u64,
}

impl QFactorState {
    pub fn new(problem: &SocProblem, floor: f64, seed: u64) -> Self {
        let n = problem.state_dim();
        QFactorState {
            pools: problem
                .stages
                .iter()
                .enumerate()
                .map(|(t, s)| CutPool::with_floor(t, None, n + s.control_dim(), floor))
                .collect(),
            iteration: 0,
            seed,
            paths_drawn: 0,
        }
    }
}

/// `min_u Q̲_t(x, u)`: value, minimizer, and a subgradient in x.
pub fn q_min(problem: &SocProblem, q: &QFactorState, t: usize, x: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let st = &problem.stages[t];
    let (n, m) = (x.len(), st.control_dim());
    let pool = &q.pools[t];
    let mut lp = CutLp::new();
    let u = lp.add_vars(&vec![0.0; m], &st.u_lower, &st.u_upper);
    let map = DMatrix::from_fn(n + m, m, |i, k| if i == n + k { 1.0 } else { 0.0 });
    let mut offset = x.to_vec();
    offset.resize(n + m, 0.0);
    lp.add_epigraph(pool, 1.0, (u..u + m).collect(), map, offset);
    let s = lp.solve()?;
    if s.status != LpStatus::Optimal {
        return Err(SddpError::Invalid(format!("Q-factor stage {t} LP is {:?}", s.status)));
    }
    let mut g = vec![0.0; n];
    for &(ci, mu) in &s.cut_duals[0] {
        for k in 0..n {
            g[k] += mu * pool.cuts()[ci].beta[k];
        }
    }
    Ok((s.value, s.x[u..u + m].to_vec(), g))
}

fn terminal_value(problem: &SocProblem, y: &[f64]) -> (f64, Vec<f64>) {
    if problem.terminal.is_empty() {
        return (0.0, vec![0.0; y.len()]);
    }
    let (v, k) = max_affine(&problem.terminal, y, &[]);
    (v, problem.terminal[k].gx.clone())
}

/// Joint cuts `ℓ_t(x, u)` at the trial pairs, t = T-1..0.
pub fn qfactor_backward(problem: &SocProblem, q: &mut QFactorState, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<()> {
    let t_len = problem.horizon();
    for t in (0..t_len).rev() {
        let (x, u) = &pairs[t];
        let st = &problem.stages[t];
        let n = x.len();
        let m = u.len();
        let mut value = 0.0;
        let mut grad = vec![0.0; n + m];
        for r in &st.realizations {
            let (cv, k) = max_affine(&r.cost, x, u);
            let y = r.next_state(x, u);
            let (vv, gy) = if t + 1 == t_len {
                terminal_value(problem, &y)
            } else {
                let (v, _, g) = q_min(problem, q, t + 1, &y)?;
                (v, g)
            };
            value += r.prob * (cv + vv);
            for i in 0..n {
                let at: f64 = (0..n).map(|l| r.a[(l, i)] * gy[l]).sum();
                grad[i] += r.prob * (r.cost[k].gx[i] + at);
            }
            for i in 0..m {
                let bt: f64 = (0..n).map(|l| r.b[(l, i)] * gy[l]).sum();
                grad[n + i] += r.prob * (r.cost[k].gu[i] + bt);
            }
        }
        let mut point = x.clone();
        point.extend_from_slice(u);
        let it = q.iteration;
        q.pools[t].add_cut(Cut::at_point(value, grad, &point, it))?;
    }
    Ok(())
}

pub fn qfactor_forward(problem: &SocProblem, q: &mut QFactorState) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let mut rng = stream_rng(q.seed, Stream::ForwardPath, q.paths_drawn);
    q.paths_drawn += 1;
    let mut x = problem.x1.clone();
    let mut pairs = Vec::with_capacity(problem.horizon());
    for t in 0..problem.horizon() {
        let (_, u, _) = q_min(problem, q, t, &x)?;
        let st = &problem.stages[t];
        let j = inverse_cdf(&st.probs(), rng.gen());
        let next = st.realizations[j].next_state(&x, &u);
        pairs.push((x, u));
        x = next;
    }
    Ok(pairs)
}

/// Q-factor cutting planes for `iterations` forward/backward rounds;
/// returns `min_u Q̲_1(x_1, u)`.
pub fn run_qfactor(problem: &SocProblem, iterations: usize, floor: f64, seed: u64) -> Result<(f64, QFactorState)> {
    let mut q = QFactorState::new(problem, floor, seed);
    for _ in 0..iterations {
        q.iteration += 1;
        let pairs = qfactor_forward(problem, &mut q)?;
        qfactor_backward(problem, &mut q, &pairs)?;
    }
    let (v, _, _) = q_min(problem, &q, 0, &problem.x1)?;
    Ok((v, q))
}

/// The SOC problem as a multistage linear program with T+1 stages: stage 0
/// fixes x_1 and picks u_1; stage s >= 1 observes the stage-(s-1) noise,
/// pays its cost and picks u_{s+1}. Free variables are split into
/// nonnegative parts, the per-realization piece lists are padded by
/// repetition so every realization has the same shape.
pub fn to_multistage(problem: &SocProblem) -> MultistageProblem {
    let n = problem.state_dim();
    let t_len = problem.horizon();
    let inf = f64::INFINITY;
    // column layout per stage: [x+ (n), x- (n), u (m_s), e+, e-, piece slacks (K), f+, f-, terminal slacks]
    let m_of = |s: usize| if s < t_len { problem.stages[s].control_dim() } else { 0 };
    let k_of = |s: usize| if s == 0 { 0 } else { problem.stages[s - 1].realizations.iter().map(|r| r.cost.len()).max().unwrap_or(0) };
    let term_k = problem.terminal.len();
    let width = |s: usize| {
        let base = 2 * n + m_of(s);
        let cost = if s == 0 { 0 } else { 2 + k_of(s) };
        let term = if s == t_len && term_k > 0 { 2 + term_k } else { 0 };
        base + cost + term
    };
    let mut stages = Vec::with_capacity(t_len + 1);
    for s in 0..=t_len {
        let w = width(s);
        let m = m_of(s);
        let k = k_of(s);
        let mut lower = vec![0.0; w];
        let mut upper = vec![inf; w];
        for i in 0..m {
            let (lo, hi) = (problem.stages[s].u_lower[i], problem.stages[s].u_upper[i]);
            lower[2 * n + i] = lo;
            upper[2 * n + i] = hi;
        }
        let e0 = 2 * n + m;
        let f0 = e0 + if s == 0 { 0 } else { 2 + k };
        let rows = n + if s == 0 { 0 } else { k } + if s == t_len { term_k } else { 0 };
        let w_prev = if s == 0 { 0 } else { width(s - 1) };
        let mut cost = vec![0.0; w];
        if s > 0 {
            cost[e0] = 1.0;
            cost[e0 + 1] = -1.0;
        }
        if s == t_len && term_k > 0 {
            cost[f0] = 1.0;
            cost[f0 + 1] = -1.0;
        }
        let build = |real: Option<&crate::model::SocRealization>, prob: f64| {
            let mut tech = DMatrix::zeros(rows, w);
            let mut linking = DMatrix::zeros(rows, w_prev);
            let mut rhs = vec![0.0; rows];
            for i in 0..n {
                tech[(i, i)] = 1.0;
                tech[(i, n + i)] = -1.0;
            }
            match real {
                None => rhs[..n].copy_from_slice(&problem.x1),
                Some(r) => {
                    let m_prev = m_of(s - 1);
                    for i in 0..n {
                        for l in 0..n {
                            linking[(i, l)] = -r.a[(i, l)];
                            linking[(i, n + l)] = r.a[(i, l)];
                        }
                        for l in 0..m_prev {
                            linking[(i, 2 * n + l)] = -r.b[(i, l)];
                        }
                        rhs[i] = r.drift[i];
                    }
                    for q in 0..k {
                        let piece = &r.cost[q.min(r.cost.len() - 1)];
                        let row = n + q;
                        tech[(row, e0)] = 1.0;
                        tech[(row, e0 + 1)] = -1.0;
                        tech[(row, e0 + 2 + q)] = -1.0;
                        for l in 0..n {
                            linking[(row, l)] = -piece.gx[l];
                            linking[(row, n + l)] = piece.gx[l];
                        }
                        for l in 0..m_prev {
                            linking[(row, 2 * n + l)] = -piece.gu[l];
                        }
                        rhs[row] = piece.constant;
                    }
                }
            }
            if s == t_len {
                for (q, piece) in problem.terminal.iter().enumerate() {
                    let row = n + k + q;
                    tech[(row, f0)] = 1.0;
                    tech[(row, f0 + 1)] = -1.0;
                    tech[(row, f0 + 2 + q)] = -1.0;
                    for l in 0..n {
                        tech[(row, l)] = -piece.gx[l];
                        tech[(row, n + l)] = piece.gx[l];
                    }
                    rhs[row] = piece.constant;
                }
            }
            StageRealization {
                cost: cost.clone(),
                linking,
                tech,
                rhs,
                prob,
            }
        };
        let realizations = if s == 0 {
            vec![build(None, 1.0)]
        } else {
            problem.stages[s - 1].realizations.iter().map(|r| build(Some(r), r.prob)).collect()
        };
        stages.push(StageBlock { realizations, lower, upper });
    }
    MultistageProblem::stagewise_independent(stages)
}

/// Scalar inventory control: stock x, order u in [0, cap], demand D,
/// cost `max(c u + b (D - x - u), c u + h (x + u - D))`, `x' = x + u - D`.
pub fn inventory_soc(inst: &oracle::InventoryInstance, order_cap: f64) -> SocProblem {
    let stages = (0..inst.horizon())
        .map(|t| {
            let (c, b, h) = (inst.order_cost[t], inst.backorder[t], inst.holding[t]);
            crate::model::SocStage {
                realizations: inst.demand[t]
                    .iter()
                    .map(|&(d, p)| crate::model::SocRealization {
                        a: DMatrix::from_element(1, 1, 1.0),
                        b: DMatrix::from_element(1, 1, 1.0),
                        drift: vec![-d],
                        cost: vec![
                            AffinePiece {
                                constant: b * d,
                                gx: vec![-b],
                                gu: vec![c - b],
                            },
                            AffinePiece {
                                constant: -h * d,
                                gx: vec![h],
                                gu: vec![c + h],
                            },
                        ],
                        prob: p,
                    })
                    .collect(),
                u_lower: vec![0.0],
                u_upper: vec![order_cap],
            }
        })
        .collect();
    SocProblem {
        stages,
        terminal: Vec::new(),
        x1: vec![inst.x1],
    }
}
