//! Discounted infinite-horizon and periodical control problems: shared
//! cut pools per phase, truncated forward simulation.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cuts::{Cut, CutPool};
use crate::lp::{CutLp, LpStatus};
use crate::model::{max_affine, SocStage};
use crate::risk::PsiForm;
use crate::rng::{inverse_cdf, stream_rng, Stream};
use crate::sddp::{stabilized, Result, SddpError, Stabilization, StopRule, UpperBoundReport};
use crate::soc::solve_block;

/// Stationary (p = 1) or periodical (p = blocks.len()) discounted problem.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryProblem {
    pub blocks: Vec<SocStage>,
    pub gamma: f64,
    /// Bound on |stage cost|; estimated over `state_box` when absent.
    pub kappa: Option<f64>,
    pub state_box: Option<(Vec<f64>, Vec<f64>)>,
    pub x1: Vec<f64>,
    pub psi: Option<PsiForm>,
}

impl StationaryProblem {
    pub fn period(&self) -> usize {
        self.blocks.len()
    }

    pub fn state_dim(&self) -> usize {
        self.x1.len()
    }

    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if self.blocks.is_empty() {
            issues.push("no blocks".into());
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            issues.push(format!("discount {} outside (0, 1)", self.gamma));
        }
        if self.kappa.is_none() && self.state_box.is_none() {
            issues.push("neither kappa nor a state box is given".into());
        }
        if let Some(k) = self.kappa {
            if !(k >= 0.0) {
                issues.push(format!("kappa {k} is negative"));
            }
        }
        for (i, b) in self.blocks.iter().enumerate() {
            let p: f64 = b.realizations.iter().map(|r| r.prob).sum();
            if (p - 1.0).abs() > 1e-9 {
                issues.push(format!("block {i}: probabilities sum to {p}"));
            }
            for r in &b.realizations {
                if r.a.nrows() != self.state_dim() || r.a.ncols() != self.state_dim() {
                    issues.push(format!("block {i}: A has the wrong shape"));
                }
            }
        }
        if let Some(psi) = self.psi {
            if !(0.0..=1.0).contains(&psi.lambda) || !(0.0..1.0).contains(&psi.alpha) {
                issues.push("psi parameters out of range".into());
            }
        }
        issues
    }

    /// κ as given, else `max |c_j(x, u)|` over the state box and control
    /// boxes: the maximum of each piece in closed form, the minimum of the
    /// max-of-affine cost by LP.
    pub fn kappa(&self) -> Result<f64> {
        if let Some(k) = self.kappa {
            return Ok(k);
        }
        let (lo, hi) = self
            .state_box
            .as_ref()
            .ok_or_else(|| SddpError::Invalid("kappa needs a state box".into()))?;
        let mut k: f64 = 0.0;
        for b in &self.blocks {
            let n = lo.len();
            let m = b.control_dim();
            for r in &b.realizations {
                for piece in &r.cost {
                    let mut top = piece.constant;
                    for i in 0..n {
                        top += (piece.gx[i] * lo[i]).max(piece.gx[i] * hi[i]);
                    }
                    for i in 0..m {
                        top += (piece.gu[i] * b.u_lower[i]).max(piece.gu[i] * b.u_upper[i]);
                    }
                    k = k.max(top.abs());
                }
                let mut lp = CutLp::new();
                let x = lp.add_vars(&vec![0.0; n], lo, hi);
                let u = lp.add_vars(&vec![0.0; m], &b.u_lower, &b.u_upper);
                let e = lp.add_var(1.0, f64::NEG_INFINITY, f64::INFINITY);
                for piece in &r.cost {
                    let s = lp.add_var(0.0, 0.0, f64::INFINITY);
                    let mut row = vec![(e, 1.0), (s, -1.0)];
                    row.extend((0..n).map(|i| (x + i, -piece.gx[i])));
                    row.extend((0..m).map(|i| (u + i, -piece.gu[i])));
                    lp.add_row(row, piece.constant);
                }
                let sol = lp.solve()?;
                if sol.status != LpStatus::Optimal {
                    return Err(SddpError::Invalid(format!("cost range LP is {:?}", sol.status)));
                }
                k = k.max(sol.value.abs());
            }
        }
        Ok(k)
    }
}

fn tail(gamma: f64, kappa: f64, t: i32) -> f64 {
    kappa * gamma.powi(t) / (1.0 - gamma)
}

/// Smallest T with `κ γ^T / (1-γ) <= ε`.
pub fn truncation_horizon(gamma: f64, kappa: f64, epsilon: f64) -> Result<usize> {
    if !(epsilon > 0.0) {
        return Err(SddpError::Invalid(format!("epsilon {epsilon} must be positive")));
    }
    if !(gamma > 0.0 && gamma < 1.0) || !(kappa >= 0.0) {
        return Err(SddpError::Invalid(format!("need 0 < gamma < 1 and kappa >= 0, got {gamma}, {kappa}")));
    }
    if tail(gamma, kappa, 0) <= epsilon {
        return Ok(0);
    }
    let guess = ((epsilon * (1.0 - gamma) / kappa).ln() / gamma.ln()).ceil();
    if !guess.is_finite() || guess > i32::MAX as f64 / 2.0 {
        return Err(SddpError::Invalid("truncation horizon overflows".into()));
    }
    let mut t = (guess as i32).max(1);
    while t > 0 && tail(gamma, kappa, t - 1) <= epsilon {
        t -= 1;
    }
    while tail(gamma, kappa, t) > epsilon {
        t += 1;
    }
    Ok(t as usize)
}

/// One cut pool per phase; phase i approximates V_i.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryState {
    pub pools: Vec<CutPool>,
    pub iteration: usize,
    pub lower_bounds: Vec<f64>,
    pub seed: u64,
    pub paths_drawn: u64,
}

impl StationaryState {
    pub fn new(problem: &StationaryProblem, floor: f64, seed: u64) -> Self {
        let n = problem.state_dim();
        StationaryState {
            pools: (0..problem.period()).map(|i| CutPool::with_floor(i, None, n, floor)).collect(),
            iteration: 0,
            lower_bounds: Vec::new(),
            seed,
            paths_drawn: 0,
        }
    }

    /// `V̲_phase(x)`.
    pub fn value(&self, phase: usize, x: &[f64]) -> f64 {
        self.pools[phase].value(x)
    }
}

fn psi_of(problem: &StationaryProblem) -> PsiForm {
    problem.psi.unwrap_or(PsiForm::IDENTITY)
}

/// Bellman LP of `phase` against the pool of the following phase.
pub fn stationary_stage(
    problem: &StationaryProblem,
    state: &StationaryState,
    phase: usize,
    x: &[f64],
) -> Result<crate::soc::SocStageSolution> {
    let next = (phase + 1) % problem.period();
    solve_block(&problem.blocks[phase], &state.pools[next], phase, x, psi_of(problem), problem.gamma)
}

/// Adds one cut to the pool of `phase` at x̃.
pub fn stationary_backward(problem: &StationaryProblem, state: &mut StationaryState, phase: usize, x: &[f64]) -> Result<()> {
    let s = stationary_stage(problem, state, phase, x)?;
    let it = state.iteration;
    state.pools[phase].add_cut(Cut::at_point(s.value, s.gradient, x, it))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncatedPath {
    /// x_1..x_{T+1}.
    pub states: Vec<Vec<f64>>,
    pub stage_costs: Vec<f64>,
    pub thetas: Vec<f64>,
    /// `Σ γ^{t-1} ĉ_t` over the T stages.
    pub cost: f64,
    /// Ψ recursion `𝔳_t = Ψ(ĉ_t + γ 𝔳_{t+1}, θ̄_t)`, `𝔳_{T+1} = 0`.
    pub upper_value: f64,
    /// Index into `states` of the trial point for the next backward step.
    pub trial: usize,
}

impl TruncatedPath {
    /// Candidate trial states x_2..x_T (x_1 when T <= 1).
    pub fn candidates(&self) -> std::ops::Range<usize> {
        let t_len = self.stage_costs.len();
        if t_len <= 1 {
            0..1
        } else {
            1..t_len
        }
    }
}

/// Simulates `horizon` stages starting in `phase0` with the current policy
/// and picks one candidate trial state uniformly.
pub fn truncated_forward(
    problem: &StationaryProblem,
    state: &StationaryState,
    horizon: usize,
    phase0: usize,
    seed: u64,
    index: u64,
) -> Result<TruncatedPath> {
    let mut rng = stream_rng(seed, Stream::ForwardPath, index);
    let p = problem.period();
    let psi = psi_of(problem);
    let mut x = problem.x1.clone();
    let mut path = TruncatedPath {
        states: vec![x.clone()],
        stage_costs: Vec::with_capacity(horizon),
        thetas: Vec::with_capacity(horizon),
        cost: 0.0,
        upper_value: 0.0,
        trial: 0,
    };
    let mut discount = 1.0;
    for t in 0..horizon {
        let phase = (phase0 + t) % p;
        let s = stationary_stage(problem, state, phase, &x)?;
        let block = &problem.blocks[phase];
        let j = inverse_cdf(&block.probs(), rng.gen());
        let r = &block.realizations[j];
        let c = max_affine(&r.cost, &x, &s.u).0;
        path.cost += discount * c;
        discount *= problem.gamma;
        path.stage_costs.push(c);
        path.thetas.push(s.theta);
        x = r.next_state(&x, &s.u);
        path.states.push(x.clone());
    }
    let mut v = 0.0;
    for t in (0..horizon).rev() {
        v = psi.value(path.stage_costs[t] + problem.gamma * v, path.thetas[t]);
    }
    path.upper_value = v;
    let range = path.candidates();
    path.trial = range.start + rng.gen_range(0..range.len());
    Ok(path)
}

#[derive(Debug, Clone, Serialize)]
pub struct HorizonConfig {
    pub epsilon: f64,
    pub max_iterations: usize,
    pub seed: u64,
    /// Defaults to `-κ/(1-γ)`.
    pub floor: Option<f64>,
    pub stabilization: Option<Stabilization>,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        HorizonConfig {
            epsilon: 1e-2,
            max_iterations: 500,
            seed: 0,
            floor: None,
            stabilization: Some(Stabilization {
                window: 20,
                threshold: 1e-6,
            }),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HorizonRecord {
    pub iteration: usize,
    pub lower_bound: f64,
    pub path_cost: f64,
    pub trial_phase: usize,
}

#[derive(Debug, Clone)]
pub struct HorizonResult {
    /// `V̲_1(x_1)`.
    pub lower_bound: f64,
    pub horizon: usize,
    pub kappa: f64,
    pub stop: StopRule,
    pub log: Vec<HorizonRecord>,
    pub state: StationaryState,
}

/// Cyclic cutting planes over the p phase pools. For p = 1 this is the
/// stationary solver.
pub fn periodic_solve(problem: &StationaryProblem, config: &HorizonConfig) -> Result<HorizonResult> {
    let issues = problem.validate();
    if !issues.is_empty() {
        return Err(SddpError::Invalid(issues.join("; ")));
    }
    let kappa = problem.kappa()?;
    let horizon = truncation_horizon(problem.gamma, kappa, config.epsilon)?;
    let floor = config.floor.unwrap_or(-kappa / (1.0 - problem.gamma));
    let mut state = StationaryState::new(problem, floor, config.seed);
    let p = problem.period();
    let mut log = Vec::new();
    let mut stop = StopRule::IterationLimit;
    while state.iteration < config.max_iterations {
        state.iteration += 1;
        let path = truncated_forward(problem, &state, horizon, 0, state.seed, state.paths_drawn)?;
        state.paths_drawn += 1;
        let phase = path.trial % p;
        let trial = path.states[path.trial].clone();
        stationary_backward(problem, &mut state, phase, &trial)?;
        // keep the first-stage bound moving as well
        if phase != 0 || path.trial != 0 {
            stationary_backward(problem, &mut state, 0, &problem.x1)?;
        }
        let raw = stationary_stage(problem, &state, 0, &problem.x1)?.value;
        let lb = state.lower_bounds.last().map_or(raw, |&q: &f64| q.max(raw));
        state.lower_bounds.push(lb);
        log.push(HorizonRecord {
            iteration: state.iteration,
            lower_bound: lb,
            path_cost: path.cost,
            trial_phase: phase,
        });
        if let Some(s) = config.stabilization {
            if stabilized(&state.lower_bounds, s) {
                stop = StopRule::Stabilization;
                break;
            }
        }
    }
    Ok(HorizonResult {
        lower_bound: *state.lower_bounds.last().expect("at least one iteration"),
        horizon,
        kappa,
        stop,
        log,
        state,
    })
}

pub fn stationary_solve(problem: &StationaryProblem, config: &HorizonConfig) -> Result<HorizonResult> {
    if problem.period() != 1 {
        return Err(SddpError::Invalid(format!("stationary problem has period {}", problem.period())));
    }
    periodic_solve(problem, config)
}

/// Truncated path means with the ε tail added to the edge. Uses the Ψ
/// recursion when the problem is risk averse.
pub fn stationary_upper_bound(
    problem: &StationaryProblem,
    state: &StationaryState,
    epsilon: f64,
    paths: usize,
    z_alpha: f64,
    seed: u64,
) -> Result<UpperBoundReport> {
    if paths < 2 {
        return Err(SddpError::Invalid("upper bound needs at least 2 paths".into()));
    }
    let kappa = problem.kappa()?;
    let horizon = truncation_horizon(problem.gamma, kappa, epsilon)?;
    let v: Vec<f64> = (0..paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng_seed = stream_rng(seed, Stream::UpperBound, i);
            let index: u64 = rng_seed.gen();
            truncated_forward(problem, state, horizon, 0, seed, index).map(|p| p.upper_value)
        })
        .collect::<Result<_>>()?;
    let mut report = UpperBoundReport::from_samples(&v, z_alpha);
    report.edge += epsilon;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AffinePiece, SocRealization};
    use nalgebra::DMatrix;
    use proptest::{prop_assert, proptest};

    fn direct(gamma: f64, kappa: f64, eps: f64) -> usize {
        (0..).find(|&t| tail(gamma, kappa, t) <= eps).unwrap() as usize
    }

    #[test]
    fn truncation_examples() {
        assert_eq!(truncation_horizon(0.9, 1.0, 0.01).unwrap(), 66);
        assert_eq!(truncation_horizon(0.1, 1.0, 0.1).unwrap(), 2);
        assert_eq!(truncation_horizon(0.5, 1.0, 2.0).unwrap(), 0);
        assert!(truncation_horizon(0.5, 1.0, 0.0).is_err());
        assert!(truncation_horizon(1.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn truncation_matches_direct_search() {
        let mut rng = stream_rng(17, Stream::Saa, 0);
        for _ in 0..1000 {
            let g: f64 = rng.gen_range(0.01..0.995);
            let k: f64 = rng.gen_range(0.0..50.0);
            let e: f64 = 10f64.powf(rng.gen_range(-6.0..1.0));
            assert_eq!(truncation_horizon(g, k, e).unwrap(), direct(g, k, e), "{g} {k} {e}");
        }
    }

    proptest! {
        #[test]
        fn truncation_is_minimal(g in 0.01..0.999f64, k in 0.0..100.0f64, e in 1e-8..10.0f64) {
            let t = truncation_horizon(g, k, e).unwrap() as i32;
            prop_assert!(tail(g, k, t) <= e);
            prop_assert!(t == 0 || tail(g, k, t - 1) > e);
        }
    }

    fn constant_block(c: f64) -> SocStage {
        SocStage {
            realizations: vec![SocRealization {
                a: DMatrix::from_element(1, 1, 0.5),
                b: DMatrix::from_element(1, 1, 1.0),
                drift: vec![0.0],
                cost: vec![AffinePiece { constant: c, gx: vec![0.0], gu: vec![0.0] }],
                prob: 1.0,
            }],
            u_lower: vec![0.0],
            u_upper: vec![1.0],
        }
    }

    fn constant_problem(costs: &[f64], gamma: f64) -> StationaryProblem {
        StationaryProblem {
            blocks: costs.iter().map(|&c| constant_block(c)).collect(),
            gamma,
            kappa: None,
            state_box: Some((vec![-2.0], vec![2.0])),
            x1: vec![0.0],
            psi: None,
        }
    }

    #[test]
    fn zero_cost_gives_zero_cuts() {
        let p = constant_problem(&[0.0], 0.9);
        assert_eq!(p.kappa().unwrap(), 0.0);
        let r = stationary_solve(&p, &HorizonConfig { max_iterations: 10, ..Default::default() }).unwrap();
        assert_eq!(r.lower_bound, 0.0);
        assert!(r.state.pools[0].cuts().iter().all(|c| c.alpha == 0.0 && c.beta == vec![0.0]));
        let path = truncated_forward(&p, &r.state, 5, 0, 1, 0).unwrap();
        assert_eq!(path.cost, 0.0);
    }

    #[test]
    fn zero_discount_limit_is_single_stage() {
        let mut p = crate::fixtures::soc_scalar(1, &[(-0.5, 0.5), (0.5, 0.5)]);
        p.terminal.clear();
        let sp = StationaryProblem {
            blocks: p.stages.clone(),
            gamma: 1e-300,
            kappa: Some(10.0),
            state_box: None,
            x1: p.x1.clone(),
            psi: None,
        };
        let st = StationaryState::new(&sp, -10.0, 0);
        let s = stationary_stage(&sp, &st, 0, &[0.7]).unwrap();
        let soc = crate::soc::solve_soc_stage(&p, &crate::soc::SocState::new(&p, -10.0, 0), 0, &[0.7], PsiForm::IDENTITY).unwrap();
        assert!((s.value - soc.value).abs() < 1e-12);
        assert!((s.gradient[0] - soc.gradient[0]).abs() < 1e-12);
    }

    #[test]
    fn constant_cost_geometric_series() {
        let p = constant_problem(&[1.5], 0.8);
        let r = stationary_solve(&p, &HorizonConfig { epsilon: 1e-4, ..Default::default() }).unwrap();
        let exact = 1.5 / 0.2;
        assert!((r.lower_bound - exact).abs() < 1e-6, "{}", r.lower_bound);
        let path = truncated_forward(&p, &r.state, r.horizon, 0, 3, 0).unwrap();
        assert!((path.cost - exact).abs() <= 1e-4, "{}", path.cost);
        assert_eq!(path, truncated_forward(&p, &r.state, r.horizon, 0, 3, 0).unwrap());
    }

    #[test]
    fn alternating_costs() {
        let (c, g) = (2.0, 0.7);
        let p = constant_problem(&[0.0, c], g);
        let r = periodic_solve(&p, &HorizonConfig { epsilon: 1e-6, max_iterations: 200, ..Default::default() }).unwrap();
        let mut st = r.state.clone();
        for _ in 0..200 {
            stationary_backward(&p, &mut st, 1, &[0.0]).unwrap();
            stationary_backward(&p, &mut st, 0, &[0.0]).unwrap();
        }
        let v1 = st.value(0, &[0.0]);
        let v2 = st.value(1, &[0.0]);
        assert!((v1 - g * c / (1.0 - g * g)).abs() < 1e-6, "{v1}");
        assert!((v2 - c / (1.0 - g * g)).abs() < 1e-6, "{v2}");
        assert!((v2 - (c + g * v1)).abs() < 1e-6);
    }
}
