//! SDDP on the Lagrangian dual of the linear multistage problem, giving a
//! deterministic upper bound.
//!
//! The dual recursion is written in the reduced-cost state
//! `ρ_{t-1} = c_{t-1} - A_{t-1}ᵀ π_{t-1}`:
//!
//! `V_t(ρ) = max_{π_t1..π_tN} Σ_j p_j [b_tj·π_tj + V_{t+1}(c_tj - A_tjᵀ π_tj)]
//!           + h_{t-1}(ρ - Σ_j p_j B_tjᵀ π_tj)`
//!
//! with `h(r) = min_{l <= x <= u} r·x` and `V_T = h_{T-1}`. The dual bound
//! is `max_π0 b_0·π_0 + V_1(c_0 - A_0ᵀ π_0)`. Each `V_t` is concave; pools
//! store minorants of `-V_t`, i.e. majorants of `V_t`.

use rand::Rng;
use serde::Serialize;

use crate::cuts::{Cut, CutPool};
use crate::lp::{CutLp, LpStatus};
use crate::model::{Dependence, MultistageProblem};
use crate::rng::{inverse_cdf, stream_rng, Stream};
use crate::sddp::{self, Result, SddpConfig, SddpError, SolveState};

/// Which points the dual backward pass linearizes at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DualTrial {
    /// Reduced costs built from the primal forward pass duals.
    PrimalDuals,
    /// States visited by a sampled forward pass of the dual policy.
    DualForward,
    Both,
}

#[derive(Debug, Clone, Serialize)]
pub struct DualConfig {
    /// Multiplier box `|π| <= penalty`; default `1e4 max|c|`.
    pub penalty: Option<f64>,
    pub trial: DualTrial,
    pub gap_tol: f64,
}

impl Default for DualConfig {
    fn default() -> Self {
        DualConfig {
            penalty: None,
            trial: DualTrial::Both,
            gap_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DualState {
    /// `pools[t-1]` bounds `-V_t`, t = 1..T-1.
    pub pools: Vec<CutPool>,
    pub penalty: f64,
    /// Constant majorants the pools start from.
    pub caps: Vec<f64>,
    pub iteration: usize,
    pub upper_bounds: Vec<f64>,
    /// Bound used for unbounded-above primal variables inside `h`.
    pub box_cap: f64,
}

fn big(v: f64, cap: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        cap
    }
}

impl DualState {
    pub fn new(problem: &MultistageProblem, penalty: Option<f64>) -> Result<Self> {
        if !matches!(problem.dependence, Dependence::StagewiseIndependent) {
            return Err(SddpError::Invalid("dual SDDP needs a stagewise-independent problem".into()));
        }
        let t_len = problem.horizon();
        let maxc = problem.max_abs_cost().max(1.0);
        let pen = penalty.unwrap_or(1e4 * maxc);
        let finite_max = problem
            .stages
            .iter()
            .flat_map(|s| s.lower.iter().chain(&s.upper))
            .filter(|v| v.is_finite())
            .fold(1.0f64, |a, v| a.max(v.abs()));
        let box_cap = pen * finite_max;
        // |h_s(r)| <= Σ_k M_k |r_k| with |r| bounded through |π| <= pen
        let h_bound = |s: usize| -> f64 {
            let st = &problem.stages[s];
            (0..st.n())
                .map(|k| {
                    let m = big(st.lower[k], box_cap).abs().max(big(st.upper[k], box_cap).abs());
                    let mut r = 0.0f64;
                    for real in &st.realizations {
                        let col: f64 = (0..real.m()).map(|i| real.tech[(i, k)].abs()).sum();
                        r = r.max(real.cost[k].abs() + pen * col);
                    }
                    if s + 1 < t_len {
                        let down = problem.stages[s + 1]
                            .realizations
                            .iter()
                            .map(|r| (0..r.m()).map(|i| r.linking[(i, k)].abs()).sum::<f64>())
                            .fold(0.0, f64::max);
                        r += pen * down;
                    }
                    m * r
                })
                .sum()
        };
        let b_bound = |s: usize| -> f64 {
            problem.stages[s]
                .realizations
                .iter()
                .map(|r| r.rhs.iter().map(|v| v.abs()).sum::<f64>() * pen)
                .fold(0.0, f64::max)
        };
        let mut caps = Vec::new();
        let mut pools = Vec::new();
        for t in 1..t_len {
            let cap: f64 = (t..t_len).map(b_bound).sum::<f64>() + (t - 1..t_len).map(h_bound).sum::<f64>();
            caps.push(cap);
            pools.push(CutPool::with_floor(t, None, problem.stages[t - 1].n(), -cap));
        }
        Ok(DualState {
            pools,
            penalty: pen,
            caps,
            iteration: 0,
            upper_bounds: Vec::new(),
            box_cap,
        })
    }

    /// True while some pool still holds only its constant cap.
    pub fn capped(&self) -> bool {
        self.pools.iter().any(|p| p.len() == 1)
    }
}

/// Solution of one dual stage problem at ρ.
#[derive(Debug, Clone)]
pub struct DualStageSolution {
    /// Approximate `V_t(ρ)` (a majorant of the true value).
    pub value: f64,
    /// Supergradient of the approximation in ρ.
    pub gradient: Vec<f64>,
    /// Multipliers per realization.
    pub pis: Vec<Vec<f64>>,
}

/// Adds `w_k <= l_k r_k`, `w_k <= u_k r_k` with `r = const + Σ coeff·vars`;
/// returns the row index pairs.
fn add_h_rows(
    lp: &mut CutLp<'_>,
    weight: f64,
    lower: &[f64],
    upper: &[f64],
    box_cap: f64,
    r_const: &[f64],
    r_terms: &[Vec<(usize, f64)>],
) -> Vec<(usize, usize)> {
    let mut rows = Vec::with_capacity(lower.len());
    for k in 0..lower.len() {
        let w = lp.add_var(-weight, f64::NEG_INFINITY, f64::INFINITY);
        let mut pair = [0usize; 2];
        for (slot, bound) in [lower[k], big(upper[k], box_cap)].into_iter().enumerate() {
            // w - bound·Σ coeff·var + s = bound·const
            let s = lp.add_var(0.0, 0.0, f64::INFINITY);
            let mut coeffs = vec![(w, 1.0), (s, 1.0)];
            if bound != 0.0 {
                coeffs.extend(r_terms[k].iter().map(|&(v, c)| (v, -bound * c)));
            }
            pair[slot] = lp.add_row(coeffs, bound * r_const[k]);
        }
        rows.push((pair[0], pair[1]));
    }
    rows
}

/// Dual stage problem of stage t (1..T-1) at the reduced-cost state ρ.
pub fn dual_stage_solve(problem: &MultistageProblem, ds: &DualState, t: usize, rho: &[f64]) -> Result<DualStageSolution> {
    let t_len = problem.horizon();
    let st = &problem.stages[t];
    let prev = &problem.stages[t - 1];
    let pen = ds.penalty;
    let mut lp = CutLp::new();
    let mut starts = Vec::with_capacity(st.realizations.len());
    for r in &st.realizations {
        let m = r.m();
        let cost: Vec<f64> = r.rhs.iter().map(|b| -r.prob * b).collect();
        starts.push(lp.add_vars(&cost, &vec![-pen; m], &vec![pen; m]));
    }
    // h_{t-1}(ρ - Σ p_j B_jᵀ π_j)
    let n_prev = prev.n();
    let mut terms: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_prev];
    for (j, r) in st.realizations.iter().enumerate() {
        for k in 0..n_prev {
            for i in 0..r.m() {
                let b = r.linking[(i, k)];
                if b != 0.0 {
                    terms[k].push((starts[j] + i, -r.prob * b));
                }
            }
        }
    }
    let h_rows = add_h_rows(&mut lp, 1.0, &prev.lower, &prev.upper, ds.box_cap, rho, &terms);
    for (j, r) in st.realizations.iter().enumerate() {
        let m = r.m();
        let n = r.n();
        if t + 1 < t_len {
            // ψ_j >= pool(c_j - A_jᵀ π_j)
            let map = -r.tech.transpose();
            lp.add_epigraph(&ds.pools[t], r.prob, (starts[j]..starts[j] + m).collect(), map, r.cost.clone());
        } else {
            let terms: Vec<Vec<(usize, f64)>> = (0..n)
                .map(|k| (0..m).filter(|&i| r.tech[(i, k)] != 0.0).map(|i| (starts[j] + i, -r.tech[(i, k)])).collect())
                .collect();
            add_h_rows(&mut lp, r.prob, &st.lower, &st.upper, ds.box_cap, &r.cost, &terms);
        }
    }
    let s = lp.solve()?;
    if s.status != LpStatus::Optimal {
        return Err(SddpError::Invalid(format!("dual stage {t} LP is {:?}", s.status)));
    }
    let gradient: Vec<f64> = h_rows
        .iter()
        .enumerate()
        .map(|(k, &(rl, ru))| -(s.row_duals[rl] * prev.lower[k] + s.row_duals[ru] * big(prev.upper[k], ds.box_cap)))
        .collect();
    let pis = starts
        .iter()
        .zip(&st.realizations)
        .map(|(&a, r)| s.x[a..a + r.m()].to_vec())
        .collect();
    Ok(DualStageSolution {
        value: -s.value,
        gradient,
        pis,
    })
}

/// `ρ = c - Aᵀ π` for realization j of stage t.
fn reduced_cost(problem: &MultistageProblem, t: usize, j: usize, pi: &[f64]) -> Vec<f64> {
    let r = &problem.stages[t].realizations[j];
    (0..r.n())
        .map(|k| r.cost[k] - (0..r.m()).map(|i| r.tech[(i, k)] * pi[i]).sum::<f64>())
        .collect()
}

/// First-stage dual value `max b_0·π_0 + V̄_1(c_0 - A_0ᵀ π_0)` and its π_0.
pub fn dual_upper_bound(problem: &MultistageProblem, ds: &DualState) -> Result<(f64, Vec<f64>)> {
    let r = &problem.stages[0].realizations[0];
    let pen = ds.penalty;
    let m = r.m();
    let mut lp = CutLp::new();
    let cost: Vec<f64> = r.rhs.iter().map(|b| -b).collect();
    let start = lp.add_vars(&cost, &vec![-pen; m], &vec![pen; m]);
    lp.add_epigraph(&ds.pools[0], 1.0, (start..start + m).collect(), -r.tech.transpose(), r.cost.clone());
    let s = lp.solve()?;
    if s.status != LpStatus::Optimal {
        return Err(SddpError::Invalid(format!("first-stage dual LP is {:?}", s.status)));
    }
    Ok((-s.value, s.x[start..start + m].to_vec()))
}

/// Adds one majorant of `V_t` at each trial state, t = T-1..1.
/// `trial[t-1]` is the state ρ̃_t (dimension of stage t-1).
pub fn dual_backward(problem: &MultistageProblem, ds: &mut DualState, trials: &[&[Vec<f64>]]) -> Result<()> {
    for t in (1..problem.horizon()).rev() {
        for path in trials {
            let rho = &path[t - 1];
            let s = dual_stage_solve(problem, ds, t, rho)?;
            let g: Vec<f64> = s.gradient.iter().map(|v| -v).collect();
            ds.pools[t - 1].add_cut(Cut::at_point(-s.value, g, rho, ds.iteration))?;
        }
    }
    Ok(())
}

/// Trial states from the equality duals of a primal forward path.
pub fn trials_from_primal(problem: &MultistageProblem, path: &sddp::ForwardPath) -> Vec<Vec<f64>> {
    (1..problem.horizon())
        .map(|t| reduced_cost(problem, t - 1, path.nodes[t - 1], &path.duals[t - 1]))
        .collect()
}

/// Sampled forward pass of the dual policy.
pub fn dual_forward(problem: &MultistageProblem, ds: &DualState, seed: u64, index: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = stream_rng(seed, Stream::Trial, index);
    let (_, pi0) = dual_upper_bound(problem, ds)?;
    let mut rho = reduced_cost(problem, 0, 0, &pi0);
    let mut out = vec![rho.clone()];
    for t in 1..problem.horizon() - 1 {
        let s = dual_stage_solve(problem, ds, t, &rho)?;
        let u: f64 = rng.gen();
        let j = inverse_cdf(&problem.stages[t].probs(), u);
        rho = reduced_cost(problem, t, j, &s.pis[j]);
        out.push(rho.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub iteration: usize,
    pub lower_bound: f64,
    pub dual_upper_bound: f64,
    pub gap: f64,
    /// The dual bound still rests on the initial cap.
    pub capped: bool,
    pub elapsed: f64,
}

#[derive(Debug, Clone)]
pub struct SandwichResult {
    pub rows: Vec<BoundRow>,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub penalty: f64,
    pub converged: bool,
    pub primal: SolveState,
    pub dual: DualState,
}

/// Primal SDDP and dual SDDP side by side until `UB - LB <= gap_tol` or
/// the iteration cap.
pub fn run_sandwich(problem: &MultistageProblem, cfg: &SddpConfig, dual_cfg: &DualConfig) -> Result<SandwichResult> {
    cfg.validate()?;
    let violations = problem.validate();
    if !violations.is_empty() {
        return Err(SddpError::Invalid(violations[0].to_string()));
    }
    let mut primal = SolveState::new(problem, cfg.floor, cfg.seed);
    let mut dual = DualState::new(problem, dual_cfg.penalty)?;
    let clock = std::time::Instant::now();
    let mut rows = Vec::new();
    let mut converged = false;
    while primal.iteration < cfg.max_iterations {
        primal.iteration += 1;
        dual.iteration += 1;
        let paths = (0..cfg.forward_paths)
            .map(|_| sddp::forward_pass(problem, &mut primal))
            .collect::<Result<Vec<_>>>()?;
        let trials: Vec<&[Vec<f64>]> = paths.iter().map(|p| p.trial_points()).collect();
        let mut dual_trials: Vec<Vec<Vec<f64>>> = Vec::new();
        if matches!(dual_cfg.trial, DualTrial::PrimalDuals | DualTrial::Both) {
            dual_trials.extend(paths.iter().map(|p| trials_from_primal(problem, p)));
        }
        if matches!(dual_cfg.trial, DualTrial::DualForward | DualTrial::Both) {
            for k in 0..cfg.forward_paths {
                let idx = (dual.iteration - 1) as u64 * cfg.forward_paths as u64 + k as u64;
                dual_trials.push(dual_forward(problem, &dual, cfg.seed, idx)?);
            }
        }
        sddp::backward_pass_weighted(problem, &mut primal, &trials, &[])?;
        let refs: Vec<&[Vec<f64>]> = dual_trials.iter().map(|v| v.as_slice()).collect();
        dual_backward(problem, &mut dual, &refs)?;
        let raw = sddp::lower_bound(problem, &primal)?;
        let lb = primal.lower_bounds.last().map_or(raw, |&p: &f64| p.max(raw));
        primal.lower_bounds.push(lb);
        let (raw_ub, _) = dual_upper_bound(problem, &dual)?;
        let ub = dual.upper_bounds.last().map_or(raw_ub, |&p: &f64| p.min(raw_ub));
        dual.upper_bounds.push(ub);
        let gap = ub - lb;
        rows.push(BoundRow {
            iteration: primal.iteration,
            lower_bound: lb,
            dual_upper_bound: ub,
            gap,
            capped: dual.capped(),
            elapsed: clock.elapsed().as_secs_f64(),
        });
        if gap <= dual_cfg.gap_tol {
            converged = true;
            break;
        }
    }
    Ok(SandwichResult {
        lower_bound: primal.lower_bounds.last().copied().unwrap_or(f64::NEG_INFINITY),
        upper_bound: dual.upper_bounds.last().copied().unwrap_or(f64::INFINITY),
        penalty: dual.penalty,
        converged,
        rows,
        primal,
        dual,
    })
}
