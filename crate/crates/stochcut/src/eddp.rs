//! Explorative dual dynamic programming: deterministic forward selection of
//! the candidate farthest from the saturated points, saturation bookkeeping,
//! and the distance-based stop rule.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::model::{Dependence, MultistageProblem};
use crate::sddp::{backward_step, lower_bound, solve_stage, IterationRecord, Result, SddpError, SolveState};
use crate::risk::CoherentRisk;

#[derive(Debug, Clone, Serialize)]
pub struct EddpConfig {
    pub epsilon: f64,
    /// Distinguishability tolerance; defaults to epsilon.
    pub delta: Option<f64>,
    /// Lipschitz estimate; defaults to the largest cut gradient norm seen.
    pub lipschitz: Option<f64>,
    /// Diameter of the state sets; defaults to the state-box diameter.
    pub diameter: Option<f64>,
    pub max_iterations: usize,
    pub floor: f64,
    /// Stop the forward step at the first stage whose chosen state is
    /// within delta of the saturated set.
    pub early_forward_stop: bool,
}

impl Default for EddpConfig {
    fn default() -> Self {
        EddpConfig {
            epsilon: 1e-3,
            delta: None,
            lipschitz: None,
            diameter: None,
            max_iterations: 10_000,
            floor: 0.0,
            early_forward_stop: false,
        }
    }
}

/// A saturated point with the gap certificate recorded at insertion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaturatedPoint {
    pub x: Vec<f64>,
    pub gap: f64,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaturatedSet {
    /// `points[t]` live in the state coordinates of stage t.
    pub points: Vec<Vec<SaturatedPoint>>,
    pub delta: f64,
}

impl SaturatedSet {
    pub fn new(stages: usize, delta: f64) -> Self {
        SaturatedSet {
            points: vec![Vec::new(); stages],
            delta,
        }
    }

    pub fn distance(&self, t: usize, x: &[f64]) -> f64 {
        distance_to(x, self.points[t].iter().map(|p| p.x.as_slice()))
    }

    /// Text dump: `stage gap iteration x...` per point.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (t, pts) in self.points.iter().enumerate() {
            for p in pts {
                let _ = write!(s, "{t} {:?} {}", p.gap, p.iteration);
                for v in &p.x {
                    let _ = write!(s, " {v:?}");
                }
                let _ = writeln!(s);
            }
        }
        s
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn distance_to<'a>(x: &[f64], set: impl Iterator<Item = &'a [f64]>) -> f64 {
    set.map(|s| euclid(x, s)).fold(f64::INFINITY, f64::min)
}

/// Candidate farthest from `set` (lowest index on ties); distance to an
/// empty set is +∞.
pub fn explorative_select(candidates: &[Vec<f64>], set: &[Vec<f64>]) -> (usize, f64) {
    assert!(!candidates.is_empty(), "no candidates");
    let mut best = (0, f64::NEG_INFINITY);
    for (i, c) in candidates.iter().enumerate() {
        let d = distance_to(c, set.iter().map(|v| v.as_slice()));
        if d > best.1 {
            best = (i, d);
        }
    }
    best
}

/// Inserts `x` when `gap <= eps` and x is farther than delta from the set.
pub fn saturation_update(set: &mut SaturatedSet, t: usize, x: &[f64], gap: f64, eps: f64, iteration: usize) -> bool {
    if gap <= eps && set.distance(t, x) > set.delta {
        set.points[t].push(SaturatedPoint {
            x: x.to_vec(),
            gap,
            iteration,
        });
        true
    } else {
        false
    }
}

/// Columns of stage-t decisions that enter stage t+1.
pub fn state_columns(problem: &MultistageProblem, t: usize) -> Vec<usize> {
    if t + 1 >= problem.horizon() {
        return Vec::new();
    }
    let n = problem.stages[t].n();
    (0..n)
        .filter(|&k| {
            problem.stages[t + 1]
                .realizations
                .iter()
                .any(|r| (0..r.linking.nrows()).any(|i| r.linking[(i, k)] != 0.0))
        })
        .collect()
}

fn project(x: &[f64], cols: &[usize]) -> Vec<f64> {
    cols.iter().map(|&k| x[k]).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct EddpResult {
    pub x1: Vec<f64>,
    pub lower_bound: f64,
    pub iterations: usize,
    /// Stopped because dist(x_1, S_1) <= delta.
    pub terminated: bool,
    pub lipschitz: f64,
    pub diameter: f64,
    pub state_dim: usize,
    /// `(T-1)(D/ε+1)^n + 1`.
    pub iteration_bound: f64,
    /// `2 M̂ (T-1) ε`.
    pub gap_bound: f64,
    /// Certificate of the first-stage gap at termination.
    pub certified_gap: f64,
    pub saturated: SaturatedSet,
    pub log: Vec<IterationRecord>,
    #[serde(skip)]
    pub state: SolveState,
}

/// Per stage, the upper estimate `U_t(y) = min_s cert(s) + 2 M̂ ‖y - s‖` of
/// the approximation gap at y.
fn gap_bound_at(set: &SaturatedSet, t: usize, y: &[f64], lip: f64, last: usize) -> f64 {
    if t >= last {
        return 0.0;
    }
    set.points[t]
        .iter()
        .map(|s| s.gap + 2.0 * lip * euclid(y, &s.x))
        .fold(f64::INFINITY, f64::min)
}

pub fn run_eddp(problem: &MultistageProblem, config: &EddpConfig) -> Result<EddpResult> {
    if !matches!(problem.dependence, Dependence::StagewiseIndependent) {
        return Err(SddpError::Invalid("EDDP needs a stagewise-independent problem".into()));
    }
    if !(config.epsilon > 0.0) {
        return Err(SddpError::Invalid("epsilon must be positive".into()));
    }
    if problem.stages.iter().any(|s| !s.is_bounded()) {
        return Err(SddpError::Invalid("EDDP refuses unbounded feasible boxes".into()));
    }
    let violations = problem.validate();
    if !violations.is_empty() {
        return Err(SddpError::Invalid(violations[0].to_string()));
    }
    let t_len = problem.horizon();
    let last = t_len - 1;
    let cols: Vec<Vec<usize>> = (0..t_len).map(|t| state_columns(problem, t)).collect();
    let state_dim = cols.iter().map(|c| c.len()).max().unwrap_or(0);
    let diameter = config.diameter.unwrap_or_else(|| {
        (0..last)
            .map(|t| {
                let st = &problem.stages[t];
                cols[t].iter().map(|&k| (st.upper[k] - st.lower[k]).powi(2)).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max)
    });
    if !(diameter > 0.0) {
        return Err(SddpError::Invalid("state diameter must be positive".into()));
    }
    let eps = config.epsilon;
    let delta = config.delta.unwrap_or(eps);
    let mut state = SolveState::new(problem, config.floor, 0);
    let mut sat = SaturatedSet::new(t_len, delta);
    let mut log = Vec::new();
    let clock = std::time::Instant::now();
    let mut terminated = false;
    let lip_of = |s: &SolveState| config.lipschitz.unwrap_or_else(|| s.max_gradient_norm());
    loop {
        let first = solve_stage(problem, &state, 0, 0, &[])?;
        if sat.distance(0, &project(&first.x, &cols[0])) <= delta {
            terminated = true;
            break;
        }
        if state.iteration >= config.max_iterations {
            break;
        }
        state.iteration += 1;
        // forward: every candidate, keep the most explorative one
        let mut trial = vec![first.x];
        for t in 1..last {
            let prev = &trial[t - 1];
            let cands = (0..problem.stages[t].realizations.len())
                .into_par_iter()
                .map(|j| solve_stage(problem, &state, t, j, prev).map(|s| s.x))
                .collect::<Result<Vec<_>>>()?;
            let proj: Vec<Vec<f64>> = cands.iter().map(|x| project(x, &cols[t])).collect();
            let set: Vec<Vec<f64>> = sat.points[t].iter().map(|p| p.x.clone()).collect();
            let (i, d) = explorative_select(&proj, &set);
            trial.push(cands[i].clone());
            if config.early_forward_stop && d <= delta {
                break;
            }
        }
        // backward with saturation updates
        for t in (1..=trial.len()).rev() {
            let x = trial[t - 1].clone();
            let kids = backward_step(problem, &mut state, t, &x, CoherentRisk::Expectation)?;
            let lip = lip_of(&state);
            let probs = problem.stages[t].probs();
            let mut upper = 0.0;
            for (c, p) in kids.iter().zip(&probs) {
                let y = project(&c.x, &cols[t]);
                upper += p * (c.value + gap_bound_at(&sat, t, &y, lip, last));
            }
            let approx = state.pools[t - 1][0].value(&x);
            let gap = (upper - approx).max(0.0);
            let eps_t = eps + 2.0 * lip * delta * (last - t) as f64;
            saturation_update(&mut sat, t - 1, &project(&x, &cols[t - 1]), gap, eps_t, state.iteration);
        }
        let lb = lower_bound(problem, &state)?;
        let lb = state.lower_bounds.last().map_or(lb, |&p: &f64| p.max(lb));
        state.lower_bounds.push(lb);
        log.push(IterationRecord {
            iteration: state.iteration,
            lower_bound: lb,
            upper_bound: None,
            elapsed: clock.elapsed().as_secs_f64(),
            cuts: state.cut_counts(),
        });
    }
    let first = solve_stage(problem, &state, 0, 0, &[])?;
    let lip = lip_of(&state);
    let x0 = project(&first.x, &cols[0]);
    let certified_gap = gap_bound_at(&sat, 0, &x0, lip, last);
    let n = state_dim as i32;
    Ok(EddpResult {
        x1: first.x,
        lower_bound: first.value,
        iterations: state.iteration,
        terminated,
        lipschitz: lip,
        diameter,
        state_dim,
        iteration_bound: (t_len as f64 - 1.0) * (diameter / eps + 1.0).powi(n) + 1.0,
        gap_bound: 2.0 * lip * (t_len as f64 - 1.0) * eps,
        certified_gap,
        saturated: sat,
        log,
        state,
    })
}
