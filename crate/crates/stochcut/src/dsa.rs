//! Dynamic stochastic approximation over box-constrained stages
//! `A x_t + B x_{t-1} = b`, cost `c·x + ½ Σ q_i x_i²`.

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::model::{MultistageProblem, StageBlock, StageRealization};
use crate::rng::{inverse_cdf, stream_rng, Stream};

#[derive(Debug, Error)]
pub enum DsaError {
    #[error("invalid DSA problem: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, DsaError>;

#[derive(Debug, Clone, PartialEq)]
pub struct DsaRealization {
    pub a: DMatrix<f64>,
    /// Linking to the previous decision; zero columns at the first stage.
    pub b: DMatrix<f64>,
    pub rhs: Vec<f64>,
    pub c: Vec<f64>,
    /// Diagonal of the quadratic term, nonnegative.
    pub q: Vec<f64>,
    pub prob: f64,
}

impl DsaRealization {
    pub fn cost(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.c).zip(&self.q).map(|((x, c), q)| c * x + 0.5 * q * x * x).sum()
    }

    /// `b - B u - A x`.
    pub fn residual(&self, u: &[f64], x: &[f64]) -> DVector<f64> {
        let mut r = DVector::from_column_slice(&self.rhs);
        if !u.is_empty() {
            r -= &self.b * DVector::from_column_slice(u);
        }
        r -= &self.a * DVector::from_column_slice(x);
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsaStage {
    pub realizations: Vec<DsaRealization>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DsaStage {
    pub fn probs(&self) -> Vec<f64> {
        self.realizations.iter().map(|r| r.prob).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsaProblem {
    pub stages: Vec<DsaStage>,
}

impl DsaProblem {
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    /// Linear stagewise-independent problem with no quadratic terms.
    pub fn from_multistage(problem: &MultistageProblem) -> Result<Self> {
        if problem.lattice().is_some() {
            return Err(DsaError::Invalid("Markov lattices are not supported".into()));
        }
        Ok(DsaProblem {
            stages: problem
                .stages
                .iter()
                .map(|s| DsaStage {
                    realizations: s
                        .realizations
                        .iter()
                        .map(|r| DsaRealization {
                            a: r.tech.clone(),
                            b: r.linking.clone(),
                            rhs: r.rhs.clone(),
                            c: r.cost.clone(),
                            q: vec![0.0; r.n()],
                            prob: r.prob,
                        })
                        .collect(),
                    lower: s.lower.clone(),
                    upper: s.upper.clone(),
                })
                .collect(),
        })
    }

    /// Back to a linear program; `None` with quadratic terms.
    pub fn to_multistage(&self) -> Option<MultistageProblem> {
        if self.stages.iter().flat_map(|s| &s.realizations).any(|r| r.q.iter().any(|&q| q != 0.0)) {
            return None;
        }
        Some(MultistageProblem::stagewise_independent(
            self.stages
                .iter()
                .map(|s| StageBlock {
                    realizations: s
                        .realizations
                        .iter()
                        .map(|r| StageRealization {
                            cost: r.c.clone(),
                            linking: r.b.clone(),
                            tech: r.a.clone(),
                            rhs: r.rhs.clone(),
                            prob: r.prob,
                        })
                        .collect(),
                    lower: s.lower.clone(),
                    upper: s.upper.clone(),
                })
                .collect(),
        ))
    }

    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if self.stages.is_empty() {
            issues.push("no stages".into());
        }
        for (t, s) in self.stages.iter().enumerate() {
            let n = s.lower.len();
            if s.upper.len() != n {
                issues.push(format!("stage {t}: bound lengths differ"));
            }
            if s.lower.iter().zip(&s.upper).any(|(l, u)| l > u) {
                issues.push(format!("stage {t}: empty box"));
            }
            let p: f64 = s.realizations.iter().map(|r| r.prob).sum();
            if (p - 1.0).abs() > 1e-9 {
                issues.push(format!("stage {t}: probabilities sum to {p}"));
            }
            if t == 0 && s.realizations.len() != 1 {
                issues.push("first stage must be deterministic".into());
            }
            let n_prev = if t == 0 { 0 } else { self.stages[t - 1].lower.len() };
            for (j, r) in s.realizations.iter().enumerate() {
                let m = r.rhs.len();
                if r.a.shape() != (m, n) || r.c.len() != n || r.q.len() != n {
                    issues.push(format!("stage {t} realization {j}: shapes disagree"));
                }
                if t > 0 && r.b.shape() != (m, n_prev) {
                    issues.push(format!("stage {t} realization {j}: linking shape {:?}", r.b.shape()));
                }
                if r.q.iter().any(|&q| q < 0.0) {
                    issues.push(format!("stage {t} realization {j}: negative quadratic term"));
                }
            }
        }
        issues
    }
}

/// Current primal, dual and previous dual.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpdtState {
    pub p: Vec<f64>,
    pub d: Vec<f64>,
    pub d_prev: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpdtParams {
    pub theta: f64,
    pub tau: f64,
    pub eta: f64,
}

/// One primal-dual transformation. Returns the new state `(p₊, d₊, d)`
/// and the extrapolated dual `d̃`.
pub fn spdt(
    state: &SpdtState,
    qprime: &[f64],
    u: &[f64],
    real: &DsaRealization,
    lower: &[f64],
    upper: &[f64],
    params: SpdtParams,
) -> (SpdtState, Vec<f64>) {
    let d_tilde: Vec<f64> = state
        .d
        .iter()
        .zip(&state.d_prev)
        .map(|(d, dp)| params.theta * (d - dp) + d)
        .collect();
    let atd = real.a.tr_mul(&DVector::from_column_slice(&d_tilde));
    let p: Vec<f64> = (0..state.p.len())
        .map(|i| {
            let free = (params.tau * state.p[i] - real.c[i] - qprime[i] + atd[i]) / (params.tau + real.q[i]);
            free.clamp(lower[i], upper[i])
        })
        .collect();
    let r = real.residual(u, &p);
    let d: Vec<f64> = state.d.iter().zip(r.iter()).map(|(d, r)| d + r / params.eta).collect();
    (
        SpdtState {
            p,
            d,
            d_prev: state.d.clone(),
        },
        d_tilde,
    )
}

/// Relative violation of the prox optimality conditions of `spdt`:
/// (primal, dual). Coordinates at a bound only need the right sign.
#[allow(clippy::too_many_arguments)]
pub fn spdt_residuals(
    before: &SpdtState,
    after: &SpdtState,
    d_tilde: &[f64],
    qprime: &[f64],
    u: &[f64],
    real: &DsaRealization,
    lower: &[f64],
    upper: &[f64],
    params: SpdtParams,
) -> (f64, f64) {
    let atd = real.a.tr_mul(&DVector::from_column_slice(d_tilde));
    let mut primal: f64 = 0.0;
    for i in 0..after.p.len() {
        let x = after.p[i];
        let terms = [real.c[i], real.q[i] * x, qprime[i], atd[i], params.tau * x, params.tau * before.p[i]];
        let scale = 1.0 + terms.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let g = real.c[i] + real.q[i] * x + qprime[i] - atd[i] + params.tau * (x - before.p[i]);
        let v = if x <= lower[i] && x < upper[i] {
            (-g).max(0.0)
        } else if x >= upper[i] && x > lower[i] {
            g.max(0.0)
        } else if lower[i] == upper[i] {
            0.0
        } else {
            g.abs()
        };
        primal = primal.max(v / scale);
    }
    let r = real.residual(u, &after.p);
    let mut dual: f64 = 0.0;
    for k in 0..r.len() {
        let lhs = params.eta * (after.d[k] - before.d[k]);
        let scale = 1.0 + lhs.abs().max(r[k].abs());
        dual = dual.max((lhs - r[k]).abs() / scale);
    }
    (primal, dual)
}

/// Parameter sequence of one stage, k = 1, 2, ...
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum StepRule {
    Constant(SpdtParams),
    /// `θ = 1`, `τ_k = τ₀ √k`, `η_k = η₀ √k`; uniform averaging.
    General { tau0: f64, eta0: f64 },
    /// `θ = 1`, `τ_k = μ k / 2`, `η_k = 2 a² / (μ k)`; weights ∝ k.
    Strong { mu: f64, a2: f64 },
}

impl StepRule {
    pub fn params(&self, k: usize) -> SpdtParams {
        let kf = k as f64;
        match *self {
            StepRule::Constant(p) => p,
            StepRule::General { tau0, eta0 } => SpdtParams {
                theta: 1.0,
                tau: tau0 * kf.sqrt(),
                eta: eta0 * kf.sqrt(),
            },
            StepRule::Strong { mu, a2 } => {
                let tau = 0.5 * mu * (kf + 1.0);
                SpdtParams {
                    theta: 1.0,
                    tau,
                    eta: (a2 / tau).max(1e-12),
                }
            }
        }
    }

    pub fn weight(&self, k: usize) -> f64 {
        match self {
            StepRule::Strong { .. } => k as f64,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConvexityMode {
    General,
    Strong,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DsaSchedule {
    /// N₁, N₂, ... one per stage.
    pub loops: Vec<usize>,
    pub rules: Vec<StepRule>,
    /// Dual iterates are clipped to this Euclidean radius.
    pub dual_radius: f64,
    /// Start each stage solve from the last iterate of the same realization.
    pub warm_start: bool,
}

fn frob2(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

impl DsaSchedule {
    /// Constants from data norms: `a²` the largest squared Frobenius norm of
    /// A, `L̂` a bound on the stage gradient, `D` the box diameter.
    pub fn from_data(problem: &DsaProblem, loops: Vec<usize>, mode: ConvexityMode) -> Self {
        let mut rules = Vec::with_capacity(problem.horizon());
        let mut radius: f64 = 1.0;
        for (t, s) in problem.stages.iter().enumerate() {
            let a2 = s.realizations.iter().map(|r| frob2(&r.a)).fold(0.0, f64::max).max(1e-12);
            let diam = s
                .lower
                .iter()
                .zip(&s.upper)
                .map(|(l, u)| if (u - l).is_finite() { (u - l) * (u - l) } else { 1.0 })
                .sum::<f64>()
                .sqrt()
                .max(1e-6);
            let grad = s
                .realizations
                .iter()
                .map(|r| {
                    r.c.iter()
                        .zip(&r.q)
                        .zip(s.lower.iter().zip(&s.upper))
                        .map(|((c, q), (l, u))| {
                            let x = if (u - l).is_finite() { l.abs().max(u.abs()) } else { 1.0 };
                            (c.abs() + q * x).powi(2)
                        })
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(0.0, f64::max);
            let rule = match mode {
                ConvexityMode::General => {
                    let tau0 = (grad / diam).max(a2.sqrt()).max(1e-6);
                    StepRule::General { tau0, eta0: a2 / tau0 }
                }
                ConvexityMode::Strong => {
                    let mu = s
                        .realizations
                        .iter()
                        .flat_map(|r| r.q.iter().copied())
                        .fold(f64::INFINITY, f64::min);
                    StepRule::Strong {
                        mu: if mu.is_finite() && mu > 0.0 { mu } else { 1.0 },
                        a2,
                    }
                }
            };
            rules.push(rule);
            radius = radius.max(1e3 * (1.0 + grad) * (1.0 + t as f64));
        }
        DsaSchedule {
            loops,
            rules,
            dual_radius: radius,
            warm_start: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DsaResult {
    pub x1: Vec<f64>,
    pub objective: f64,
    /// `‖b₁ - A₁ x̄₁‖`.
    pub residual: f64,
    /// Realizations drawn per stage, first stage 0.
    pub samples: Vec<u64>,
    pub dual_clips: u64,
    pub spdt_steps: u64,
    /// Largest stationarity residual of any SPDT step, before clipping.
    pub max_spdt_residual: f64,
}

struct Driver<'a> {
    problem: &'a DsaProblem,
    schedule: &'a DsaSchedule,
    warm: Vec<Vec<Option<SpdtState>>>,
    samples: Vec<u64>,
    clips: u64,
    steps: u64,
    worst: f64,
}

struct SaddleOut {
    y: Vec<f64>,
    x: Vec<f64>,
    value: f64,
}

impl Driver<'_> {
    fn saddle(&mut self, t: usize, j: usize, u: &[f64], rng: &mut impl Rng) -> SaddleOut {
        let stage = &self.problem.stages[t];
        let real = &stage.realizations[j];
        let rule = self.schedule.rules[t];
        let n = stage.lower.len();
        let m = real.rhs.len();
        let mut state = match (&self.warm[t][j], self.schedule.warm_start) {
            (Some(s), true) => s.clone(),
            _ => SpdtState {
                p: (0..n).map(|i| 0.0f64.clamp(stage.lower[i], stage.upper[i])).collect(),
                d: vec![0.0; m],
                d_prev: vec![0.0; m],
            },
        };
        let last = t + 1 == self.problem.horizon();
        let (mut xs, mut ys, mut vs, mut ws) = (vec![0.0; n], vec![0.0; m], 0.0, 0.0);
        for k in 1..=self.schedule.loops[t] {
            let (qprime, child) = if last {
                (vec![0.0; n], 0.0)
            } else {
                let next = &self.problem.stages[t + 1];
                let jn = inverse_cdf(&next.probs(), rng.gen());
                self.samples[t + 1] += 1;
                let out = self.saddle(t + 1, jn, &state.p, rng);
                let g = -(next.realizations[jn].b.tr_mul(&DVector::from_column_slice(&out.y)));
                (g.iter().copied().collect(), out.value)
            };
            let params = rule.params(k);
            let (mut next_state, d_tilde) = spdt(&state, &qprime, u, real, &stage.lower, &stage.upper, params);
            let (pr, du) = spdt_residuals(&state, &next_state, &d_tilde, &qprime, u, real, &stage.lower, &stage.upper, params);
            self.worst = self.worst.max(pr).max(du);
            self.steps += 1;
            let norm = next_state.d.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > self.schedule.dual_radius {
                let s = self.schedule.dual_radius / norm;
                next_state.d.iter_mut().for_each(|v| *v *= s);
                self.clips += 1;
            }
            let w = rule.weight(k);
            for i in 0..n {
                xs[i] += w * next_state.p[i];
            }
            for i in 0..m {
                ys[i] += w * next_state.d[i];
            }
            vs += w * (real.cost(&state.p) + child);
            ws += w;
            state = next_state;
        }
        self.warm[t][j] = Some(state);
        let x: Vec<f64> = xs.iter().map(|v| v / ws).collect();
        let y: Vec<f64> = ys.iter().map(|v| v / ws).collect();
        SaddleOut { y, x, value: vs / ws }
    }
}

/// Nested saddle-point approximation: the stage-t loop runs N_t SPDT steps,
/// each drawing one stage-(t+1) realization and running that stage's loop at
/// the current iterate to get `Q′ = -Bᵀ ȳ`. Averaged iterates are returned.
pub fn dsa_solve(problem: &DsaProblem, schedule: &DsaSchedule, seed: u64) -> Result<DsaResult> {
    let issues = problem.validate();
    if !issues.is_empty() {
        return Err(DsaError::Invalid(issues.join("; ")));
    }
    let t_len = problem.horizon();
    if schedule.loops.len() != t_len || schedule.rules.len() != t_len {
        return Err(DsaError::Invalid(format!("schedule covers {} stages, problem has {t_len}", schedule.loops.len())));
    }
    if schedule.loops.iter().any(|&n| n == 0) {
        return Err(DsaError::Invalid("loop sizes must be at least 1".into()));
    }
    if t_len > 3 {
        warn!(
            "DSA over {t_len} stages draws {} scenarios at the last stage; the count grows exponentially with the horizon",
            schedule.loops[..t_len - 1].iter().map(|&n| n as f64).product::<f64>()
        );
    }
    info!("dsa schedule {:?}", schedule);
    let mut rng = stream_rng(seed, Stream::Dsa, 0);
    let mut driver = Driver {
        problem,
        schedule,
        warm: problem.stages.iter().map(|s| vec![None; s.realizations.len()]).collect(),
        samples: vec![0; t_len],
        clips: 0,
        steps: 0,
        worst: 0.0,
    };
    let out = driver.saddle(0, 0, &[], &mut rng);
    let real = &problem.stages[0].realizations[0];
    let residual = real.residual(&[], &out.x).norm();
    if driver.clips > 0 {
        info!("dual iterates clipped {} times at radius {}", driver.clips, schedule.dual_radius);
    }
    Ok(DsaResult {
        objective: out.value,
        x1: out.x,
        residual,
        samples: driver.samples,
        dual_clips: driver.clips,
        spdt_steps: driver.steps,
        max_spdt_residual: driver.worst,
    })
}

/// `gap(z̄; x, y*)` maximized over x in the box for a stage without a
/// further value function:
/// `⟨y*, b-Bu-Ax̄⟩ + f(x̄) - min_x [⟨ȳ, b-Bu-Ax⟩ + f(x)]`.
pub fn subgrad_certificate(
    real: &DsaRealization,
    lower: &[f64],
    upper: &[f64],
    u: &[f64],
    xbar: &[f64],
    ybar: &[f64],
    ystar: &[f64],
) -> f64 {
    let r = real.residual(u, xbar);
    let first: f64 = ystar.iter().zip(r.iter()).map(|(a, b)| a * b).sum::<f64>() + real.cost(xbar);
    let r0 = real.residual(u, &vec![0.0; xbar.len()]);
    let atd = real.a.tr_mul(&DVector::from_column_slice(ybar));
    let mut inner: f64 = ybar.iter().zip(r0.iter()).map(|(a, b)| a * b).sum();
    for i in 0..xbar.len() {
        // min over [l, u] of g x + q x² / 2
        let (g, q) = (real.c[i] - atd[i], real.q[i]);
        let f = |x: f64| g * x + 0.5 * q * x * x;
        let x = if q > 0.0 {
            (-g / q).clamp(lower[i], upper[i])
        } else if g > 0.0 {
            lower[i]
        } else if g < 0.0 {
            upper[i]
        } else {
            0.0f64.clamp(lower[i], upper[i])
        };
        inner += f(x);
    }
    first - inner
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn real(a: DMatrix<f64>, b: DMatrix<f64>, rhs: Vec<f64>, c: Vec<f64>, q: Vec<f64>) -> DsaRealization {
        DsaRealization { a, b, rhs, c, q, prob: 1.0 }
    }

    #[test]
    fn degenerate_operator() {
        let r = real(DMatrix::zeros(2, 3), DMatrix::zeros(2, 1), vec![1.0, -2.0], vec![0.0; 3], vec![0.0; 3]);
        let s = SpdtState { p: vec![-1.0, 0.5, 3.0], d: vec![0.2, 0.1], d_prev: vec![5.0, 5.0] };
        let params = SpdtParams { theta: 0.0, tau: 2.0, eta: 4.0 };
        let (n, _) = spdt(&s, &[0.0; 3], &[7.0], &r, &[0.0; 3], &[1.0; 3], params);
        assert_eq!(n.p, vec![0.0, 0.5, 1.0]);
        assert_eq!(n.d, vec![0.2 + 0.25, 0.1 - 0.5]);
        assert_eq!(n.d_prev, s.d);
    }

    #[test]
    fn unbounded_box_is_a_gradient_step() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -2.0]);
        let r = real(a, DMatrix::zeros(1, 0), vec![0.5], vec![1.0, 3.0], vec![0.0, 0.0]);
        let s = SpdtState { p: vec![0.3, -0.7], d: vec![1.5], d_prev: vec![0.5] };
        let params = SpdtParams { theta: 1.0, tau: 4.0, eta: 2.0 };
        let inf = f64::INFINITY;
        let (n, dt) = spdt(&s, &[0.25, -1.0], &[], &r, &[-inf, -inf], &[inf, inf], params);
        assert_eq!(dt, vec![2.5]);
        let expect = [0.3 - (1.0 + 0.25 - 2.5) / 4.0, -0.7 - (3.0 - 1.0 + 5.0) / 4.0];
        assert!((n.p[0] - expect[0]).abs() < 1e-15 && (n.p[1] - expect[1]).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn closed_forms_satisfy_optimality(
            a in prop::collection::vec(-3.0..3.0f64, 6),
            b in prop::collection::vec(-3.0..3.0f64, 4),
            c in prop::collection::vec(-5.0..5.0f64, 3),
            q in prop::collection::vec(0.0..2.0f64, 3),
            p in prop::collection::vec(-4.0..4.0f64, 3),
            d in prop::collection::vec(-4.0..4.0f64, 2),
            dp in prop::collection::vec(-4.0..4.0f64, 2),
            qp in prop::collection::vec(-2.0..2.0f64, 3),
            u in prop::collection::vec(-2.0..2.0f64, 2),
            rhs in prop::collection::vec(-2.0..2.0f64, 2),
            theta in 0.0..1.0f64, tau in 0.01..50.0f64, eta in 0.01..50.0f64,
        ) {
            let r = real(DMatrix::from_row_slice(2, 3, &a), DMatrix::from_row_slice(2, 2, &b), rhs, c, q);
            let s = SpdtState { p, d, d_prev: dp };
            let params = SpdtParams { theta, tau, eta };
            let (lo, hi) = (vec![-1.0, f64::NEG_INFINITY, 0.0], vec![1.0, 2.0, f64::INFINITY]);
            let (n, dt) = spdt(&s, &qp, &u, &r, &lo, &hi, params);
            let (pr, du) = spdt_residuals(&s, &n, &dt, &qp, &u, &r, &lo, &hi, params);
            prop_assert!(pr <= 1e-12, "primal {}", pr);
            prop_assert!(du <= 1e-12, "dual {}", du);
            prop_assert!(n.p.iter().zip(lo.iter().zip(&hi)).all(|(x, (l, h))| x >= l && x <= h));
        }
    }

    /// min c x over [0, 2] with x = b - u: optimum at x = b - u when
    /// feasible; dual y* = c.
    fn one_dim() -> (DsaRealization, Vec<f64>, Vec<f64>) {
        (
            real(DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0), vec![1.5], vec![0.8], vec![0.0]),
            vec![0.0],
            vec![2.0],
        )
    }

    #[test]
    fn certificate_zero_at_saddle_and_linear_in_dual_error() {
        let (r, lo, hi) = one_dim();
        let u = [0.5];
        let (xs, ys) = ([1.0], [0.8]);
        assert!(subgrad_certificate(&r, &lo, &hi, &u, &xs, &ys, &ys).abs() < 1e-15);
        let gaps: Vec<f64> = (1..=5).map(|k| subgrad_certificate(&r, &lo, &hi, &u, &xs, &[0.8 + 0.1 * k as f64], &ys)).collect();
        for g in &gaps {
            assert!(*g >= 0.0);
        }
        let slopes: Vec<f64> = gaps.windows(2).map(|w| (w[1] - w[0]) / 0.1).collect();
        for s in &slopes {
            assert!((s - slopes[0]).abs() < 1e-9, "{slopes:?}");
        }
        assert!(slopes[0] > 0.0);
        let below: Vec<f64> = (1..=5).map(|k| subgrad_certificate(&r, &lo, &hi, &u, &xs, &[0.8 - 0.1 * k as f64], &ys)).collect();
        assert!(below.iter().all(|g| *g > 0.0));
    }

    #[test]
    fn zero_cost_problem_stays_feasible() {
        let stage = |b: DMatrix<f64>| DsaStage {
            realizations: vec![real(DMatrix::from_element(1, 1, 1.0), b, vec![0.5], vec![0.0], vec![0.0])],
            lower: vec![0.0],
            upper: vec![1.0],
        };
        let p = DsaProblem { stages: vec![stage(DMatrix::zeros(1, 0)), stage(DMatrix::zeros(1, 1)), stage(DMatrix::zeros(1, 1))] };
        let s = DsaSchedule::from_data(&p, vec![400, 20, 20], ConvexityMode::General);
        let r = dsa_solve(&p, &s, 1).unwrap();
        assert!(r.residual < 1e-2, "{}", r.residual);
        assert!(r.objective.abs() < 1e-12);
        assert_eq!(r.samples, vec![0, 400, 400 * 20]);
    }

    #[test]
    fn schedule_must_match_horizon() {
        let (r, lo, hi) = one_dim();
        let mut r = r;
        r.b = DMatrix::zeros(1, 0);
        let p = DsaProblem { stages: vec![DsaStage { realizations: vec![r], lower: lo, upper: hi }] };
        let s = DsaSchedule::from_data(&p, vec![10, 10], ConvexityMode::General);
        assert!(dsa_solve(&p, &s, 0).is_err());
    }
}
