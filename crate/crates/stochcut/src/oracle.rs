//! Brute-force ground truth at desk scale: extensive-form solves, nested
//! risk values, and the basestock grid recursion.

use serde::{Deserialize, Serialize};

use crate::lp::{CutLp, LpError, LpStatus};
use crate::model::{ModelError, MultistageProblem, ScenarioTree, SocProblem, DEFAULT_TREE_CAP};
use crate::risk::CoherentRisk;
use crate::sddp::risk_at;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("oracle LP is {0:?}")]
    Status(LpStatus),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, OracleError>;

#[derive(Debug, Clone, PartialEq)]
pub struct ExtensiveSolution {
    pub value: f64,
    pub x1: Vec<f64>,
    pub nodes: usize,
}

/// Optimum of the deterministic equivalent.
pub fn extensive_solve(problem: &MultistageProblem) -> Result<ExtensiveSolution> {
    let ef = problem.to_extensive_form()?;
    let s = ef.lp.solve()?;
    if !s.is_optimal() {
        return Err(OracleError::Status(s.status));
    }
    let n1 = problem.stages[0].n();
    Ok(ExtensiveSolution {
        value: s.value,
        x1: s.x[..n1].to_vec(),
        nodes: ef.tree.len(),
    })
}

/// True expected cost-to-go after stage `t` at decision `x` (node `node`
/// of stage t for lattice problems).
pub fn cost_to_go(problem: &MultistageProblem, t: usize, node: usize, x: &[f64]) -> Result<f64> {
    if t + 1 >= problem.horizon() {
        return Ok(0.0);
    }
    let roots = problem.children_of(t, node);
    let tree = ScenarioTree::build(problem, t + 1, &roots, DEFAULT_TREE_CAP)?;
    let ef = tree.extensive_form(problem, Some(x));
    let s = ef.lp.solve()?;
    if !s.is_optimal() {
        return Err(OracleError::Status(s.status));
    }
    Ok(s.value)
}

/// Decision rule `(stage, node, x_prev) -> x_t` for policy evaluation.
pub type Policy<'a> = &'a (dyn Fn(usize, usize, &[f64]) -> Vec<f64> + Sync);

pub enum NestedMode<'a> {
    /// Nested risk-averse optimum by one LP over the tree.
    Optimize,
    /// Nested risk value of the costs of a fixed policy.
    Policy(Policy<'a>),
}

/// `R_2(Z_1 + R_3(Z_2 + ...))` over the full tree. `risks` follows the
/// SDDP convention: empty, one shared entry, or one per stage.
pub fn nested_risk_value(problem: &MultistageProblem, risks: &[CoherentRisk], mode: NestedMode) -> Result<f64> {
    let tree = problem.scenario_tree(DEFAULT_TREE_CAP)?;
    match mode {
        NestedMode::Policy(policy) => Ok(policy_nested(problem, risks, &tree, policy, 0, &[])),
        NestedMode::Optimize => nested_optimum(problem, risks, &tree),
    }
}

fn policy_nested(
    problem: &MultistageProblem,
    risks: &[CoherentRisk],
    tree: &ScenarioTree,
    policy: Policy,
    id: usize,
    x_prev: &[f64],
) -> f64 {
    let nd = &tree.nodes[id];
    let r = &problem.stages[nd.stage].realizations[nd.realization];
    let x = policy(nd.stage, nd.realization, x_prev);
    let c: f64 = r.cost.iter().zip(&x).map(|(a, b)| a * b).sum();
    let kids = &tree.children[id];
    if kids.is_empty() {
        return c;
    }
    let z: Vec<f64> = kids.iter().map(|&k| policy_nested(problem, risks, tree, policy, k, &x)).collect();
    let p: Vec<f64> = kids.iter().map(|&k| tree.nodes[k].cond_prob).collect();
    c + risk_at(risks, nd.stage + 1).evaluate(&z, &p)
}

fn combo_params(r: CoherentRisk) -> (f64, f64) {
    match r {
        CoherentRisk::Expectation => (0.0, 0.5),
        CoherentRisk::AVaR { alpha } => (1.0, alpha),
        CoherentRisk::Combo { lambda, alpha } => (lambda, alpha),
    }
}

/// Node values `V_n = c x_n + Σ_j q_j [(1-λ) V_j + λ θ_n + λ/(1-α) w_j]`
/// with `w_j >= V_j - θ_n`, `w_j >= 0`; minimizing the root value gives
/// the nested optimum.
fn nested_optimum(problem: &MultistageProblem, risks: &[CoherentRisk], tree: &ScenarioTree) -> Result<f64> {
    let mut lp = CutLp::new();
    let mut xs = Vec::with_capacity(tree.len());
    let mut vs = Vec::with_capacity(tree.len());
    for nd in &tree.nodes {
        let st = &problem.stages[nd.stage];
        xs.push(lp.add_vars(&vec![0.0; st.n()], &st.lower, &st.upper));
        vs.push(lp.add_var(if nd.parent.is_none() { 1.0 } else { 0.0 }, f64::NEG_INFINITY, f64::INFINITY));
    }
    for (id, nd) in tree.nodes.iter().enumerate() {
        let r = &problem.stages[nd.stage].realizations[nd.realization];
        for i in 0..r.m() {
            let mut row: Vec<(usize, f64)> = (0..r.n()).map(|j| (xs[id] + j, r.tech[(i, j)])).collect();
            if let Some(par) = nd.parent {
                row.extend((0..r.linking.ncols()).map(|j| (xs[par] + j, r.linking[(i, j)])));
            }
            lp.add_row(row, r.rhs[i]);
        }
        let mut row: Vec<(usize, f64)> = vec![(vs[id], 1.0)];
        row.extend((0..r.n()).map(|j| (xs[id] + j, -r.cost[j])));
        let kids = &tree.children[id];
        if !kids.is_empty() {
            let (lambda, alpha) = combo_params(risk_at(risks, nd.stage + 1));
            if lambda > 0.0 {
                let theta = lp.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY);
                row.push((theta, -lambda));
                for &k in kids {
                    let q = tree.nodes[k].cond_prob;
                    let w = lp.add_var(0.0, 0.0, f64::INFINITY);
                    let s = lp.add_var(0.0, 0.0, f64::INFINITY);
                    lp.add_row(vec![(w, 1.0), (vs[k], -1.0), (theta, 1.0), (s, -1.0)], 0.0);
                    row.push((w, -q * lambda / (1.0 - alpha)));
                    row.push((vs[k], -q * (1.0 - lambda)));
                }
            } else {
                for &k in kids {
                    row.push((vs[k], -tree.nodes[k].cond_prob));
                }
            }
        }
        lp.add_row(row, 0.0);
    }
    let s = lp.solve()?;
    if s.status != LpStatus::Optimal {
        return Err(OracleError::Status(s.status));
    }
    Ok(s.value)
}

/// Nested risk value of a state-feedback SOC policy `(t, x) -> u`:
/// `W_t(x) = R_t[c_tj(x, u) + W_{t+1}(x'_j)]`, `W_{T+1} = c_{T+1}`.
pub fn soc_policy_nested_value(
    problem: &SocProblem,
    risks: &[CoherentRisk],
    policy: &dyn Fn(usize, &[f64]) -> Vec<f64>,
    cap: usize,
) -> Result<f64> {
    let count: usize = (0..problem.horizon())
        .scan(1usize, |acc, t| {
            *acc = acc.saturating_mul(problem.stages[t].realizations.len());
            Some(*acc)
        })
        .sum();
    if count > cap {
        return Err(OracleError::Model(ModelError::TreeTooLarge { cap }));
    }
    Ok(soc_nested(problem, risks, policy, 0, &problem.x1))
}

fn soc_nested(problem: &SocProblem, risks: &[CoherentRisk], policy: &dyn Fn(usize, &[f64]) -> Vec<f64>, t: usize, x: &[f64]) -> f64 {
    if t == problem.horizon() {
        return problem.terminal_cost(x);
    }
    let st = &problem.stages[t];
    let u = policy(t, x);
    let z: Vec<f64> = st
        .realizations
        .iter()
        .map(|r| r.stage_cost(x, &u) + soc_nested(problem, risks, policy, t + 1, &r.next_state(x, &u)))
        .collect();
    risk_at(risks, t).evaluate(&z, &st.probs())
}

/// Inventory data: order at `order_cost[t]`, then demand `D_t` is met from
/// stock; leftover costs `holding[t]`, shortage `backorder[t]` per unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InventoryInstance {
    pub order_cost: Vec<f64>,
    pub backorder: Vec<f64>,
    pub holding: Vec<f64>,
    /// Per stage: (demand, probability).
    pub demand: Vec<Vec<(f64, f64)>>,
    pub x1: f64,
}

impl InventoryInstance {
    pub fn horizon(&self) -> usize {
        self.order_cost.len()
    }

    fn demand_range(&self) -> (f64, f64) {
        let all = self.demand.iter().flatten().map(|d| d.0);
        let lo = all.clone().fold(f64::INFINITY, f64::min);
        let hi = all.fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// Levels y*_t with the grid step and value functions used.
#[derive(Debug, Clone)]
pub struct Basestock {
    pub levels: Vec<f64>,
    pub step: f64,
    /// Error bound implied by the grid: one step in the level.
    pub tolerance: f64,
    pub grid_lo: f64,
    /// `values[t][k]`: V_t at `grid_lo + k step`; `values[T]` is zero.
    pub values: Vec<Vec<f64>>,
}

impl Basestock {
    pub fn value(&self, t: usize, x: f64) -> f64 {
        interp(&self.values[t], self.grid_lo, self.step, x)
    }

    /// Order-up-to decision at stock x.
    pub fn order(&self, t: usize, x: f64) -> f64 {
        (self.levels[t] - x).max(0.0)
    }
}

fn interp(v: &[f64], lo: f64, h: f64, x: f64) -> f64 {
    let s = ((x - lo) / h).max(0.0);
    let k = (s.floor() as usize).min(v.len() - 2);
    let f = (s - k as f64).min(1.0);
    v[k] * (1.0 - f) + v[k + 1] * f
}

/// Backward grid recursion
/// `V_t(x) = min_{y >= x} c_t (y - x) + E[b_t [D-y]_+ + h_t [y-D]_+ + V_{t+1}(y - D)]`, with `y*_t` the unconstrained minimizer
/// of the bracket plus `c_t y` (lowest on ties). `step` defaults to 1e-3 of
/// the demand range.
pub fn basestock_levels(inst: &InventoryInstance, step: Option<f64>) -> Result<Basestock> {
    let t_len = inst.horizon();
    if inst.backorder.len() != t_len || inst.holding.len() != t_len || inst.demand.len() != t_len {
        return Err(OracleError::Invalid("inventory data lengths differ".into()));
    }
    let (dlo, dhi) = inst.demand_range();
    let h = step.unwrap_or(1e-3 * (dhi - dlo).max(1.0));
    let span = dhi.abs().max(dlo.abs()).max(1.0);
    let lo = inst.x1.min(0.0) - (t_len as f64 + 1.0) * span;
    let hi = inst.x1.max(0.0) + (t_len as f64 + 1.0) * span;
    let k = ((hi - lo) / h).ceil() as usize + 1;
    if k > 50_000_000 {
        return Err(OracleError::Invalid("grid too fine".into()));
    }
    let grid: Vec<f64> = (0..k).map(|i| lo + i as f64 * h).collect();
    let mut values = vec![vec![0.0; k]; t_len + 1];
    let mut levels = vec![0.0; t_len];
    for t in (0..t_len).rev() {
        let (c, b, hold) = (inst.order_cost[t], inst.backorder[t], inst.holding[t]);
        let next = &values[t + 1];
        let g: Vec<f64> = grid
            .iter()
            .map(|&y| {
                let e: f64 = inst.demand[t]
                    .iter()
                    .map(|&(d, p)| p * (b * (d - y).max(0.0) + hold * (y - d).max(0.0) + interp(next, lo, h, y - d)))
                    .sum();
                c * y + e
            })
            .collect();
        let mut best = 0;
        for i in 1..k {
            if g[i] < g[best] - 1e-12 {
                best = i;
            }
        }
        levels[t] = grid[best];
        // V_t(x) = -c x + min_{y >= x} g(y): suffix minimum
        let mut vt = vec![0.0; k];
        let mut m = f64::INFINITY;
        for i in (0..k).rev() {
            m = m.min(g[i]);
            vt[i] = m - c * grid[i];
        }
        values[t] = vt;
    }
    Ok(Basestock {
        levels,
        step: h,
        tolerance: h,
        grid_lo: lo,
        values,
    })
}

/// Frozen oracle output consumed by regression tests and `oracle --check`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub seed: u64,
    pub hash: String,
}

/// FNV-1a over the bit patterns of every number in the problem.
pub fn instance_hash(problem: &MultistageProblem) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |v: f64| {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
    };
    for st in &problem.stages {
        st.lower.iter().chain(&st.upper).for_each(|v| eat(*v));
        for r in &st.realizations {
            eat(r.prob);
            r.cost.iter().chain(&r.rhs).chain(r.tech.iter()).chain(r.linking.iter()).for_each(|v| eat(*v));
        }
    }
    if let Some(l) = problem.lattice() {
        l.transitions.iter().flat_map(|m| m.iter()).for_each(|v| eat(*v));
    }
    format!("{h:016x}")
}

/// Frozen extensive-form optima of the named fixtures.
pub const FROZEN_FIXTURES: &str = include_str!("../fixtures/oracle.json");

pub fn frozen_fixtures() -> Vec<FixtureRecord> {
    serde_json::from_str(FROZEN_FIXTURES).expect("bundled fixture file parses")
}

/// Current oracle output for a named fixture.
pub fn fixture_record(name: &str, seed: u64) -> Result<FixtureRecord> {
    let p = crate::fixtures::by_name(name).ok_or_else(|| OracleError::Invalid(format!("unknown fixture {name}")))?;
    let v = extensive_solve(&p)?.value;
    Ok(FixtureRecord {
        name: name.to_string(),
        value: v,
        tolerance: 1e-6 * v.abs().max(1.0),
        seed,
        hash: instance_hash(&p),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixtureCheck {
    pub name: String,
    pub hash_ok: bool,
    pub extensive: f64,
    pub sddp_lower_bound: f64,
    pub passed: bool,
}

/// Recomputes a frozen record: the instance hash, the extensive-form
/// optimum, and the SDDP lower bound after at most 500 iterations.
pub fn check_fixture(rec: &FixtureRecord) -> Result<FixtureCheck> {
    let p = crate::fixtures::by_name(&rec.name)
        .ok_or_else(|| OracleError::Invalid(format!("unknown fixture {}", rec.name)))?;
    let extensive = extensive_solve(&p)?.value;
    let cfg = crate::sddp::SddpConfig {
        seed: rec.seed,
        ..Default::default()
    };
    let lb = crate::sddp::run(&p, &cfg)
        .map_err(|e| OracleError::Invalid(e.to_string()))?
        .lower_bound;
    let hash_ok = instance_hash(&p) == rec.hash;
    let passed = hash_ok && (extensive - rec.value).abs() <= rec.tolerance && (lb - rec.value).abs() <= rec.tolerance;
    Ok(FixtureCheck {
        name: rec.name.clone(),
        hash_ok,
        extensive,
        sddp_lower_bound: lb,
        passed,
    })
}
