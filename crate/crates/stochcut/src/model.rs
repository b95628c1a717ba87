//! Problem data: linear multistage programs with finite-support noise,
//! Markov lattices, and stochastic optimal control problems.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::lp::LpProblem;

pub const DEFAULT_TREE_CAP: usize = 10_000;
const PROB_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("scenario tree has more than {cap} nodes")]
    TreeTooLarge { cap: usize },
    #[error("invalid problem: {0}")]
    Invalid(String),
}

/// Data of one realization `ξ_tj` of stage t: `B x_{t-1} + A x_t = b`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageRealization {
    pub cost: Vec<f64>,
    pub linking: DMatrix<f64>,
    pub tech: DMatrix<f64>,
    pub rhs: Vec<f64>,
    pub prob: f64,
}

impl StageRealization {
    pub fn n(&self) -> usize {
        self.tech.ncols()
    }

    pub fn m(&self) -> usize {
        self.tech.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageBlock {
    pub realizations: Vec<StageRealization>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl StageBlock {
    pub fn n(&self) -> usize {
        self.lower.len()
    }

    pub fn m(&self) -> usize {
        self.realizations.first().map(|r| r.m()).unwrap_or(0)
    }

    pub fn probs(&self) -> Vec<f64> {
        self.realizations.iter().map(|r| r.prob).collect()
    }

    /// Stage LP of realization `j` without the linking term.
    pub fn lp(&self, j: usize) -> LpProblem {
        let r = &self.realizations[j];
        LpProblem::new(r.cost.clone(), r.tech.clone(), r.rhs.clone(), self.lower.clone(), self.upper.clone())
    }

    pub fn is_bounded(&self) -> bool {
        self.upper.iter().chain(self.lower.iter()).all(|v| v.is_finite())
    }
}

/// Nodes per stage with centers, and row-stochastic transitions
/// `transitions[t][(i, j)]` from node i of stage t to node j of stage t+1.
/// Node data lives in the matching stage's realization list.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovLattice {
    pub centers: Vec<Vec<Vec<f64>>>,
    pub transitions: Vec<DMatrix<f64>>,
}

impl MarkovLattice {
    /// Node of `stage` whose center is nearest to `xi` (lowest index on ties).
    pub fn nearest_node(&self, stage: usize, xi: &[f64]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, c) in self.centers[stage].iter().enumerate() {
            let d: f64 = c.iter().zip(xi).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dependence {
    StagewiseIndependent,
    MarkovLattice(MarkovLattice),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultistageProblem {
    pub stages: Vec<StageBlock>,
    pub dependence: Dependence,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    HorizonTooShort(usize),
    EmptyStage { stage: usize },
    ProbabilitySum { stage: usize, sum: f64 },
    NonPositiveProbability { stage: usize, realization: usize },
    Dimension { stage: usize, realization: usize, what: &'static str },
    FirstStage(&'static str),
    BoundOrder { stage: usize, index: usize },
    UnboundedBelow { stage: usize, index: usize },
    NonFinite { stage: usize, realization: usize },
    Lattice(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::HorizonTooShort(t) => write!(f, "horizon {t} is shorter than 2"),
            Violation::EmptyStage { stage } => write!(f, "stage {stage}: no realizations"),
            Violation::ProbabilitySum { stage, sum } => write!(f, "stage {stage}: probability sum {sum}"),
            Violation::NonPositiveProbability { stage, realization } => {
                write!(f, "stage {stage} realization {realization}: probability must be positive")
            }
            Violation::Dimension { stage, realization, what } => {
                write!(f, "stage {stage} realization {realization}: dimension mismatch in {what}")
            }
            Violation::FirstStage(msg) => write!(f, "first stage: {msg}"),
            Violation::BoundOrder { stage, index } => write!(f, "stage {stage}: lower bound above upper bound at {index}"),
            Violation::UnboundedBelow { stage, index } => write!(f, "stage {stage}: variable {index} unbounded below"),
            Violation::NonFinite { stage, realization } => {
                write!(f, "stage {stage} realization {realization}: non-finite data")
            }
            Violation::Lattice(msg) => write!(f, "lattice: {msg}"),
        }
    }
}

impl MultistageProblem {
    pub fn stagewise_independent(stages: Vec<StageBlock>) -> Self {
        MultistageProblem {
            stages,
            dependence: Dependence::StagewiseIndependent,
        }
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn lattice(&self) -> Option<&MarkovLattice> {
        match &self.dependence {
            Dependence::MarkovLattice(l) => Some(l),
            Dependence::StagewiseIndependent => None,
        }
    }

    pub fn max_abs_cost(&self) -> f64 {
        self.stages
            .iter()
            .flat_map(|s| s.realizations.iter())
            .flat_map(|r| r.cost.iter())
            .fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// All violations of the typed invariants; empty iff well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let t_len = self.stages.len();
        if t_len < 2 {
            out.push(Violation::HorizonTooShort(t_len));
        }
        for (t, st) in self.stages.iter().enumerate() {
            let n = st.lower.len();
            if st.upper.len() != n {
                out.push(Violation::Dimension {
                    stage: t,
                    realization: 0,
                    what: "bounds",
                });
            }
            for k in 0..n.min(st.upper.len()) {
                if st.lower[k] > st.upper[k] {
                    out.push(Violation::BoundOrder { stage: t, index: k });
                }
                if !st.lower[k].is_finite() {
                    out.push(Violation::UnboundedBelow { stage: t, index: k });
                }
            }
            if st.realizations.is_empty() {
                out.push(Violation::EmptyStage { stage: t });
                continue;
            }
            let n_prev = if t == 0 { 0 } else { self.stages[t - 1].lower.len() };
            let m = st.realizations[0].rhs.len();
            let mut sum = 0.0;
            for (j, r) in st.realizations.iter().enumerate() {
                sum += r.prob;
                if !(r.prob > 0.0) {
                    out.push(Violation::NonPositiveProbability { stage: t, realization: j });
                }
                let dim = |what| Violation::Dimension {
                    stage: t,
                    realization: j,
                    what,
                };
                if r.cost.len() != n {
                    out.push(dim("cost vector"));
                }
                if r.tech.ncols() != n || r.tech.nrows() != m || r.rhs.len() != m {
                    out.push(dim("tech matrix"));
                }
                if r.linking.nrows() != m || r.linking.ncols() != n_prev {
                    out.push(dim("linking matrix"));
                }
                let finite = r.cost.iter().chain(&r.rhs).chain(r.tech.iter()).chain(r.linking.iter()).all(|v| v.is_finite());
                if !finite {
                    out.push(Violation::NonFinite { stage: t, realization: j });
                }
            }
            if (sum - 1.0).abs() > PROB_TOL && self.lattice().is_none() {
                out.push(Violation::ProbabilitySum { stage: t, sum });
            }
            if t == 0 {
                if st.realizations.len() != 1 {
                    out.push(Violation::FirstStage("must have exactly one realization"));
                }
                if st.realizations.iter().any(|r| r.linking.iter().any(|v| *v != 0.0)) {
                    out.push(Violation::FirstStage("linking matrix must be zero"));
                }
            }
        }
        if let Some(lat) = self.lattice() {
            self.validate_lattice(lat, &mut out);
        }
        out
    }

    fn validate_lattice(&self, lat: &MarkovLattice, out: &mut Vec<Violation>) {
        let t_len = self.stages.len();
        if lat.centers.len() != t_len {
            out.push(Violation::Lattice(format!("{} center sets for {} stages", lat.centers.len(), t_len)));
            return;
        }
        if lat.transitions.len() + 1 != t_len {
            out.push(Violation::Lattice(format!("{} transition matrices for {} stages", lat.transitions.len(), t_len)));
            return;
        }
        for t in 0..t_len {
            let nodes = self.stages[t].realizations.len();
            if lat.centers[t].len() != nodes || nodes == 0 {
                out.push(Violation::Lattice(format!("stage {t}: {} centers for {nodes} nodes", lat.centers[t].len())));
            }
        }
        for (t, p) in lat.transitions.iter().enumerate() {
            let (a, b) = (self.stages[t].realizations.len(), self.stages[t + 1].realizations.len());
            if p.nrows() != a || p.ncols() != b {
                out.push(Violation::Lattice(format!("transition {t} is {}x{}, expected {a}x{b}", p.nrows(), p.ncols())));
                continue;
            }
            for i in 0..a {
                let s: f64 = p.row(i).iter().sum();
                if (s - 1.0).abs() > PROB_TOL || p.row(i).iter().any(|v| *v < 0.0) {
                    out.push(Violation::Lattice(format!("transition {t} row {i} sums to {s}")));
                }
            }
        }
    }

    /// Children of a tree node as (realization index, conditional probability).
    pub(crate) fn children_of(&self, stage: usize, realization: usize) -> Vec<(usize, f64)> {
        let next = &self.stages[stage + 1];
        match &self.dependence {
            Dependence::StagewiseIndependent => next.realizations.iter().enumerate().map(|(j, r)| (j, r.prob)).collect(),
            Dependence::MarkovLattice(l) => {
                let p = &l.transitions[stage];
                (0..p.ncols()).map(|j| (j, p[(realization, j)])).filter(|&(_, q)| q > 0.0).collect()
            }
        }
    }

    /// AR(1) lifting: decisions become `(x_t, ξ_t)` with
    /// `B x_{t-1} + A x_t - ξ_t = 0` and `ξ_t - Φ ξ_{t-1} = μ + ε_t`.
    /// `noise[t]` lists the atoms `(ε, p)` of stage t (stage 0 entry ignored);
    /// `ξ_1` is the base stage-1 right-hand side.
    pub fn lift_autoregressive(
        &self,
        phi: &DMatrix<f64>,
        mu: &[f64],
        noise: &[Vec<(Vec<f64>, f64)>],
    ) -> Result<MultistageProblem, ModelError> {
        let t_len = self.horizon();
        if self.lattice().is_some() {
            return Err(ModelError::Invalid("AR lifting needs a stagewise-independent base".into()));
        }
        let d = self.stages[0].m();
        if phi.nrows() != d || phi.ncols() != d || mu.len() != d {
            return Err(ModelError::Invalid("Φ and μ must match the rhs dimension".into()));
        }
        if noise.len() != t_len {
            return Err(ModelError::Invalid("one noise list per stage required".into()));
        }
        for (t, st) in self.stages.iter().enumerate() {
            if st.m() != d {
                return Err(ModelError::Invalid(format!("stage {t}: rhs dimension differs from {d}")));
            }
            let r0 = &st.realizations[0];
            for r in &st.realizations[1..] {
                if r.cost != r0.cost || r.tech != r0.tech || r.linking != r0.linking {
                    return Err(ModelError::Invalid(format!("stage {t}: only the rhs may be random")));
                }
            }
            if t > 0 && noise[t].iter().any(|(e, _)| e.len() != d) {
                return Err(ModelError::Invalid(format!("stage {t}: noise dimension differs from {d}")));
            }
        }

        let mut stages = Vec::with_capacity(t_len);
        let xi1 = self.stages[0].realizations[0].rhs.clone();
        let mut lo = xi1.clone();
        let mut hi = xi1.clone();
        for (t, st) in self.stages.iter().enumerate() {
            let base = &st.realizations[0];
            let n = st.n();
            let n_prev = if t == 0 { 0 } else { self.stages[t - 1].n() + d };
            let mut cost = base.cost.clone();
            cost.extend(std::iter::repeat(0.0).take(d));
            let mut tech = DMatrix::zeros(2 * d, n + d);
            for i in 0..d {
                for j in 0..n {
                    tech[(i, j)] = base.tech[(i, j)];
                }
                tech[(i, n + i)] = -1.0;
                tech[(d + i, n + i)] = 1.0;
            }
            let mut linking = DMatrix::zeros(2 * d, n_prev);
            if t > 0 {
                let np = self.stages[t - 1].n();
                for i in 0..d {
                    for j in 0..np {
                        linking[(i, j)] = base.linking[(i, j)];
                    }
                    for k in 0..d {
                        linking[(d + i, np + k)] = -phi[(i, k)];
                    }
                }
            }
            let atoms: Vec<(Vec<f64>, f64)> = if t == 0 { vec![(vec![0.0; d], 1.0)] } else { noise[t].clone() };
            if t > 0 {
                let (mut nlo, mut nhi) = (mu.to_vec(), mu.to_vec());
                for i in 0..d {
                    for k in 0..d {
                        let (a, b) = (phi[(i, k)] * lo[k], phi[(i, k)] * hi[k]);
                        nlo[i] += a.min(b);
                        nhi[i] += a.max(b);
                    }
                    let emin = atoms.iter().map(|(e, _)| e[i]).fold(f64::INFINITY, f64::min);
                    let emax = atoms.iter().map(|(e, _)| e[i]).fold(f64::NEG_INFINITY, f64::max);
                    nlo[i] += emin;
                    nhi[i] += emax;
                }
                lo = nlo;
                hi = nhi;
            }
            let realizations = atoms
                .iter()
                .map(|(eps, p)| {
                    let mut rhs = vec![0.0; 2 * d];
                    for i in 0..d {
                        rhs[d + i] = if t == 0 { xi1[i] } else { mu[i] + eps[i] };
                    }
                    StageRealization {
                        cost: cost.clone(),
                        linking: linking.clone(),
                        tech: tech.clone(),
                        rhs,
                        prob: *p,
                    }
                })
                .collect();
            let mut lower = st.lower.clone();
            let mut upper = st.upper.clone();
            for i in 0..d {
                let pad = 1e-9 * (1.0 + lo[i].abs().max(hi[i].abs()));
                lower.push(lo[i] - pad);
                upper.push(hi[i] + pad);
            }
            stages.push(StageBlock {
                realizations,
                lower,
                upper,
            });
        }
        Ok(MultistageProblem::stagewise_independent(stages))
    }

    pub fn scenario_tree(&self, cap: usize) -> Result<ScenarioTree, ModelError> {
        ScenarioTree::build(self, 0, &[(0, 1.0)], cap)
    }

    pub fn to_extensive_form(&self) -> Result<ExtensiveForm, ModelError> {
        self.to_extensive_form_capped(DEFAULT_TREE_CAP)
    }

    pub fn to_extensive_form_capped(&self, cap: usize) -> Result<ExtensiveForm, ModelError> {
        let tree = self.scenario_tree(cap)?;
        Ok(tree.extensive_form(self, None))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub stage: usize,
    pub parent: Option<usize>,
    pub realization: usize,
    /// Unconditional path probability.
    pub prob: f64,
    /// Probability given the parent.
    pub cond_prob: f64,
    /// Replaces the realization's rhs when set.
    pub rhs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTree {
    pub nodes: Vec<TreeNode>,
    pub children: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct ExtensiveForm {
    pub lp: LpProblem,
    pub tree: ScenarioTree,
    /// First column of each node's block.
    pub offsets: Vec<usize>,
}

impl ScenarioTree {
    /// Forest whose roots sit at `stage` with the given (realization, prob)
    /// pairs, expanded breadth-first to the horizon.
    pub fn build(problem: &MultistageProblem, stage: usize, roots: &[(usize, f64)], cap: usize) -> Result<Self, ModelError> {
        let mut nodes = Vec::new();
        let mut children = Vec::new();
        for &(r, p) in roots {
            nodes.push(TreeNode {
                stage,
                parent: None,
                realization: r,
                prob: p,
                cond_prob: p,
                rhs: None,
            });
            children.push(Vec::new());
        }
        let mut i = 0;
        while i < nodes.len() {
            let (t, r, p) = (nodes[i].stage, nodes[i].realization, nodes[i].prob);
            if t + 1 < problem.horizon() {
                for (j, q) in problem.children_of(t, r) {
                    if nodes.len() >= cap {
                        return Err(ModelError::TreeTooLarge { cap });
                    }
                    nodes.push(TreeNode {
                        stage: t + 1,
                        parent: Some(i),
                        realization: j,
                        prob: p * q,
                        cond_prob: q,
                        rhs: None,
                    });
                    children.push(Vec::new());
                    let id = nodes.len() - 1;
                    children[i].push(id);
                }
            }
            i += 1;
        }
        if nodes.len() > cap {
            return Err(ModelError::TreeTooLarge { cap });
        }
        Ok(ScenarioTree { nodes, children })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Deterministic equivalent. Roots without a parent get `B x_prev`
    /// folded into their rhs when `x_prev` is given.
    pub fn extensive_form(&self, problem: &MultistageProblem, x_prev: Option<&[f64]>) -> ExtensiveForm {
        let mut offsets = Vec::with_capacity(self.nodes.len());
        let mut row_offsets = Vec::with_capacity(self.nodes.len());
        let (mut nv, mut nr) = (0, 0);
        for nd in &self.nodes {
            let st = &problem.stages[nd.stage];
            offsets.push(nv);
            row_offsets.push(nr);
            nv += st.n();
            nr += st.realizations[nd.realization].m();
        }
        let mut a = DMatrix::zeros(nr, nv);
        let mut b = vec![0.0; nr];
        let mut c = vec![0.0; nv];
        let mut lower = vec![0.0; nv];
        let mut upper = vec![0.0; nv];
        for (k, nd) in self.nodes.iter().enumerate() {
            let st = &problem.stages[nd.stage];
            let r = &st.realizations[nd.realization];
            let (o, ro) = (offsets[k], row_offsets[k]);
            for j in 0..st.n() {
                c[o + j] = nd.prob * r.cost[j];
                lower[o + j] = st.lower[j];
                upper[o + j] = st.upper[j];
            }
            let rhs = nd.rhs.as_ref().unwrap_or(&r.rhs);
            for i in 0..r.m() {
                b[ro + i] = rhs[i];
                for j in 0..r.n() {
                    a[(ro + i, o + j)] = r.tech[(i, j)];
                }
            }
            match nd.parent {
                Some(par) => {
                    let po = offsets[par];
                    for i in 0..r.m() {
                        for j in 0..r.linking.ncols() {
                            a[(ro + i, po + j)] = r.linking[(i, j)];
                        }
                    }
                }
                None => {
                    if let Some(xp) = x_prev {
                        if r.linking.ncols() > 0 {
                            let bx = &r.linking * DVector::from_column_slice(xp);
                            for i in 0..r.m() {
                                b[ro + i] -= bx[i];
                            }
                        }
                    }
                }
            }
        }
        ExtensiveForm {
            lp: LpProblem::new(c, a, b, lower, upper),
            tree: self.clone(),
            offsets,
        }
    }
}

/// Affine function `constant + gx·x + gu·u`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePiece {
    pub constant: f64,
    pub gx: Vec<f64>,
    pub gu: Vec<f64>,
}

impl AffinePiece {
    pub fn eval(&self, x: &[f64], u: &[f64]) -> f64 {
        self.constant + crate::cuts::dot(&self.gx, x) + crate::cuts::dot(&self.gu, u)
    }
}

/// Max over pieces, with the lowest index attaining it.
pub fn max_affine(pieces: &[AffinePiece], x: &[f64], u: &[f64]) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, p) in pieces.iter().enumerate() {
        let v = p.eval(x, u);
        if v > best.0 {
            best = (v, i);
        }
    }
    best
}

/// `x_{t+1} = A x_t + B u_t + b` with cost `max_k piece_k(x_t, u_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocRealization {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub drift: Vec<f64>,
    pub cost: Vec<AffinePiece>,
    pub prob: f64,
}

impl SocRealization {
    pub fn next_state(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let y = &self.a * DVector::from_column_slice(x) + &self.b * DVector::from_column_slice(u);
        y.iter().zip(&self.drift).map(|(a, b)| a + b).collect()
    }

    pub fn stage_cost(&self, x: &[f64], u: &[f64]) -> f64 {
        max_affine(&self.cost, x, u).0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocStage {
    pub realizations: Vec<SocRealization>,
    pub u_lower: Vec<f64>,
    pub u_upper: Vec<f64>,
}

impl SocStage {
    pub fn control_dim(&self) -> usize {
        self.u_lower.len()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.realizations.iter().map(|r| r.prob).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocProblem {
    pub stages: Vec<SocStage>,
    /// Pieces of `c_{T+1}(x)`; `gu` is empty.
    pub terminal: Vec<AffinePiece>,
    pub x1: Vec<f64>,
}

impl SocProblem {
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn state_dim(&self) -> usize {
        self.x1.len()
    }

    pub fn terminal_cost(&self, x: &[f64]) -> f64 {
        if self.terminal.is_empty() {
            0.0
        } else {
            max_affine(&self.terminal, x, &[]).0
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.state_dim();
        if self.stages.is_empty() {
            out.push("no stages".to_string());
        }
        for (t, st) in self.stages.iter().enumerate() {
            let m = st.control_dim();
            if st.u_upper.len() != m {
                out.push(format!("stage {t}: control bounds differ in length"));
            }
            if st.u_lower.iter().zip(&st.u_upper).any(|(l, u)| l > u) {
                out.push(format!("stage {t}: control lower bound above upper bound"));
            }
            if st.realizations.is_empty() {
                out.push(format!("stage {t}: no realizations"));
            }
            let s: f64 = st.realizations.iter().map(|r| r.prob).sum();
            if (s - 1.0).abs() > PROB_TOL {
                out.push(format!("stage {t}: probability sum {s}"));
            }
            for (j, r) in st.realizations.iter().enumerate() {
                if !(r.prob > 0.0) {
                    out.push(format!("stage {t} realization {j}: probability must be positive"));
                }
                if r.a.shape() != (n, n) || r.b.shape() != (n, m) || r.drift.len() != n {
                    out.push(format!("stage {t} realization {j}: dynamics dimension mismatch"));
                }
                if r.cost.is_empty() {
                    out.push(format!("stage {t} realization {j}: cost pieces empty"));
                }
                if r.cost.iter().any(|p| p.gx.len() != n || p.gu.len() != m) {
                    out.push(format!("stage {t} realization {j}: cost piece dimension mismatch"));
                }
            }
        }
        if self.terminal.iter().any(|p| p.gx.len() != n || !p.gu.is_empty()) {
            out.push("terminal piece dimension mismatch".to_string());
        }
        out
    }
}
