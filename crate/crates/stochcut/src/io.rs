//! Problem files: a JSON document holding a linear multistage program,
//! an optional Markov lattice, risk measures, and a control problem.
//!
//! ```json
//! {
//!   "horizon": 2,
//!   "stages": [
//!     {"realizations": [{"c": [1.0], "A": [], "B": null, "b": [], "p": 1.0}],
//!      "lb": [0.0], "ub": [10.0]},
//!     {"realizations": [{"c": [0.5, 2.0], "A": [[1.0, -1.0]], "B": [[-1.0]], "b": [-1.0], "p": 0.5},
//!                       {"c": [0.5, 2.0], "A": [[1.0, -1.0]], "B": [[-1.0]], "b": [-3.0], "p": 0.5}],
//!      "lb": [0.0, 0.0], "ub": [null, null]}
//!   ],
//!   "risk": {"kind": "avar", "alpha": 0.5}
//! }
//! ```
//!
//! Matrices are dense row-major arrays or `{"rows", "cols", "entries"}`
//! with `[i, j, value]` triplets (duplicates add up). A `null` upper bound
//! is +∞, a `null` lower bound −∞; only the stochastic approximation solver
//! accepts the latter.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dsa::DsaProblem;
use crate::horizon::StationaryProblem;
use crate::model::{
    AffinePiece, Dependence, MarkovLattice, MultistageProblem, SocProblem, SocRealization, SocStage, StageBlock,
    StageRealization, Violation,
};
use crate::risk::{CoherentRisk, PsiForm};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("malformed problem file: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("invalid problem: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

pub type Result<T> = std::result::Result<T, IoError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Dense(Vec<Vec<f64>>),
    Sparse {
        rows: usize,
        cols: usize,
        entries: Vec<(usize, usize, f64)>,
    },
}

impl MatrixSpec {
    /// Dense below a quarter fill or for small shapes, else triplets.
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let size = m.nrows() * m.ncols();
        let nnz = m.iter().filter(|v| **v != 0.0).count();
        if size >= 32 && 4 * nnz <= size {
            let mut entries = Vec::with_capacity(nnz);
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    if m[(i, j)] != 0.0 {
                        entries.push((i, j, m[(i, j)]));
                    }
                }
            }
            MatrixSpec::Sparse {
                rows: m.nrows(),
                cols: m.ncols(),
                entries,
            }
        } else {
            MatrixSpec::Dense((0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect())
        }
    }

    /// `cols` is used for an empty dense matrix and checked otherwise.
    pub fn to_matrix(&self, rows: usize, cols: usize, what: &str) -> std::result::Result<DMatrix<f64>, String> {
        match self {
            MatrixSpec::Dense(r) => {
                if r.len() != rows {
                    return Err(format!("{what}: {} rows, expected {rows}", r.len()));
                }
                if let Some(bad) = r.iter().position(|row| row.len() != cols) {
                    return Err(format!("{what}: row {bad} has {} entries, expected {cols}", r[bad].len()));
                }
                Ok(DMatrix::from_fn(rows, cols, |i, j| r[i][j]))
            }
            MatrixSpec::Sparse { rows: mr, cols: mc, entries } => {
                if (*mr, *mc) != (rows, cols) {
                    return Err(format!("{what}: shape {mr}x{mc}, expected {rows}x{cols}"));
                }
                let mut m = DMatrix::zeros(rows, cols);
                for &(i, j, v) in entries {
                    if i >= rows || j >= cols {
                        return Err(format!("{what}: entry ({i}, {j}) outside {rows}x{cols}"));
                    }
                    m[(i, j)] += v;
                }
                Ok(m)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RealizationSpec {
    c: Vec<f64>,
    #[serde(rename = "A")]
    a: MatrixSpec,
    #[serde(rename = "B", default)]
    b_mat: Option<MatrixSpec>,
    b: Vec<f64>,
    p: f64,
    /// Diagonal quadratic cost, used only by the stochastic approximation
    /// solver.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StageSpec {
    realizations: Vec<RealizationSpec>,
    #[serde(default)]
    lb: Option<Vec<Option<f64>>>,
    #[serde(default)]
    ub: Option<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LatticeSpec {
    centers: Vec<Vec<Vec<f64>>>,
    transitions: Vec<MatrixSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum RiskSpec {
    One(CoherentRisk),
    Many(Vec<CoherentRisk>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PieceSpec {
    constant: f64,
    gx: Vec<f64>,
    #[serde(default)]
    gu: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SocRealizationSpec {
    #[serde(rename = "A")]
    a: MatrixSpec,
    #[serde(rename = "B")]
    b_mat: MatrixSpec,
    b: Vec<f64>,
    cost: Vec<PieceSpec>,
    p: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SocStageSpec {
    realizations: Vec<SocRealizationSpec>,
    u_lower: Vec<Option<f64>>,
    u_upper: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxSpec {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SocSpec {
    x1: Vec<f64>,
    stages: Vec<SocStageSpec>,
    #[serde(default)]
    terminal: Vec<PieceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    state_box: Option<BoxSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    stages: Vec<StageSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lattice: Option<LatticeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    risk: Option<RiskSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    soc: Option<SocSpec>,
}

/// Discounting data turning the control block into an infinite-horizon
/// problem whose stages repeat with period `stages.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Discount {
    pub gamma: f64,
    pub kappa: Option<f64>,
    pub state_box: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemDocument {
    pub problem: Option<MultistageProblem>,
    /// `quadratic[t][j]` is the optional diagonal quadratic cost of
    /// realization j of stage t; empty when no stage has any.
    pub quadratic: Vec<Vec<Option<Vec<f64>>>>,
    pub risk: Vec<CoherentRisk>,
    pub soc: Option<SocProblem>,
    pub discount: Option<Discount>,
}

impl ProblemDocument {
    pub fn linear(problem: MultistageProblem) -> Self {
        ProblemDocument {
            problem: Some(problem),
            quadratic: Vec::new(),
            risk: Vec::new(),
            soc: None,
            discount: None,
        }
    }

    pub fn control(soc: SocProblem) -> Self {
        ProblemDocument {
            problem: None,
            quadratic: Vec::new(),
            risk: Vec::new(),
            soc: Some(soc),
            discount: None,
        }
    }

    /// Ψ parameters matching the risk block: one shared entry or one per
    /// stage.
    pub fn psi(&self) -> Vec<PsiForm> {
        self.risk.iter().map(|r| psi_of(*r)).collect()
    }

    /// The linear program as a stochastic approximation problem, with the
    /// quadratic terms attached.
    pub fn dsa_problem(&self) -> std::result::Result<DsaProblem, String> {
        let p = self.problem.as_ref().ok_or("the document has no linear stages")?;
        let mut d = DsaProblem::from_multistage(p).map_err(|e| e.to_string())?;
        for (t, st) in self.quadratic.iter().enumerate() {
            for (j, q) in st.iter().enumerate() {
                if let Some(q) = q {
                    d.stages[t].realizations[j].q = q.clone();
                }
            }
        }
        Ok(d)
    }

    pub fn stationary(&self) -> std::result::Result<StationaryProblem, String> {
        let soc = self.soc.as_ref().ok_or("the document has no control block")?;
        let disc = self.discount.as_ref().ok_or("the control block has no discount factor")?;
        let psi = match self.risk.as_slice() {
            [] => None,
            [r] => Some(psi_of(*r)),
            _ => return Err("an infinite-horizon problem takes a single risk measure".into()),
        };
        Ok(StationaryProblem {
            blocks: soc.stages.clone(),
            gamma: disc.gamma,
            kappa: disc.kappa,
            state_box: disc.state_box.clone(),
            x1: soc.x1.clone(),
            psi,
        })
    }
}

pub fn psi_of(r: CoherentRisk) -> PsiForm {
    match r {
        CoherentRisk::Expectation => PsiForm::IDENTITY,
        CoherentRisk::AVaR { alpha } => PsiForm { lambda: 1.0, alpha },
        CoherentRisk::Combo { lambda, alpha } => PsiForm { lambda, alpha },
    }
}

fn upper_of(v: &[Option<f64>]) -> Vec<f64> {
    v.iter().map(|x| x.unwrap_or(f64::INFINITY)).collect()
}

fn lower_of(v: &[Option<f64>]) -> Vec<f64> {
    v.iter().map(|x| x.unwrap_or(f64::NEG_INFINITY)).collect()
}

fn opt_of(v: &[f64]) -> Vec<Option<f64>> {
    v.iter().map(|x| x.is_finite().then_some(*x)).collect()
}

fn piece_of(p: &PieceSpec) -> AffinePiece {
    AffinePiece {
        constant: p.constant,
        gx: p.gx.clone(),
        gu: p.gu.clone(),
    }
}

fn piece_spec(p: &AffinePiece) -> PieceSpec {
    PieceSpec {
        constant: p.constant,
        gx: p.gx.clone(),
        gu: p.gu.clone(),
    }
}

fn build(spec: FileSpec) -> std::result::Result<ProblemDocument, Vec<String>> {
    let mut errs = Vec::new();
    if spec.stages.is_empty() && spec.soc.is_none() {
        errs.push("neither linear stages nor a control block is given".to_string());
    }
    let mut problem = None;
    let mut quadratic = Vec::new();
    if !spec.stages.is_empty() {
        if let Some(h) = spec.horizon {
            if h != spec.stages.len() {
                errs.push(format!("horizon {h} but {} stages", spec.stages.len()));
            }
        }
        let mut stages = Vec::with_capacity(spec.stages.len());
        let mut prev_n = 0;
        let mut any_q = false;
        for (t, st) in spec.stages.iter().enumerate() {
            let n = st.realizations.first().map_or(0, |r| r.c.len());
            let mut reals = Vec::with_capacity(st.realizations.len());
            let mut qs = Vec::with_capacity(st.realizations.len());
            for (j, r) in st.realizations.iter().enumerate() {
                let m = r.b.len();
                let tech = r.a.to_matrix(m, r.c.len(), &format!("stage {t} realization {j} A"));
                let linking = match &r.b_mat {
                    Some(b) => b.to_matrix(m, prev_n, &format!("stage {t} realization {j} B")),
                    None if t == 0 => Ok(DMatrix::zeros(m, 0)),
                    None => Err(format!("stage {t} realization {j}: B is required after the first stage")),
                };
                match (tech, linking) {
                    (Ok(tech), Ok(linking)) => reals.push(StageRealization {
                        cost: r.c.clone(),
                        linking,
                        tech,
                        rhs: r.b.clone(),
                        prob: r.p,
                    }),
                    (a, b) => errs.extend(a.err().into_iter().chain(b.err())),
                }
                if r.q.as_ref().is_some_and(|q| q.len() != r.c.len()) {
                    errs.push(format!("stage {t} realization {j}: q and c differ in length"));
                }
                any_q |= r.q.is_some();
                qs.push(r.q.clone());
            }
            quadratic.push(qs);
            let lower = st.lb.as_deref().map_or(vec![0.0; n], lower_of);
            let upper = st.ub.as_deref().map_or(vec![f64::INFINITY; n], upper_of);
            stages.push(StageBlock {
                realizations: reals,
                lower,
                upper,
            });
            prev_n = n;
        }
        if !any_q {
            quadratic.clear();
        }
        let dependence = match &spec.lattice {
            None => Dependence::StagewiseIndependent,
            Some(l) => {
                let mut transitions = Vec::new();
                for (t, m) in l.transitions.iter().enumerate() {
                    let rows = l.centers.get(t).map_or(0, |c| c.len());
                    let cols = l.centers.get(t + 1).map_or(0, |c| c.len());
                    match m.to_matrix(rows, cols, &format!("lattice transition {t}")) {
                        Ok(m) => transitions.push(m),
                        Err(e) => errs.push(e),
                    }
                }
                Dependence::MarkovLattice(MarkovLattice {
                    centers: l.centers.clone(),
                    transitions,
                })
            }
        };
        let p = MultistageProblem { stages, dependence };
        // free variables are legal for the stochastic approximation solver;
        // the cutting-plane solvers reject them when they start
        if errs.is_empty() {
            errs.extend(
                p.validate()
                    .iter()
                    .filter(|v| !matches!(v, Violation::UnboundedBelow { .. }))
                    .map(|v| v.to_string()),
            );
        }
        problem = Some(p);
    } else if spec.lattice.is_some() {
        errs.push("a lattice block needs linear stages".to_string());
    }

    let mut soc = None;
    let mut discount = None;
    if let Some(s) = &spec.soc {
        let n = s.x1.len();
        let mut stages = Vec::new();
        for (t, st) in s.stages.iter().enumerate() {
            let m = st.u_lower.len();
            let mut reals = Vec::new();
            for (j, r) in st.realizations.iter().enumerate() {
                let a = r.a.to_matrix(n, n, &format!("control stage {t} realization {j} A"));
                let b = r.b_mat.to_matrix(n, m, &format!("control stage {t} realization {j} B"));
                match (a, b) {
                    (Ok(a), Ok(b)) => reals.push(SocRealization {
                        a,
                        b,
                        drift: r.b.clone(),
                        cost: r.cost.iter().map(piece_of).collect(),
                        prob: r.p,
                    }),
                    (a, b) => errs.extend(a.err().into_iter().chain(b.err())),
                }
            }
            stages.push(SocStage {
                realizations: reals,
                u_lower: lower_of(&st.u_lower),
                u_upper: upper_of(&st.u_upper),
            });
        }
        let p = SocProblem {
            stages,
            terminal: s.terminal.iter().map(piece_of).collect(),
            x1: s.x1.clone(),
        };
        if errs.is_empty() {
            errs.extend(p.validate().into_iter().map(|e| format!("control block: {e}")));
        }
        if let Some(gamma) = s.gamma {
            discount = Some(Discount {
                gamma,
                kappa: s.kappa,
                state_box: s.state_box.as_ref().map(|b| (b.lower.clone(), b.upper.clone())),
            });
        } else if s.kappa.is_some() || s.state_box.is_some() {
            errs.push("kappa and state_box need a discount factor gamma".to_string());
        }
        soc = Some(p);
    }

    let risk = match spec.risk {
        None => Vec::new(),
        Some(RiskSpec::One(r)) => vec![r],
        Some(RiskSpec::Many(v)) => v,
    };
    for r in &risk {
        if let Err(e) = r.validate() {
            errs.push(format!("risk: {e}"));
        }
    }
    let doc = ProblemDocument {
        problem,
        quadratic,
        risk,
        soc,
        discount,
    };
    if errs.is_empty() {
        if let Ok(st) = doc.stationary() {
            errs.extend(st.validate().into_iter().map(|e| format!("discounted problem: {e}")));
        }
    }
    if errs.is_empty() {
        Ok(doc)
    } else {
        Err(errs)
    }
}

fn spec_of(doc: &ProblemDocument) -> FileSpec {
    let mut stages = Vec::new();
    let mut lattice = None;
    if let Some(p) = &doc.problem {
        for (t, st) in p.stages.iter().enumerate() {
            let realizations = st
                .realizations
                .iter()
                .enumerate()
                .map(|(j, r)| RealizationSpec {
                    c: r.cost.clone(),
                    a: MatrixSpec::from_matrix(&r.tech),
                    b_mat: (t > 0 || r.linking.ncols() > 0).then(|| MatrixSpec::from_matrix(&r.linking)),
                    b: r.rhs.clone(),
                    p: r.prob,
                    q: doc.quadratic.get(t).and_then(|q| q.get(j)).cloned().flatten(),
                })
                .collect();
            stages.push(StageSpec {
                realizations,
                lb: Some(opt_of(&st.lower)),
                ub: Some(opt_of(&st.upper)),
            });
        }
        if let Some(l) = p.lattice() {
            lattice = Some(LatticeSpec {
                centers: l.centers.clone(),
                transitions: l.transitions.iter().map(MatrixSpec::from_matrix).collect(),
            });
        }
    }
    let soc = doc.soc.as_ref().map(|s| SocSpec {
        x1: s.x1.clone(),
        stages: s
            .stages
            .iter()
            .map(|st| SocStageSpec {
                realizations: st
                    .realizations
                    .iter()
                    .map(|r| SocRealizationSpec {
                        a: MatrixSpec::from_matrix(&r.a),
                        b_mat: MatrixSpec::from_matrix(&r.b),
                        b: r.drift.clone(),
                        cost: r.cost.iter().map(piece_spec).collect(),
                        p: r.prob,
                    })
                    .collect(),
                u_lower: opt_of(&st.u_lower),
                u_upper: opt_of(&st.u_upper),
            })
            .collect(),
        terminal: s.terminal.iter().map(piece_spec).collect(),
        gamma: doc.discount.as_ref().map(|d| d.gamma),
        kappa: doc.discount.as_ref().and_then(|d| d.kappa),
        state_box: doc.discount.as_ref().and_then(|d| d.state_box.as_ref()).map(|(l, u)| BoxSpec {
            lower: l.clone(),
            upper: u.clone(),
        }),
    });
    FileSpec {
        horizon: doc.problem.as_ref().map(|p| p.horizon()),
        stages,
        lattice,
        risk: (!doc.risk.is_empty()).then(|| RiskSpec::Many(doc.risk.clone())),
        soc,
    }
}

pub fn parse_problem(text: &str) -> Result<ProblemDocument> {
    let spec: FileSpec = serde_json::from_str(text)?;
    build(spec).map_err(IoError::Invalid)
}

pub fn emit_problem(doc: &ProblemDocument) -> String {
    serde_json::to_string_pretty(&spec_of(doc)).expect("problem documents serialize")
}

pub fn read_problem(path: &Path) -> Result<ProblemDocument> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse_problem(&text)
}

/// A risk file holds one risk measure or a list of them.
pub fn parse_risk(text: &str) -> Result<Vec<CoherentRisk>> {
    let risks = match serde_json::from_str::<RiskSpec>(text)? {
        RiskSpec::One(r) => vec![r],
        RiskSpec::Many(v) => v,
    };
    let errs: Vec<String> = risks.iter().filter_map(|r| r.validate().err()).map(|e| e.to_string()).collect();
    if errs.is_empty() {
        Ok(risks)
    } else {
        Err(IoError::Invalid(errs))
    }
}

/// The lattice block of a problem file.
pub fn lattice_json(lattice: &MarkovLattice) -> serde_json::Value {
    serde_json::json!({
        "lattice": LatticeSpec {
            centers: lattice.centers.clone(),
            transitions: lattice.transitions.iter().map(MatrixSpec::from_matrix).collect(),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use proptest::{prop_assert_eq, proptest};

    fn round_trip(doc: &ProblemDocument) -> ProblemDocument {
        parse_problem(&emit_problem(doc)).unwrap()
    }

    #[test]
    fn module_example_parses() {
        let text = r#"{
          "horizon": 2,
          "stages": [
            {"realizations": [{"c": [1.0], "A": [], "B": null, "b": [], "p": 1.0}],
             "lb": [0.0], "ub": [10.0]},
            {"realizations": [{"c": [0.5, 2.0], "A": [[1.0, -1.0]], "B": [[-1.0]], "b": [-1.0], "p": 0.5},
                              {"c": [0.5, 2.0], "A": [[1.0, -1.0]], "B": [[-1.0]], "b": [-3.0], "p": 0.5}],
             "lb": [0.0, 0.0], "ub": [null, null]}
          ],
          "risk": {"kind": "avar", "alpha": 0.5}
        }"#;
        let doc = parse_problem(text).unwrap();
        let p = doc.problem.as_ref().unwrap();
        let mut want = fixtures::newsvendor();
        want.stages[1].upper = vec![f64::INFINITY; 2];
        assert_eq!(p, &want);
        assert_eq!(doc.risk, vec![CoherentRisk::AVaR { alpha: 0.5 }]);
        assert_eq!(round_trip(&doc), doc);
    }

    #[test]
    fn sparse_triplets_add_up() {
        let s = MatrixSpec::Sparse {
            rows: 2,
            cols: 3,
            entries: vec![(0, 1, 1.5), (1, 2, -1.0), (0, 1, 0.5)],
        };
        let m = s.to_matrix(2, 3, "m").unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 3, &[0.0, 2.0, 0.0, 0.0, 0.0, -1.0]));
        assert!(s.to_matrix(3, 2, "m").is_err());
        let out = MatrixSpec::Sparse {
            rows: 1,
            cols: 1,
            entries: vec![(1, 0, 1.0)],
        };
        assert!(out.to_matrix(1, 1, "m").is_err());
    }

    #[test]
    fn sparse_emission_for_large_sparse_matrices() {
        let mut m = DMatrix::zeros(6, 8);
        m[(2, 5)] = 3.25;
        assert!(matches!(MatrixSpec::from_matrix(&m), MatrixSpec::Sparse { .. }));
        assert_eq!(MatrixSpec::from_matrix(&m).to_matrix(6, 8, "m").unwrap(), m);
    }

    #[test]
    fn invalid_documents_are_rejected() {
        let bad_prob = r#"{"stages": [{"realizations": [{"c": [1.0], "A": [], "b": [], "p": 0.7}]}]}"#;
        assert!(matches!(parse_problem(bad_prob), Err(IoError::Invalid(_))));
        let missing_b = r#"{"stages": [
            {"realizations": [{"c": [1.0], "A": [], "b": [], "p": 1.0}], "ub": [1.0]},
            {"realizations": [{"c": [1.0], "A": [[1.0]], "b": [1.0], "p": 1.0}], "ub": [1.0]}]}"#;
        assert!(matches!(parse_problem(missing_b), Err(IoError::Invalid(_))));
        let unknown = r#"{"stages": [], "colour": 1}"#;
        assert!(matches!(parse_problem(unknown), Err(IoError::Syntax(_))));
        assert!(matches!(parse_problem("{}"), Err(IoError::Invalid(_))));
        let bad_risk = r#"{"soc": {"x1": [0.0], "stages": [{"realizations": [{"A": [[1.0]], "B": [[1.0]], "b": [0.0],
            "cost": [{"constant": 0.0, "gx": [1.0], "gu": [0.0]}], "p": 1.0}], "u_lower": [0.0], "u_upper": [1.0]}]},
            "risk": {"kind": "avar", "alpha": 1.5}}"#;
        assert!(matches!(parse_problem(bad_risk), Err(IoError::Invalid(_))));
    }

    #[test]
    fn control_and_discount_round_trip() {
        let mut doc = ProblemDocument::control(fixtures::soc_scalar(3, &[(-0.5, 0.5), (0.5, 0.5)]));
        doc.risk = vec![CoherentRisk::Combo { lambda: 0.4, alpha: 0.8 }];
        assert_eq!(round_trip(&doc), doc);
        let st = fixtures::stationary_scalar();
        let mut doc = ProblemDocument::control(SocProblem {
            stages: st.blocks.clone(),
            terminal: vec![],
            x1: st.x1.clone(),
        });
        doc.discount = Some(Discount {
            gamma: st.gamma,
            kappa: st.kappa,
            state_box: st.state_box.clone(),
        });
        let back = round_trip(&doc);
        assert_eq!(back, doc);
        assert_eq!(back.stationary().unwrap(), st);
    }

    #[test]
    fn lattice_and_quadratic_round_trip() {
        let mut doc = ProblemDocument::linear(fixtures::random_instance(4, 3, 2));
        let p = doc.problem.as_mut().unwrap();
        p.dependence = Dependence::MarkovLattice(MarkovLattice {
            centers: vec![vec![vec![0.0]], vec![vec![1.0], vec![2.0]], vec![vec![1.5], vec![-2.0]]],
            transitions: vec![
                DMatrix::from_row_slice(1, 2, &[0.5, 0.5]),
                DMatrix::from_row_slice(2, 2, &[0.25, 0.75, 1.0, 0.0]),
            ],
        });
        let n: Vec<usize> = p.stages.iter().map(|s| s.n()).collect();
        doc.quadratic = vec![vec![Some(vec![1.0; n[0]])], vec![None, None], vec![None, Some(vec![0.5; n[2]])]];
        assert_eq!(round_trip(&doc), doc);
    }

    #[test]
    fn risk_files() {
        assert_eq!(parse_risk(r#"{"kind": "expectation"}"#).unwrap(), vec![CoherentRisk::Expectation]);
        let v = parse_risk(r#"[{"kind": "avar", "alpha": 0.9}, {"kind": "combo", "lambda": 0.5, "alpha": 0.5}]"#).unwrap();
        assert_eq!(v.len(), 2);
        assert!(parse_risk(r#"{"kind": "combo", "lambda": 2.0, "alpha": 0.5}"#).is_err());
    }

    proptest! {
        #![proptest_config(proptest::test_runner::Config::with_cases(64))]
        #[test]
        fn parse_emit_parse_is_identity(seed in 0u64..10_000, horizon in 2usize..5, n in 1usize..4, two in proptest::bool::ANY) {
            let p = if two {
                fixtures::two_state_instance(seed, horizon, n)
            } else {
                fixtures::random_instance(seed, horizon, n)
            };
            let doc = ProblemDocument::linear(p);
            let once = parse_problem(&emit_problem(&doc)).unwrap();
            prop_assert_eq!(&once, &doc);
            let twice = parse_problem(&emit_problem(&once)).unwrap();
            prop_assert_eq!(twice, once);
        }
    }
}
