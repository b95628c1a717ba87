//! Bounded-variable LP kernel.
//!
//! Problems are in the form `min c·x  s.t.  A x = b,  l <= x <= u`, where
//! bounds may be infinite. Solutions carry the equality-row duals, which is
//! what every cut in this crate is built from.

mod cutlp;
mod simplex;

use std::fmt::Write as _;

use nalgebra::DMatrix;

pub use cutlp::{solve_with_cuts, CutLp, CutLpSolution, CutsSolution};
pub use simplex::{SimplexOptions, VarStatus};

#[derive(Debug, thiserror::Error)]
pub enum LpError {
    #[error("degenerate cycle: pivot cap of {0} reached")]
    DegenerateCycle(usize),
    #[error("singular basis during refactorization")]
    SingularBasis,
    #[error("malformed LP: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpProblem {
    pub c: Vec<f64>,
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Simplex basis over the structural columns followed by one artificial
/// column per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    pub head: Vec<usize>,
    pub status: Vec<VarStatus>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub value: f64,
    pub x: Vec<f64>,
    /// One multiplier per equality row: d(value)/d(b_i).
    pub duals: Vec<f64>,
    /// `c - A^T duals`, the bound multipliers.
    pub reduced_costs: Vec<f64>,
    pub basis: Option<Basis>,
    pub pivots: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    pub(crate) fn not_optimal(status: LpStatus, n: usize, m: usize, pivots: usize) -> Self {
        let value = match status {
            LpStatus::Infeasible => f64::INFINITY,
            LpStatus::Unbounded => f64::NEG_INFINITY,
            LpStatus::Optimal => f64::NAN,
        };
        LpSolution {
            status,
            value,
            x: vec![f64::NAN; n],
            duals: vec![f64::NAN; m],
            reduced_costs: vec![f64::NAN; n],
            basis: None,
            pivots,
        }
    }
}

impl LpProblem {
    pub fn new(c: Vec<f64>, a: DMatrix<f64>, b: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        LpProblem { c, a, b, lower, upper }
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn check(&self) -> Result<(), LpError> {
        let n = self.c.len();
        let m = self.b.len();
        if self.a.nrows() != m || self.a.ncols() != n {
            return Err(LpError::Malformed(format!(
                "A is {}x{}, expected {}x{}",
                self.a.nrows(),
                self.a.ncols(),
                m,
                n
            )));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Malformed("bound vectors have wrong length".into()));
        }
        for j in 0..n {
            if self.lower[j] > self.upper[j] || self.lower[j] == f64::INFINITY || self.upper[j] == f64::NEG_INFINITY {
                return Err(LpError::Malformed(format!("bad bounds on x{j}")));
            }
        }
        let finite = self.c.iter().chain(self.b.iter()).chain(self.a.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(LpError::Malformed("non-finite data".into()));
        }
        Ok(())
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        simplex::solve(self, None, &SimplexOptions::default())
    }

    pub fn solve_from(&self, basis: &Basis) -> Result<LpSolution, LpError> {
        simplex::solve(self, Some(basis), &SimplexOptions::default())
    }

    pub fn solve_with_options(&self, basis: Option<&Basis>, opts: &SimplexOptions) -> Result<LpSolution, LpError> {
        simplex::solve(self, basis, opts)
    }

    /// Plain text dump: objective row, one line per constraint row, then bounds.
    pub fn debug_dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "LP {} rows {} cols", self.num_rows(), self.num_vars());
        let _ = write!(s, "obj");
        for v in &self.c {
            let _ = write!(s, " {v:e}");
        }
        let _ = writeln!(s);
        for i in 0..self.num_rows() {
            let _ = write!(s, "row {i}");
            for j in 0..self.num_vars() {
                let _ = write!(s, " {:e}", self.a[(i, j)]);
            }
            let _ = writeln!(s, " = {:e}", self.b[i]);
        }
        for j in 0..self.num_vars() {
            let _ = writeln!(s, "bnd {j} {:e} {:e}", self.lower[j], self.upper[j]);
        }
        s
    }
}
