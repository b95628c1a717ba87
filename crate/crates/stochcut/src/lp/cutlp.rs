//! LPs with epigraph terms `θ >= max_i α_i + β_i·(M y + z0)`.
//!
//! Cut rows are generated lazily: the LP is solved over a working subset of
//! each pool and the most violated cut is added until none is violated. The
//! final point is optimal for the LP with every cut present, and its duals
//! extended by zeros are optimal duals of that LP.

use nalgebra::DMatrix;

use super::{LpError, LpProblem, LpStatus};
use crate::cuts::{dot, CutPool};

/// Pools with at most this many cuts enter the LP in full.
const FULL_POOL: usize = 10;

struct Term<'p> {
    pool: &'p CutPool,
    var: usize,
    cols: Vec<usize>,
    map: DMatrix<f64>,
    offset: Vec<f64>,
}

impl Term<'_> {
    fn point(&self, y: &[f64]) -> Vec<f64> {
        let mut z = self.offset.clone();
        for (k, &c) in self.cols.iter().enumerate() {
            let v = y[c];
            if v != 0.0 {
                for (i, zi) in z.iter_mut().enumerate() {
                    *zi += self.map[(i, k)] * v;
                }
            }
        }
        z
    }
}

/// Small LP builder over equality rows plus epigraph terms.
#[derive(Default)]
pub struct CutLp<'p> {
    c: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<(Vec<(usize, f64)>, f64)>,
    terms: Vec<Term<'p>>,
}

#[derive(Debug, Clone)]
pub struct CutsSolution {
    pub status: LpStatus,
    pub value: f64,
    pub x: Vec<f64>,
    pub row_duals: Vec<f64>,
    /// Per epigraph term: (cut index, multiplier) for cuts in the final LP.
    pub cut_duals: Vec<Vec<(usize, f64)>>,
    pub rounds: usize,
}

impl<'p> CutLp<'p> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn add_var(&mut self, cost: f64, lo: f64, hi: f64) -> usize {
        self.c.push(cost);
        self.lower.push(lo);
        self.upper.push(hi);
        self.c.len() - 1
    }

    /// Adds a block of variables and returns the index of the first.
    pub fn add_vars(&mut self, costs: &[f64], lo: &[f64], hi: &[f64]) -> usize {
        let start = self.c.len();
        for k in 0..costs.len() {
            self.add_var(costs[k], lo[k], hi[k]);
        }
        start
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.rows.push((coeffs, rhs));
        self.rows.len() - 1
    }

    /// Rows `a · y[start..start+a.ncols()] = rhs`; returns the first row index.
    pub fn add_dense_rows(&mut self, a: &DMatrix<f64>, start: usize, rhs: &[f64]) -> usize {
        let first = self.rows.len();
        for i in 0..a.nrows() {
            let coeffs = (0..a.ncols())
                .filter(|&j| a[(i, j)] != 0.0)
                .map(|j| (start + j, a[(i, j)]))
                .collect();
            self.add_row(coeffs, rhs[i]);
        }
        first
    }

    /// New free variable θ with objective weight `weight` and
    /// `θ >= pool(map · y[cols] + offset)`. Returns the index of θ.
    pub fn add_epigraph(
        &mut self,
        pool: &'p CutPool,
        weight: f64,
        cols: Vec<usize>,
        map: DMatrix<f64>,
        offset: Vec<f64>,
    ) -> usize {
        assert_eq!(map.nrows(), pool.dim, "epigraph map rows must match pool dimension");
        assert_eq!(map.ncols(), cols.len());
        assert_eq!(offset.len(), pool.dim);
        let var = self.add_var(weight, f64::NEG_INFINITY, f64::INFINITY);
        self.terms.push(Term {
            pool,
            var,
            cols,
            map,
            offset,
        });
        var
    }

    /// Epigraph of `pool(y[start..start+dim])`.
    pub fn add_epigraph_identity(&mut self, pool: &'p CutPool, weight: f64, start: usize) -> usize {
        let d = pool.dim;
        self.add_epigraph(pool, weight, (start..start + d).collect(), DMatrix::identity(d, d), vec![0.0; d])
    }

    fn start_point(&self) -> Vec<f64> {
        (0..self.c.len())
            .map(|j| 0.0f64.max(self.lower[j]).min(self.upper[j]))
            .collect()
    }

    fn assemble(&self, working: &[Vec<usize>]) -> LpProblem {
        let nv = self.c.len();
        let ncut: usize = working.iter().map(|w| w.len()).sum();
        let n = nv + ncut;
        let m = self.rows.len() + ncut;
        let mut a = DMatrix::zeros(m, n);
        let mut b = Vec::with_capacity(m);
        for (i, (coeffs, rhs)) in self.rows.iter().enumerate() {
            for &(j, v) in coeffs {
                a[(i, j)] += v;
            }
            b.push(*rhs);
        }
        let mut c = self.c.clone();
        let mut lower = self.lower.clone();
        let mut upper = self.upper.clone();
        let mut row = self.rows.len();
        let mut slack = nv;
        for (t, w) in self.terms.iter().zip(working) {
            for &ci in w {
                let cut = &t.pool.cuts()[ci];
                // θ - β^T M y - s = α + β·z0
                a[(row, t.var)] += 1.0;
                for (k, &col) in t.cols.iter().enumerate() {
                    let mut coef = 0.0;
                    for (i, bi) in cut.beta.iter().enumerate() {
                        coef += bi * t.map[(i, k)];
                    }
                    a[(row, col)] -= coef;
                }
                a[(row, slack)] = -1.0;
                b.push(cut.alpha + dot(&cut.beta, &t.offset));
                c.push(0.0);
                lower.push(0.0);
                upper.push(f64::INFINITY);
                row += 1;
                slack += 1;
            }
        }
        LpProblem::new(c, a, b, lower, upper)
    }

    pub fn solve(&self) -> Result<CutsSolution, LpError> {
        let y0 = self.start_point();
        let mut working: Vec<Vec<usize>> = self
            .terms
            .iter()
            .map(|t| {
                if t.pool.len() <= FULL_POOL {
                    (0..t.pool.len()).collect()
                } else {
                    let (_, i) = t.pool.evaluate(&t.point(&y0)).expect("non-empty pool");
                    if i == 0 {
                        vec![0]
                    } else {
                        vec![0, i]
                    }
                }
            })
            .collect();
        let nv = self.c.len();
        let mut rounds = 0;
        loop {
            rounds += 1;
            let lp = self.assemble(&working);
            let sol = lp.solve()?;
            match sol.status {
                LpStatus::Infeasible => {
                    return Ok(self.failed(LpStatus::Infeasible, rounds));
                }
                LpStatus::Unbounded => {
                    let full = self.terms.iter().zip(&working).all(|(t, w)| w.len() == t.pool.len());
                    if full {
                        return Ok(self.failed(LpStatus::Unbounded, rounds));
                    }
                    for (t, w) in self.terms.iter().zip(working.iter_mut()) {
                        *w = (0..t.pool.len()).collect();
                    }
                    continue;
                }
                LpStatus::Optimal => {}
            }
            let y = &sol.x[..nv];
            let mut added = false;
            for (t, w) in self.terms.iter().zip(working.iter_mut()) {
                let (v, i) = t.pool.evaluate(&t.point(y)).expect("non-empty pool");
                let theta = y[t.var];
                if v > theta + 1e-9 * (1.0 + v.abs()) && !w.contains(&i) {
                    w.push(i);
                    added = true;
                }
            }
            if added {
                continue;
            }
            let nrows = self.rows.len();
            let mut cut_duals = Vec::with_capacity(self.terms.len());
            let mut r = nrows;
            for w in &working {
                let mut v = Vec::with_capacity(w.len());
                for &ci in w {
                    v.push((ci, sol.duals[r]));
                    r += 1;
                }
                cut_duals.push(v);
            }
            return Ok(CutsSolution {
                status: LpStatus::Optimal,
                value: sol.value,
                x: y.to_vec(),
                row_duals: sol.duals[..nrows].to_vec(),
                cut_duals,
                rounds,
            });
        }
    }

    fn failed(&self, status: LpStatus, rounds: usize) -> CutsSolution {
        CutsSolution {
            status,
            value: if status == LpStatus::Infeasible { f64::INFINITY } else { f64::NEG_INFINITY },
            x: vec![f64::NAN; self.c.len()],
            row_duals: vec![f64::NAN; self.rows.len()],
            cut_duals: vec![Vec::new(); self.terms.len()],
            rounds,
        }
    }
}

/// Stage LP solved against a cut pool.
#[derive(Debug, Clone)]
pub struct CutLpSolution {
    pub status: LpStatus,
    /// `c·x + θ`.
    pub value: f64,
    pub x: Vec<f64>,
    /// Duals of the original equality rows.
    pub duals: Vec<f64>,
    pub theta: f64,
}

/// `min c·x + θ  s.t.  A x = b - B x_prev,  l <= x <= u,  θ >= ℓ_i(x)`.
/// With no pool the θ term is dropped (last stage).
pub fn solve_with_cuts(
    stage: &LpProblem,
    link: &DMatrix<f64>,
    x_prev: &[f64],
    pool: Option<&CutPool>,
) -> Result<CutLpSolution, LpError> {
    let n = stage.num_vars();
    let mut rhs = stage.b.clone();
    if link.ncols() > 0 {
        let bx = link * nalgebra::DVector::from_column_slice(x_prev);
        for (r, v) in rhs.iter_mut().zip(bx.iter()) {
            *r -= v;
        }
    }
    let mut b = CutLp::new();
    b.add_vars(&stage.c, &stage.lower, &stage.upper);
    b.add_dense_rows(&stage.a, 0, &rhs);
    let theta_var = pool.map(|p| b.add_epigraph_identity(p, 1.0, 0));
    let s = b.solve()?;
    if s.status != LpStatus::Optimal {
        return Ok(CutLpSolution {
            status: s.status,
            value: s.value,
            x: vec![f64::NAN; n],
            duals: s.row_duals,
            theta: f64::NAN,
        });
    }
    Ok(CutLpSolution {
        status: LpStatus::Optimal,
        value: s.value,
        x: s.x[..n].to_vec(),
        duals: s.row_duals,
        theta: theta_var.map(|v| s.x[v]).unwrap_or(0.0),
    })
}
