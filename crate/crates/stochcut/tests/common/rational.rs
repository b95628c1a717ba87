//! Exact LP oracle by vertex enumeration in rational arithmetic.
//! Only meant for tiny integer LPs (n, m <= 4).

use nalgebra::DMatrix;
use num::{BigInt, BigRational, One, Signed, Zero};
use rand::Rng;
use stochcut::lp::LpProblem;

type Q = BigRational;

#[derive(Debug, Clone)]
pub struct IntLp {
    pub c: Vec<i64>,
    pub a: Vec<Vec<i64>>,
    pub b: Vec<i64>,
    pub lower: Vec<i64>,
    pub upper: Vec<Option<i64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Exact {
    Optimal(Q),
    Infeasible,
    Unbounded,
}

fn q(v: i64) -> Q {
    Q::from_integer(BigInt::from(v))
}

pub fn to_f64(v: &Q) -> f64 {
    let n: f64 = v.numer().to_string().parse().unwrap();
    let d: f64 = v.denom().to_string().parse().unwrap();
    n / d
}

impl IntLp {
    pub fn random(rng: &mut impl Rng) -> IntLp {
        let n = rng.gen_range(1..=4);
        let m = rng.gen_range(0..=4);
        let c = (0..n).map(|_| rng.gen_range(-3..=3)).collect();
        let a = (0..m).map(|_| (0..n).map(|_| rng.gen_range(-3..=3)).collect()).collect();
        let b = (0..m).map(|_| rng.gen_range(-4..=4)).collect();
        let lower: Vec<i64> = (0..n).map(|_| rng.gen_range(-2..=0)).collect();
        let upper = lower
            .iter()
            .map(|&l| if rng.gen_bool(0.3) { None } else { Some(l + rng.gen_range(0..=3)) })
            .collect();
        IntLp { c, a, b, lower, upper }
    }

    pub fn to_lp(&self) -> LpProblem {
        let n = self.c.len();
        let m = self.b.len();
        LpProblem::new(
            self.c.iter().map(|&v| v as f64).collect(),
            DMatrix::from_fn(m, n, |i, j| self.a[i][j] as f64),
            self.b.iter().map(|&v| v as f64).collect(),
            self.lower.iter().map(|&v| v as f64).collect(),
            self.upper.iter().map(|v| v.map(|u| u as f64).unwrap_or(f64::INFINITY)).collect(),
        )
    }

    pub fn solve_exact(&self) -> Exact {
        let n = self.c.len();
        let m = self.b.len();
        let mut best: Option<Q> = None;
        // each variable: 0 = at lower, 1 = at upper, 2 = free (solved for)
        let mut choice = vec![0u8; n];
        loop {
            let free: Vec<usize> = (0..n).filter(|&j| choice[j] == 2).collect();
            let valid = free.len() <= m && (0..n).all(|j| choice[j] != 1 || self.upper[j].is_some());
            if valid {
                let mut fixed = vec![q(0); n];
                for j in 0..n {
                    fixed[j] = match choice[j] {
                        0 => q(self.lower[j]),
                        1 => q(self.upper[j].unwrap()),
                        _ => q(0),
                    };
                }
                let mut rhs: Vec<Q> = (0..m)
                    .map(|i| {
                        let mut r = q(self.b[i]);
                        for j in 0..n {
                            if choice[j] != 2 {
                                r -= q(self.a[i][j]) * &fixed[j];
                            }
                        }
                        r
                    })
                    .collect();
                let mat: Vec<Vec<Q>> = (0..m).map(|i| free.iter().map(|&j| q(self.a[i][j])).collect()).collect();
                if let Some(xf) = solve_unique(mat, &mut rhs, free.len()) {
                    let mut x = fixed.clone();
                    for (k, &j) in free.iter().enumerate() {
                        x[j] = xf[k].clone();
                    }
                    let in_box = (0..n).all(|j| x[j] >= q(self.lower[j]) && self.upper[j].map_or(true, |u| x[j] <= q(u)));
                    if in_box {
                        let v: Q = (0..n).map(|j| q(self.c[j]) * &x[j]).fold(q(0), |a, b| a + b);
                        if best.as_ref().map_or(true, |b| v < *b) {
                            best = Some(v);
                        }
                    }
                }
            }
            // next combination
            let mut k = 0;
            while k < n {
                choice[k] += 1;
                if choice[k] < 3 {
                    break;
                }
                choice[k] = 0;
                k += 1;
            }
            if k == n {
                break;
            }
        }
        match best {
            None => Exact::Infeasible,
            Some(v) => {
                if self.has_descent_ray() {
                    Exact::Unbounded
                } else {
                    Exact::Optimal(v)
                }
            }
        }
    }

    /// Vertices of `{d : A d = 0, d_J >= 0, Σ d_J = 1, d_j = 0 off J}` with `c·d < 0`.
    fn has_descent_ray(&self) -> bool {
        let n = self.c.len();
        let m = self.b.len();
        let open: Vec<usize> = (0..n).filter(|&j| self.upper[j].is_none()).collect();
        let k = open.len();
        for mask in 1u32..(1 << k) {
            let support: Vec<usize> = (0..k).filter(|&i| mask & (1 << i) != 0).map(|i| open[i]).collect();
            if support.len() > m + 1 {
                continue;
            }
            let mut mat: Vec<Vec<Q>> = (0..m).map(|i| support.iter().map(|&j| q(self.a[i][j])).collect()).collect();
            mat.push(vec![q(1); support.len()]);
            let mut rhs = vec![q(0); m];
            rhs.push(q(1));
            if let Some(d) = solve_unique(mat, &mut rhs, support.len()) {
                if d.iter().all(|v| !v.is_negative()) {
                    let cd: Q = support.iter().zip(&d).map(|(&j, v)| q(self.c[j]) * v).fold(q(0), |a, b| a + b);
                    if cd.is_negative() {
                        return true;
                    }
                }
            }
        }
        false
    }
}

/// Unique solution of an overdetermined-or-square system, if consistent
/// and the columns are independent.
fn solve_unique(mut mat: Vec<Vec<Q>>, rhs: &mut [Q], cols: usize) -> Option<Vec<Q>> {
    let rows = mat.len();
    let mut pivot_row = 0;
    let mut pivots = Vec::new();
    for col in 0..cols {
        let p = (pivot_row..rows).find(|&r| !mat[r][col].is_zero())?;
        mat.swap(pivot_row, p);
        rhs.swap(pivot_row, p);
        let inv = Q::one() / mat[pivot_row][col].clone();
        for c in col..cols {
            mat[pivot_row][c] = &mat[pivot_row][c] * &inv;
        }
        rhs[pivot_row] = &rhs[pivot_row] * &inv;
        for r in 0..rows {
            if r != pivot_row && !mat[r][col].is_zero() {
                let f = mat[r][col].clone();
                for c in col..cols {
                    let v = &mat[pivot_row][c] * &f;
                    mat[r][c] -= v;
                }
                let v = &rhs[pivot_row] * &f;
                rhs[r] -= v;
            }
        }
        pivots.push(col);
        pivot_row += 1;
    }
    if (pivot_row..rows).any(|r| !rhs[r].is_zero()) {
        return None;
    }
    Some((0..cols).map(|i| rhs[i].clone()).collect())
}
