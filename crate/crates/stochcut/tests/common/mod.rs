#![allow(dead_code)]

pub mod dsa_tree;
pub mod rational;
pub mod vi;

use nalgebra::DMatrix;
use stochcut::lp::{LpProblem, LpSolution};

/// Primal feasibility, complementary slackness, and the duality identity
/// `c·x = λ·b + Σ d_j x_j` for an optimal solution.
pub fn check_kkt(lp: &LpProblem, s: &LpSolution) -> Result<(), String> {
    let n = lp.num_vars();
    let m = lp.num_rows();
    for i in 0..m {
        let ax: f64 = (0..n).map(|j| lp.a[(i, j)] * s.x[j]).sum();
        if (ax - lp.b[i]).abs() > 1e-8 * (1.0 + lp.b[i].abs()) {
            return Err(format!("row {i}: Ax = {ax}, b = {}", lp.b[i]));
        }
    }
    for j in 0..n {
        let (l, u, x) = (lp.lower[j], lp.upper[j], s.x[j]);
        if x < l - 1e-9 || x > u + 1e-9 {
            return Err(format!("x{j} = {x} outside [{l}, {u}]"));
        }
        let d = s.reduced_costs[j];
        let at_l = (x - l).abs() <= 1e-9;
        let at_u = (x - u).abs() <= 1e-9;
        let ok = if at_l && at_u {
            true
        } else if at_l {
            d >= -1e-7
        } else if at_u {
            d <= 1e-7
        } else {
            d.abs() <= 1e-7
        };
        if !ok {
            return Err(format!("x{j} = {x} in [{l}, {u}] with reduced cost {d}"));
        }
        let ata: f64 = (0..m).map(|i| lp.a[(i, j)] * s.duals[i]).sum();
        if (ata + d - lp.c[j]).abs() > 1e-8 * (1.0 + lp.c[j].abs()) {
            return Err(format!("dual row {j} violated"));
        }
    }
    let dual_obj: f64 = (0..m).map(|i| s.duals[i] * lp.b[i]).sum::<f64>()
        + (0..n).map(|j| s.reduced_costs[j] * s.x[j]).sum::<f64>();
    if (dual_obj - s.value).abs() > 1e-7 * (1.0 + s.value.abs()) {
        return Err(format!("primal {} vs dual {}", s.value, dual_obj));
    }
    Ok(())
}

pub fn dense(rows: &[&[f64]]) -> DMatrix<f64> {
    let m = rows.len();
    let n = if m == 0 { 0 } else { rows[0].len() };
    DMatrix::from_fn(m, n, |i, j| rows[i][j])
}
