mod common;

use common::vi::{value_iteration, vi_at};
use stochcut::fixtures::{stationary_reset, stationary_scalar};
use stochcut::horizon::{periodic_solve, stationary_backward, stationary_solve, HorizonConfig, StationaryProblem, StationaryState};

fn check_against_vi(p: &StationaryProblem, name: &str) {
    let eps = 1e-3;
    let fine = value_iteration(p, 0.025, 0.025);
    let finer = value_iteration(p, 0.0125, 0.0125);
    let (lo, hi) = p.state_box.clone().unwrap();
    let probes: Vec<f64> = (0..=24).map(|i| lo[0] + (hi[0] - lo[0]) * i as f64 / 24.0).collect();
    // grid refinement estimate plus the stopping residual of value iteration
    let grid_err = 1e-9 + 2.0 * probes.iter().map(|&x| (vi_at(&fine, x) - vi_at(&finer, x)).abs()).fold(0.0, f64::max);

    let r = stationary_solve(p, &HorizonConfig { epsilon: eps, max_iterations: 300, ..Default::default() }).unwrap();
    let lb = r.lower_bound;
    let at_x1 = vi_at(&finer, p.x1[0]);
    assert!(lb <= at_x1 + grid_err, "{name}: lower bound {lb} above oracle {at_x1}");
    assert!(lb >= at_x1 - eps - grid_err, "{name}: lower bound {lb} vs oracle {at_x1} (grid {grid_err})");

    let mut st: StationaryState = r.state.clone();
    for _ in 0..60 {
        for &x in &probes {
            stationary_backward(p, &mut st, 0, &[x]).unwrap();
        }
    }
    let mut worst: f64 = 0.0;
    for &x in &probes {
        let v = st.value(0, &[x]);
        let o = vi_at(&finer, x);
        assert!(v <= o + grid_err, "{name}: V̲({x}) = {v} above oracle {o}");
        worst = worst.max(o - v);
    }
    eprintln!("{name}: lb {lb} oracle {at_x1} grid error {grid_err:.2e} worst gap {worst:.2e} horizon {}", r.horizon);
    assert!(worst <= eps + grid_err);
}

#[test]
fn reset_dynamics_match_value_iteration() {
    check_against_vi(&stationary_reset(), "reset");
}

#[test]
fn contracting_dynamics_match_value_iteration() {
    check_against_vi(&stationary_scalar(), "scalar");
}

#[test]
fn period_one_is_the_stationary_solver() {
    let p = stationary_scalar();
    let cfg = HorizonConfig { max_iterations: 40, seed: 5, ..Default::default() };
    let a = stationary_solve(&p, &cfg).unwrap();
    let b = periodic_solve(&p, &cfg).unwrap();
    assert_eq!(a.state, b.state);
    assert_eq!(a.lower_bound.to_bits(), b.lower_bound.to_bits());
}

#[test]
fn identical_blocks_give_identical_phases() {
    let mut p = stationary_scalar();
    p.blocks.push(p.blocks[0].clone());
    let r = periodic_solve(&p, &HorizonConfig { max_iterations: 50, ..Default::default() }).unwrap();
    let mut st = r.state;
    let probes: Vec<f64> = (0..=24).map(|i| -2.0 + 0.25 * i as f64).collect();
    for _ in 0..80 {
        for &x in &probes {
            stationary_backward(&p, &mut st, 0, &[x]).unwrap();
            stationary_backward(&p, &mut st, 1, &[x]).unwrap();
        }
    }
    for &x in &probes {
        assert!((st.value(0, &[x]) - st.value(1, &[x])).abs() < 1e-6, "x = {x}");
    }
}

#[test]
fn lower_bounds_monotone_and_below_kappa_bound() {
    let p = stationary_scalar();
    let r = stationary_solve(&p, &HorizonConfig { max_iterations: 60, ..Default::default() }).unwrap();
    let cap = r.kappa / (1.0 - p.gamma);
    for w in r.log.windows(2) {
        assert!(w[1].lower_bound >= w[0].lower_bound);
    }
    assert!(r.lower_bound <= cap);
}
