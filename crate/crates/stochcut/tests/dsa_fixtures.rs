mod common;

use common::dsa_tree::tree_value;
use stochcut::dsa::{dsa_solve, ConvexityMode, DsaSchedule};
use stochcut::fixtures::{dsa_deterministic, dsa_strongly_convex};
use stochcut::oracle::{cost_to_go, extensive_solve};

#[test]
fn deterministic_fixture_matches_extensive_lp() {
    let p = dsa_deterministic();
    let lp = p.to_multistage().unwrap();
    let opt = extensive_solve(&lp).unwrap().value;
    assert!((opt - 2.1).abs() < 1e-9);
    let schedule = DsaSchedule::from_data(&p, vec![2000, 50, 50], ConvexityMode::General);
    let r = dsa_solve(&p, &schedule, 0).unwrap();
    let c1 = &p.stages[0].realizations[0].c;
    let first: f64 = c1.iter().zip(&r.x1).map(|(c, x)| c * x).sum();
    let gap = first + cost_to_go(&lp, 0, 0, &r.x1).unwrap() - opt;
    eprintln!("x1 {:?} gap {gap:.3e} objective {} clips {}", r.x1, r.objective, r.dual_clips);
    assert!(gap <= 1e-3);
}

#[test]
fn strongly_convex_gap_shrinks_with_schedule() {
    let p = dsa_strongly_convex();
    let opt = tree_value(&p, None);
    // independent conic solve of the same tree
    assert!((opt - 3.523028254335204).abs() < 1e-9, "{opt}");
    let mut medians = Vec::new();
    for scale in [1usize, 2, 4, 8] {
        let loops = vec![25 * scale, 10 * scale, 10 * scale];
        let schedule = DsaSchedule::from_data(&p, loops, ConvexityMode::Strong);
        let mut gaps: Vec<f64> = (0..20u64)
            .map(|seed| {
                let r = dsa_solve(&p, &schedule, seed).unwrap();
                tree_value(&p, Some(&r.x1)) - opt
            })
            .collect();
        gaps.sort_by(f64::total_cmp);
        medians.push(0.5 * (gaps[9] + gaps[10]));
    }
    eprintln!("opt {opt} medians {medians:?}");
    for w in medians.windows(2) {
        assert!(w[1] <= w[0], "{medians:?}");
    }
}
