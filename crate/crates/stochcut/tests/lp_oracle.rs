mod common;

use common::rational::{to_f64, Exact, IntLp};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stochcut::lp::LpStatus;

#[test]
fn random_lps_match_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut counts = [0usize; 3];
    for k in 0..1000 {
        let ilp = IntLp::random(&mut rng);
        let lp = ilp.to_lp();
        let s = lp.solve().unwrap();
        match ilp.solve_exact() {
            Exact::Optimal(v) => {
                counts[0] += 1;
                assert_eq!(s.status, LpStatus::Optimal, "case {k}: {ilp:?}");
                let v = to_f64(&v);
                assert!((s.value - v).abs() <= 1e-9 * (1.0 + v.abs()), "case {k}: {} vs {v}", s.value);
                common::check_kkt(&lp, &s).unwrap_or_else(|e| panic!("case {k}: {e}"));
            }
            Exact::Infeasible => {
                counts[1] += 1;
                assert_eq!(s.status, LpStatus::Infeasible, "case {k}: {ilp:?}");
            }
            Exact::Unbounded => {
                counts[2] += 1;
                assert_eq!(s.status, LpStatus::Unbounded, "case {k}: {ilp:?}");
            }
        }
    }
    // the generator should exercise every status
    assert!(counts.iter().all(|&c| c > 20), "{counts:?}");
}

#[test]
fn warm_start_agrees_with_cold_start() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut warm_used = 0;
    for _ in 0..300 {
        let ilp = IntLp::random(&mut rng);
        let lp = ilp.to_lp();
        let s = lp.solve().unwrap();
        if s.status != LpStatus::Optimal {
            continue;
        }
        let mut lp2 = lp.clone();
        for (j, c) in lp2.c.iter_mut().enumerate() {
            *c += 0.1 * (j as f64);
        }
        let cold = lp2.solve().unwrap();
        let warm = lp2.solve_from(s.basis.as_ref().unwrap()).unwrap();
        assert_eq!(cold.status, warm.status);
        if cold.status == LpStatus::Optimal {
            assert!((cold.value - warm.value).abs() < 1e-9);
            warm_used += 1;
        }
    }
    assert!(warm_used > 50);
}
