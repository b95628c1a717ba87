use std::time::Instant;

use stochcut::fixtures;
use stochcut::oracle::{cost_to_go, extensive_solve};
use stochcut::sddp::{run, SddpConfig, StopRule};

#[test]
fn suite_converges_to_extensive_optimum() {
    let clock = Instant::now();
    for (name, p) in fixtures::suite() {
        let opt = extensive_solve(&p).unwrap().value;
        let cfg = SddpConfig {
            seed: 17,
            stabilization: None,
            ..Default::default()
        };
        let r = run(&p, &cfg).unwrap();
        println!("{name}: opt {opt:.9} lb {:.9} iters {} stop {:?}", r.lower_bound, r.iterations, r.stop);
        assert_eq!(r.stop, StopRule::Gap, "{name}");
        assert!((r.lower_bound - opt).abs() <= 1e-6 * opt.abs() + 1e-9, "{name}");
        for rec in &r.log {
            assert!(rec.lower_bound <= opt + 1e-7, "{name}: lb {} above {opt}", rec.lower_bound);
        }
    }
    println!("suite time {:?}", clock.elapsed());
}

#[test]
fn cuts_never_exceed_true_cost_to_go() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    for (name, p) in fixtures::suite().into_iter().take(6) {
        let cfg = SddpConfig {
            seed: 2,
            max_iterations: 15,
            gap_tol: None,
            stabilization: None,
            ..Default::default()
        };
        let r = run(&p, &cfg).unwrap();
        for (t, pools) in r.state.pools.iter().enumerate() {
            let st = &p.stages[t];
            for _ in 0..100 {
                let x: Vec<f64> = st.lower.iter().zip(&st.upper).map(|(l, u)| rng.gen_range(*l..=*u)).collect();
                let q = cost_to_go(&p, t, 0, &x).unwrap();
                assert!(pools[0].value(&x) <= q + 1e-6, "{name} stage {t}");
            }
        }
    }
}
