use stochcut::dualsddp::{run_sandwich, DualConfig, DualTrial};
use stochcut::fixtures;
use stochcut::oracle::extensive_solve;
use stochcut::sddp::SddpConfig;

#[test]
fn suite_sandwich_and_final_gap() {
    for trial in [DualTrial::Both, DualTrial::DualForward] {
        let mut worst = 0.0f64;
        let mut iters = 0;
        let mut fails = 0;
        for (name, p) in fixtures::suite() {
            let opt = extensive_solve(&p).unwrap().value;
            let r = run_sandwich(&p, &SddpConfig { seed: 3, max_iterations: 500, ..Default::default() }, &DualConfig { trial, ..Default::default() }).unwrap();
            for row in &r.rows {
                assert!(row.lower_bound <= opt + 1e-7 * opt.abs().max(1.0), "{name}: {row:?}");
                assert!(row.dual_upper_bound >= opt - 1e-7 * opt.abs().max(1.0), "{name}: {row:?} opt {opt}");
            }
            if !r.converged {
                fails += 1;
            }
            worst = worst.max(r.upper_bound - r.lower_bound);
            iters += r.rows.len();
        }
        println!("{trial:?}: unconverged {fails} worst gap {worst:.3e} total iterations {iters}");
        assert_eq!(fails, 0);
        assert!(worst <= 1e-4);
    }
}
