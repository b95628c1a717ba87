use stochcut::fixtures::{inventory, INVENTORY_ORDER_CAP};
use stochcut::oracle::basestock_levels;
use stochcut::soc::{inventory_soc, policy_control, run_soc, to_multistage, SocConfig};

#[test]
fn sddp_policy_is_basestock() {
    let inst = inventory();
    let bs = basestock_levels(&inst, None).unwrap();
    let soc = inventory_soc(&inst, INVENTORY_ORDER_CAP);
    let r = run_soc(&soc, &SocConfig::default()).unwrap();
    let opt = stochcut::oracle::extensive_solve(&to_multistage(&soc)).unwrap().value;
    assert!((r.lower_bound - opt).abs() <= 1e-6 * opt.abs().max(1.0), "{} vs {opt}", r.lower_bound);
    let mut worst: f64 = 0.0;
    for t in 0..inst.horizon() {
        for k in 0..20 {
            let x = bs.levels[t] - 6.0 + 0.5 * k as f64 + 0.013;
            let u = policy_control(&soc, &r.state, &[], t, &[x]).unwrap()[0];
            let err = (u - bs.order(t, x)).abs();
            worst = worst.max(err);
            assert!(err <= bs.tolerance + 1e-9, "t={t} x={x} u={u} basestock {} level {}", bs.order(t, x), bs.levels[t]);
        }
    }
    eprintln!("levels {:?} worst {worst:.2e} iterations {}", bs.levels, r.iterations);
}
