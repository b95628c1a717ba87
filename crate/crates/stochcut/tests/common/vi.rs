use rayon::prelude::*;
use stochcut::horizon::StationaryProblem;

/// Tabular value iteration with linear interpolation, clamped at the ends.
pub fn value_iteration(p: &StationaryProblem, h: f64, hu: f64) -> (f64, f64, Vec<f64>) {
    let (lo, hi) = p.state_box.clone().unwrap();
    let (lo, hi) = (lo[0], hi[0]);
    let k = ((hi - lo) / h).round() as usize + 1;
    let b = &p.blocks[0];
    let ku = ((b.u_upper[0] - b.u_lower[0]) / hu).round() as usize + 1;
    let interp = |v: &[f64], x: f64| {
        let s = ((x - lo) / h).clamp(0.0, (k - 1) as f64);
        let i = (s.floor() as usize).min(k - 2);
        let f = s - i as f64;
        v[i] * (1.0 - f) + v[i + 1] * f
    };
    let mut v = vec![0.0; k];
    loop {
        let next: Vec<f64> = (0..k)
            .into_par_iter()
            .map(|i| {
                let x = lo + i as f64 * h;
                (0..ku)
                    .map(|q| {
                        let u = b.u_lower[0] + q as f64 * hu;
                        b.realizations
                            .iter()
                            .map(|r| r.prob * (r.stage_cost(&[x], &[u]) + p.gamma * interp(&v, r.next_state(&[x], &[u])[0])))
                            .sum::<f64>()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let diff = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if diff < 1e-10 {
            return (lo, h, v);
        }
    }
}

pub fn vi_at(vi: &(f64, f64, Vec<f64>), x: f64) -> f64 {
    let (lo, h, v) = vi;
    let s = (x - lo) / h;
    let i = s.round() as usize;
    assert!((s - i as f64).abs() < 1e-9, "{x} is not a grid point");
    v[i]
}
