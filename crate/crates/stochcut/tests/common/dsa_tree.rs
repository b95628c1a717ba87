use stochcut::dsa::{DsaProblem, DsaRealization};

/// Projected gradient over the scenario tree of a three-stage problem whose
/// later stages have variables (x, s), A = [I, -I] and free s: s is
/// eliminated and the rest is a box-constrained smooth QP. With `x1` fixed
/// the first stage is not optimized.
pub fn tree_value(p: &DsaProblem, x1: Option<&[f64]>) -> f64 {
    let (s1, s2, s3) = (&p.stages[0], &p.stages[1], &p.stages[2]);
    let n = 2;
    let (n2, n3) = (s2.realizations.len(), s3.realizations.len());
    let mut x1v: Vec<f64> = x1.map(|x| x.to_vec()).unwrap_or(vec![0.0; n]);
    let mut x2 = vec![vec![0.0; n]; n2];
    let mut x3 = vec![vec![vec![0.0; n]; n3]; n2];
    // s = x + B prev - b, with prev = x1 at stage 2 and (x2, s2) at stage 3
    let s_of = |r: &DsaRealization, x: &[f64], prev: &[f64]| -> Vec<f64> {
        (0..n).map(|i| x[i] + (0..prev.len()).map(|l| r.b[(i, l)] * prev[l]).sum::<f64>() - r.rhs[i]).collect()
    };
    let full = |x: &[f64], s: &[f64]| vec![x[0], x[1], s[0], s[1]];
    let mut prev_obj = f64::INFINITY;
    let step = 0.1;
    for it in 0.. {
        let mut obj = s1.realizations[0].cost(&x1v);
        let r1 = &s1.realizations[0];
        let mut g1: Vec<f64> = (0..n).map(|i| r1.c[i] + r1.q[i] * x1v[i]).collect();
        let mut g2 = vec![vec![0.0; n]; n2];
        let mut g3 = vec![vec![vec![0.0; n]; n3]; n2];
        for (j, r2) in s2.realizations.iter().enumerate() {
            let sj = s_of(r2, &x2[j], &x1v);
            let z2 = full(&x2[j], &sj);
            obj += r2.prob * r2.cost(&z2);
            // d f2 / d s2
            let ds2: Vec<f64> = (0..n).map(|i| r2.c[n + i] + r2.q[n + i] * sj[i]).collect();
            let mut gx2: Vec<f64> = (0..n).map(|i| r2.c[i] + r2.q[i] * x2[j][i] + ds2[i]).collect();
            let mut gs2 = vec![0.0; n];
            for (k, r3) in s3.realizations.iter().enumerate() {
                let sk = s_of(r3, &x3[j][k], &z2);
                obj += r2.prob * r3.prob * r3.cost(&full(&x3[j][k], &sk));
                let ds3: Vec<f64> = (0..n).map(|i| r3.c[n + i] + r3.q[n + i] * sk[i]).collect();
                for i in 0..n {
                    g3[j][k][i] = r3.c[i] + r3.q[i] * x3[j][k][i] + ds3[i];
                }
                for l in 0..n {
                    let bx: f64 = (0..n).map(|i| r3.b[(i, l)] * ds3[i]).sum();
                    let bs: f64 = (0..n).map(|i| r3.b[(i, n + l)] * ds3[i]).sum();
                    gx2[l] += r3.prob * bx;
                    gs2[l] += r3.prob * bs;
                }
            }
            // s2 moves one-for-one with x2 and with B2 x1
            for l in 0..n {
                g2[j][l] = gx2[l] + gs2[l];
            }
            for l in 0..x1v.len() {
                g1[l] += r2.prob * (0..n).map(|i| r2.b[(i, l)] * (ds2[i] + gs2[i])).sum::<f64>();
            }
        }
        if (prev_obj - obj).abs() <= 1e-15 * obj.abs().max(1.0) || it > 1_000_000 {
            return obj;
        }
        prev_obj = obj;
        if x1.is_none() {
            for i in 0..n {
                x1v[i] = (x1v[i] - step * g1[i]).clamp(s1.lower[i], s1.upper[i]);
            }
        }
        for j in 0..n2 {
            for i in 0..n {
                x2[j][i] = (x2[j][i] - step * g2[j][i]).clamp(s2.lower[i], s2.upper[i]);
                for k in 0..n3 {
                    x3[j][k][i] = (x3[j][k][i] - step * g3[j][k][i]).clamp(s3.lower[i], s3.upper[i]);
                }
            }
        }
    }
    unreachable!()
}
