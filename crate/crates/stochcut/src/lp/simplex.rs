use nalgebra::DMatrix;

use super::{Basis, LpError, LpProblem, LpSolution, LpStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable sitting at zero.
    FreeZero,
}

#[derive(Debug, Clone)]
pub struct SimplexOptions {
    pub pivot_tol: f64,
    pub opt_tol: f64,
    pub feas_tol: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
    pub refactor_every: usize,
    /// Defaults to `50 * (m + n) + 1000`.
    pub max_pivots: Option<usize>,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            pivot_tol: 1e-9,
            opt_tol: 1e-9,
            feas_tol: 1e-9,
            bland_after: 50,
            refactor_every: 100,
            max_pivots: None,
        }
    }
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

struct Engine<'a> {
    lp: &'a LpProblem,
    opts: &'a SimplexOptions,
    m: usize,
    n: usize,
    lo: Vec<f64>,
    up: Vec<f64>,
    art_sign: Vec<f64>,
    cost: Vec<f64>,
    head: Vec<usize>,
    status: Vec<VarStatus>,
    x: Vec<f64>,
    binv: DMatrix<f64>,
    since_refactor: usize,
    pivots: usize,
    degenerate_run: usize,
    max_pivots: usize,
}

pub(super) fn solve(lp: &LpProblem, warm: Option<&Basis>, opts: &SimplexOptions) -> Result<LpSolution, LpError> {
    lp.check()?;
    let m = lp.num_rows();
    let n = lp.num_vars();
    let mut e = Engine {
        lp,
        opts,
        m,
        n,
        lo: Vec::new(),
        up: Vec::new(),
        art_sign: vec![1.0; m],
        cost: vec![0.0; n + m],
        head: Vec::new(),
        status: Vec::new(),
        x: vec![0.0; n + m],
        binv: DMatrix::identity(m, m),
        since_refactor: 0,
        pivots: 0,
        degenerate_run: 0,
        max_pivots: opts.max_pivots.unwrap_or(50 * (m + n) + 1000),
    };

    let warm_ok = match warm {
        Some(b) => e.try_warm(b),
        None => false,
    };
    if !warm_ok {
        e.cold_start();
        e.set_phase1_costs();
        e.run()?;
        let infeas: f64 = (n..n + m).map(|j| e.x[j]).sum();
        let scale = 1.0 + lp.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if infeas > 1e-8 * scale {
            return Ok(LpSolution::not_optimal(LpStatus::Infeasible, n, m, e.pivots));
        }
        for j in n..n + m {
            e.up[j] = 0.0;
            if e.status[j] != VarStatus::Basic {
                e.status[j] = VarStatus::AtLower;
                e.x[j] = 0.0;
            }
        }
    }
    e.set_phase2_costs();
    match e.run()? {
        PhaseEnd::Unbounded => Ok(LpSolution::not_optimal(LpStatus::Unbounded, n, m, e.pivots)),
        PhaseEnd::Optimal => Ok(e.finish()),
    }
}

impl<'a> Engine<'a> {
    fn initial_nonbasic(&mut self, j: usize) {
        let (l, u) = (self.lo[j], self.up[j]);
        if l.is_finite() {
            self.status[j] = VarStatus::AtLower;
            self.x[j] = l;
        } else if u.is_finite() {
            self.status[j] = VarStatus::AtUpper;
            self.x[j] = u;
        } else {
            self.status[j] = VarStatus::FreeZero;
            self.x[j] = 0.0;
        }
    }

    fn cold_start(&mut self) {
        let (m, n) = (self.m, self.n);
        self.lo = self.lp.lower.clone();
        self.up = self.lp.upper.clone();
        self.lo.extend(std::iter::repeat(0.0).take(m));
        self.up.extend(std::iter::repeat(f64::INFINITY).take(m));
        self.status = vec![VarStatus::AtLower; n + m];
        for j in 0..n {
            self.initial_nonbasic(j);
        }
        let mut r = self.lp.b.clone();
        for j in 0..n {
            let xj = self.x[j];
            if xj != 0.0 {
                for i in 0..m {
                    r[i] -= self.lp.a[(i, j)] * xj;
                }
            }
        }
        self.head = (n..n + m).collect();
        self.binv = DMatrix::zeros(m, m);
        for i in 0..m {
            let s = if r[i] >= 0.0 { 1.0 } else { -1.0 };
            self.art_sign[i] = s;
            self.binv[(i, i)] = s;
            self.x[n + i] = r[i].abs();
            self.status[n + i] = VarStatus::Basic;
        }
        self.since_refactor = 0;
    }

    fn try_warm(&mut self, b: &Basis) -> bool {
        let (m, n) = (self.m, self.n);
        if b.head.len() != m || b.status.len() != n + m {
            return false;
        }
        self.lo = self.lp.lower.clone();
        self.up = self.lp.upper.clone();
        self.lo.extend(std::iter::repeat(0.0).take(m));
        self.up.extend(std::iter::repeat(0.0).take(m));
        let mut seen = vec![false; n + m];
        for &h in &b.head {
            if h >= n + m || seen[h] || b.status[h] != VarStatus::Basic {
                return false;
            }
            seen[h] = true;
        }
        self.status = b.status.clone();
        self.head = b.head.clone();
        for j in 0..n + m {
            match self.status[j] {
                VarStatus::Basic => {
                    if !seen[j] {
                        return false;
                    }
                }
                VarStatus::AtLower if self.lo[j].is_finite() => self.x[j] = self.lo[j],
                VarStatus::AtUpper if self.up[j].is_finite() => self.x[j] = self.up[j],
                VarStatus::FreeZero if !self.lo[j].is_finite() && !self.up[j].is_finite() => self.x[j] = 0.0,
                _ => return false,
            }
        }
        if self.refactor().is_err() {
            return false;
        }
        let tol = self.opts.feas_tol;
        self.head.iter().all(|&h| {
            let v = self.x[h];
            v >= self.lo[h] - tol * (1.0 + self.lo[h].abs()) && v <= self.up[h] + tol * (1.0 + self.up[h].abs())
        })
    }

    fn set_phase1_costs(&mut self) {
        for j in 0..self.n {
            self.cost[j] = 0.0;
        }
        for j in self.n..self.n + self.m {
            self.cost[j] = 1.0;
        }
    }

    fn set_phase2_costs(&mut self) {
        for j in 0..self.n {
            self.cost[j] = self.lp.c[j];
        }
        for j in self.n..self.n + self.m {
            self.cost[j] = 0.0;
        }
        self.degenerate_run = 0;
    }

    fn col_dot(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            let col = self.lp.a.column(j);
            col.iter().zip(y).map(|(a, b)| a * b).sum()
        } else {
            let i = j - self.n;
            self.art_sign[i] * y[i]
        }
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; m];
        if j < self.n {
            for k in 0..m {
                let a = self.lp.a[(k, j)];
                if a != 0.0 {
                    let col = self.binv.column(k);
                    for i in 0..m {
                        out[i] += col[i] * a;
                    }
                }
            }
        } else {
            let k = j - self.n;
            let s = self.art_sign[k];
            for i in 0..m {
                out[i] = self.binv[(i, k)] * s;
            }
        }
        out
    }

    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for k in 0..m {
            let col = self.binv.column(k);
            let mut s = 0.0;
            for i in 0..m {
                s += self.cost[self.head[i]] * col[i];
            }
            y[k] = s;
        }
        y
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let mut bm = DMatrix::zeros(m, m);
        for (k, &h) in self.head.iter().enumerate() {
            if h < self.n {
                for i in 0..m {
                    bm[(i, k)] = self.lp.a[(i, h)];
                }
            } else {
                bm[(h - self.n, k)] = self.art_sign[h - self.n];
            }
        }
        self.binv = bm.try_inverse().ok_or(LpError::SingularBasis)?;
        self.since_refactor = 0;
        self.recompute_basics();
        Ok(())
    }

    fn recompute_basics(&mut self) {
        let (m, n) = (self.m, self.n);
        let mut r = self.lp.b.clone();
        for j in 0..n + m {
            if self.status[j] == VarStatus::Basic {
                continue;
            }
            let xj = self.x[j];
            if xj == 0.0 {
                continue;
            }
            if j < n {
                for i in 0..m {
                    r[i] -= self.lp.a[(i, j)] * xj;
                }
            } else {
                r[j - n] -= self.art_sign[j - n] * xj;
            }
        }
        for i in 0..m {
            let mut v = 0.0;
            for k in 0..m {
                v += self.binv[(i, k)] * r[k];
            }
            let h = self.head[i];
            self.x[h] = v;
        }
    }

    /// Entering variable and its direction (+1 increase, -1 decrease).
    fn price(&self, y: &[f64]) -> Option<(usize, f64)> {
        let bland = self.degenerate_run >= self.opts.bland_after;
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.n + self.m {
            let st = self.status[j];
            if st == VarStatus::Basic || self.lo[j] == self.up[j] {
                continue;
            }
            let d = self.cost[j] - self.col_dot(j, y);
            let tol = self.opts.opt_tol * (1.0 + self.cost[j].abs());
            let dir = match st {
                VarStatus::AtLower if d < -tol => 1.0,
                VarStatus::AtUpper if d > tol => -1.0,
                VarStatus::FreeZero if d < -tol => 1.0,
                VarStatus::FreeZero if d > tol => -1.0,
                _ => continue,
            };
            if bland {
                return Some((j, dir));
            }
            if d.abs() > best_score {
                best_score = d.abs();
                best = Some((j, dir));
            }
        }
        best
    }

    fn run(&mut self) -> Result<PhaseEnd, LpError> {
        let (m, n) = (self.m, self.n);
        loop {
            let y = self.duals();
            let Some((q, dir)) = self.price(&y) else {
                return Ok(PhaseEnd::Optimal);
            };
            if self.pivots >= self.max_pivots {
                return Err(LpError::DegenerateCycle(self.max_pivots));
            }
            let bland = self.degenerate_run >= self.opts.bland_after;
            let alpha = self.ftran(q);

            let own_range = self.up[q] - self.lo[q];
            let mut t_best = f64::INFINITY;
            let mut leave: Option<(usize, VarStatus)> = None;
            for i in 0..m {
                let a = alpha[i];
                if a.abs() <= self.opts.pivot_tol {
                    continue;
                }
                let rate = dir * a;
                let h = self.head[i];
                let (lim, to) = if rate > 0.0 {
                    if !self.lo[h].is_finite() {
                        continue;
                    }
                    ((self.x[h] - self.lo[h]) / rate, VarStatus::AtLower)
                } else {
                    if !self.up[h].is_finite() {
                        continue;
                    }
                    ((self.up[h] - self.x[h]) / -rate, VarStatus::AtUpper)
                };
                let lim = lim.max(0.0);
                let better = match leave {
                    None => true,
                    Some((r, _)) => {
                        if lim < t_best - 1e-12 {
                            true
                        } else if lim <= t_best + 1e-12 {
                            if bland {
                                h < self.head[r]
                            } else {
                                a.abs() > alpha[r].abs()
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    t_best = lim;
                    leave = Some((i, to));
                }
            }

            if own_range.is_finite() && own_range <= t_best {
                // bound flip, basis unchanged
                let t = own_range;
                self.x[q] = if dir > 0.0 { self.up[q] } else { self.lo[q] };
                for i in 0..m {
                    let h = self.head[i];
                    self.x[h] -= dir * t * alpha[i];
                }
                self.status[q] = if dir > 0.0 { VarStatus::AtUpper } else { VarStatus::AtLower };
                self.pivots += 1;
                self.note_step(t);
                continue;
            }
            let Some((r, to)) = leave else {
                return Ok(PhaseEnd::Unbounded);
            };
            let t = t_best;
            self.x[q] += dir * t;
            for i in 0..m {
                let h = self.head[i];
                self.x[h] -= dir * t * alpha[i];
            }
            let out = self.head[r];
            self.x[out] = if to == VarStatus::AtLower { self.lo[out] } else { self.up[out] };
            self.status[out] = to;
            if out >= n {
                // artificials never re-enter
                self.up[out] = 0.0;
                self.lo[out] = 0.0;
                self.x[out] = 0.0;
                self.status[out] = VarStatus::AtLower;
            }
            self.head[r] = q;
            self.status[q] = VarStatus::Basic;

            let piv = alpha[r];
            for k in 0..m {
                let v = self.binv[(r, k)] / piv;
                if v == 0.0 {
                    continue;
                }
                for i in 0..m {
                    if i == r {
                        self.binv[(i, k)] = v;
                    } else if alpha[i] != 0.0 {
                        self.binv[(i, k)] -= alpha[i] * v;
                    }
                }
            }
            self.pivots += 1;
            self.since_refactor += 1;
            self.note_step(t);
            if self.since_refactor >= self.opts.refactor_every {
                self.refactor()?;
            }
        }
    }

    fn note_step(&mut self, t: f64) {
        if t <= 1e-12 {
            self.degenerate_run += 1;
        } else {
            self.degenerate_run = 0;
        }
    }

    fn finish(&self) -> LpSolution {
        let (m, n) = (self.m, self.n);
        let y = self.duals();
        let x: Vec<f64> = self.x[..n].to_vec();
        let value = x.iter().zip(&self.lp.c).map(|(a, b)| a * b).sum();
        let reduced_costs = (0..n).map(|j| self.lp.c[j] - self.col_dot(j, &y)).collect();
        let _ = m;
        LpSolution {
            status: LpStatus::Optimal,
            value,
            x,
            duals: y,
            reduced_costs,
            basis: Some(Basis {
                head: self.head.clone(),
                status: self.status.clone(),
            }),
            pivots: self.pivots,
        }
    }
}
