//! Cut pools: collections of affine minorants `α + β·x` of a convex
//! cost-to-go function, evaluated as their pointwise maximum.

use std::fmt::Write as _;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CutError {
    #[error("cut pool is empty")]
    EmptyPool,
    #[error("cut has dimension {got}, pool expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("cut has non-finite coefficients")]
    NonFinite,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Coefficient distance below which two cuts count as the same cut.
pub const DEDUP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Cut {
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub iteration: usize,
}

impl Cut {
    pub fn new(alpha: f64, beta: Vec<f64>) -> Self {
        Cut { alpha, beta, iteration: 0 }
    }

    /// Cut `v + g·(x - x̃)` written in intercept form.
    pub fn at_point(value: f64, grad: Vec<f64>, trial: &[f64], iteration: usize) -> Self {
        let alpha = value - dot(&grad, trial);
        Cut { alpha, beta: grad, iteration }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.alpha + dot(&self.beta, x)
    }

    fn same_as(&self, other: &Cut) -> bool {
        (self.alpha - other.alpha).abs() <= DEDUP_TOL
            && self.beta.iter().zip(&other.beta).all(|(a, b)| (a - b).abs() <= DEDUP_TOL)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutPool {
    pub stage: usize,
    pub node: Option<usize>,
    pub dim: usize,
    cuts: Vec<Cut>,
}

impl CutPool {
    pub fn empty(stage: usize, node: Option<usize>, dim: usize) -> Self {
        CutPool { stage, node, dim, cuts: Vec::new() }
    }

    /// Pool holding only the constant cut `floor`.
    pub fn with_floor(stage: usize, node: Option<usize>, dim: usize, floor: f64) -> Self {
        let mut p = Self::empty(stage, node, dim);
        p.cuts.push(Cut::new(floor, vec![0.0; dim]));
        p
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }

    pub fn cuts(&self) -> &[Cut] {
        &self.cuts
    }

    /// Max over cuts and the lowest index attaining it.
    pub fn evaluate(&self, x: &[f64]) -> Result<(f64, usize), CutError> {
        let mut best: Option<(f64, usize)> = None;
        for (i, c) in self.cuts.iter().enumerate() {
            let v = c.eval(x);
            match best {
                Some((b, _)) if v <= b => {}
                _ => best = Some((v, i)),
            }
        }
        best.ok_or(CutError::EmptyPool)
    }

    /// Value of the max function. Panics on an empty pool.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.evaluate(x).expect("evaluate on empty cut pool").0
    }

    /// Inserts `cut` unless an existing cut matches it within `DEDUP_TOL`.
    /// Returns whether the pool grew.
    pub fn add_cut(&mut self, cut: Cut) -> Result<bool, CutError> {
        if cut.beta.len() != self.dim {
            return Err(CutError::Dimension {
                expected: self.dim,
                got: cut.beta.len(),
            });
        }
        if !cut.alpha.is_finite() || cut.beta.iter().any(|v| !v.is_finite()) {
            return Err(CutError::NonFinite);
        }
        if self.cuts.iter().any(|c| c.same_as(&cut)) {
            return Ok(false);
        }
        self.cuts.push(cut);
        Ok(true)
    }

    pub fn subgradient_at(&self, x: &[f64]) -> Result<Vec<f64>, CutError> {
        let (_, i) = self.evaluate(x)?;
        Ok(self.cuts[i].beta.clone())
    }

    /// Largest Euclidean norm among cut gradients.
    pub fn max_gradient_norm(&self) -> f64 {
        self.cuts
            .iter()
            .map(|c| dot(&c.beta, &c.beta).sqrt())
            .fold(0.0, f64::max)
    }
}

/// One cut per line: `stage node alpha beta... # iteration`, with `-` for
/// no node. Floats use the shortest round-trip representation, so reading
/// back is exact.
pub fn write_pools<'a>(pools: impl IntoIterator<Item = &'a CutPool>) -> String {
    let mut s = String::new();
    for p in pools {
        let node = p.node.map(|n| n.to_string()).unwrap_or_else(|| "-".into());
        if p.cuts.is_empty() {
            let _ = writeln!(s, "# empty {} {} {}", p.stage, node, p.dim);
        }
        for c in &p.cuts {
            let _ = write!(s, "{} {} {:?}", p.stage, node, c.alpha);
            for b in &c.beta {
                let _ = write!(s, " {b:?}");
            }
            let _ = writeln!(s, " # {}", c.iteration);
        }
    }
    s
}

/// Inverse of [`write_pools`]; pools come back in first-appearance order.
pub fn read_pools(text: &str) -> Result<Vec<CutPool>, CutError> {
    let mut pools: Vec<CutPool> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let perr = |msg: &str| CutError::Parse {
            line: ln + 1,
            msg: msg.to_string(),
        };
        let (body, tag) = match line.find(" #") {
            Some(k) if !line.starts_with('#') => (&line[..k], Some(line[k + 2..].trim())),
            _ => (line, None),
        };
        let iteration = match tag {
            Some(t) => t.parse().map_err(|_| perr("bad iteration tag"))?,
            None => 0,
        };
        let mut toks = body.split_whitespace();
        let empty_marker = line.starts_with("# empty");
        if empty_marker {
            toks.next();
            toks.next();
        } else if line.starts_with('#') {
            continue;
        }
        let stage: usize = toks.next().ok_or_else(|| perr("missing stage"))?.parse().map_err(|_| perr("bad stage"))?;
        let node_tok = toks.next().ok_or_else(|| perr("missing node"))?;
        let node = if node_tok == "-" {
            None
        } else {
            Some(node_tok.parse().map_err(|_| perr("bad node"))?)
        };
        if empty_marker {
            let dim: usize = toks.next().ok_or_else(|| perr("missing dim"))?.parse().map_err(|_| perr("bad dim"))?;
            pools.push(CutPool::empty(stage, node, dim));
            continue;
        }
        let nums: Result<Vec<f64>, _> = toks.map(|t| t.parse::<f64>()).collect();
        let nums = nums.map_err(|_| perr("bad number"))?;
        let (alpha, beta) = nums.split_first().ok_or_else(|| perr("missing alpha"))?;
        let idx = match pools.iter().position(|p| p.stage == stage && p.node == node) {
            Some(i) => i,
            None => {
                pools.push(CutPool::empty(stage, node, beta.len()));
                pools.len() - 1
            }
        };
        let pool = &mut pools[idx];
        if beta.len() != pool.dim {
            return Err(perr("dimension changes within a pool"));
        }
        // no dedup here: the written pool was already deduplicated
        pool.cuts.push(Cut {
            alpha: *alpha,
            beta: beta.to_vec(),
            iteration,
        });
    }
    Ok(pools)
}
