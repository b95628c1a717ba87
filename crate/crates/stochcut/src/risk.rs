//! Finite-support coherent risk measures: expectation, AV@R and their
//! convex combination, with dual densities and the Ψ representation.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CoherentRisk {
    Expectation,
    #[serde(rename = "avar")]
    AVaR { alpha: f64 },
    Combo { lambda: f64, alpha: f64 },
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RiskError {
    #[error("alpha must lie in (0, 1), got {0}")]
    Alpha(f64),
    #[error("lambda must lie in [0, 1], got {0}")]
    Lambda(f64),
}

/// AV@R by the variational form, minimized over the atoms.
pub fn avar(alpha: f64, z: &[f64], p: &[f64]) -> f64 {
    let k = 1.0 / (1.0 - alpha);
    let mut best = f64::INFINITY;
    for &theta in z {
        let tail: f64 = z.iter().zip(p).map(|(zj, pj)| pj * (zj - theta).max(0.0)).sum();
        best = best.min(theta + k * tail);
    }
    best
}

/// Maximizing AV@R density: cap `1/(1-α)` on the largest values in
/// decreasing order, the remainder on the quantile atom.
fn avar_density(alpha: f64, z: &[f64], p: &[f64]) -> Vec<f64> {
    if z.iter().all(|v| *v == z[0]) {
        return vec![1.0; z.len()];
    }
    let cap = 1.0 / (1.0 - alpha);
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| z[b].partial_cmp(&z[a]).unwrap().then(a.cmp(&b)));
    let mut zeta = vec![0.0; z.len()];
    let mut mass = 1.0;
    for i in order {
        if mass <= 0.0 || p[i] <= 0.0 {
            continue;
        }
        let w = cap.min(mass / p[i]);
        zeta[i] = w;
        mass -= w * p[i];
    }
    zeta
}

impl CoherentRisk {
    pub fn validate(&self) -> Result<(), RiskError> {
        match *self {
            CoherentRisk::Expectation => Ok(()),
            CoherentRisk::AVaR { alpha } => check_alpha(alpha),
            CoherentRisk::Combo { lambda, alpha } => {
                if !(0.0..=1.0).contains(&lambda) {
                    return Err(RiskError::Lambda(lambda));
                }
                check_alpha(alpha)
            }
        }
    }

    pub fn is_expectation(&self) -> bool {
        match *self {
            CoherentRisk::Expectation => true,
            CoherentRisk::Combo { lambda, .. } => lambda == 0.0,
            CoherentRisk::AVaR { .. } => false,
        }
    }

    pub fn evaluate(&self, z: &[f64], p: &[f64]) -> f64 {
        let mean: f64 = z.iter().zip(p).map(|(a, b)| a * b).sum();
        match *self {
            CoherentRisk::Expectation => mean,
            CoherentRisk::AVaR { alpha } => avar(alpha, z, p),
            CoherentRisk::Combo { lambda, alpha } => (1.0 - lambda) * mean + lambda * avar(alpha, z, p),
        }
    }

    /// Density ζ in the subdifferential: `Σ p ζ = 1` and `R(Z) = Σ p ζ Z`.
    pub fn subgradient(&self, z: &[f64], p: &[f64]) -> Vec<f64> {
        match *self {
            CoherentRisk::Expectation => vec![1.0; z.len()],
            CoherentRisk::AVaR { alpha } => avar_density(alpha, z, p),
            CoherentRisk::Combo { lambda, alpha } => avar_density(alpha, z, p)
                .into_iter()
                .map(|w| (1.0 - lambda) * 1.0 + lambda * w)
                .collect(),
        }
    }

    pub fn psi(&self) -> PsiForm {
        match *self {
            CoherentRisk::Expectation => PsiForm { lambda: 0.0, alpha: 0.5 },
            CoherentRisk::AVaR { alpha } => PsiForm { lambda: 1.0, alpha },
            CoherentRisk::Combo { lambda, alpha } => PsiForm { lambda, alpha },
        }
    }
}

fn check_alpha(alpha: f64) -> Result<(), RiskError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(RiskError::Alpha(alpha))
    }
}

/// `Ψ(z, θ) = (1-λ) z + λ (θ + (1-α)^{-1} [z-θ]_+)` with `Θ = ℝ`, so that
/// `R(Z) = inf_θ E Ψ(Z, θ)` for the combination measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiForm {
    pub lambda: f64,
    pub alpha: f64,
}

impl PsiForm {
    pub const IDENTITY: PsiForm = PsiForm { lambda: 0.0, alpha: 0.5 };

    pub fn value(&self, z: f64, theta: f64) -> f64 {
        if self.lambda == 0.0 {
            return z;
        }
        (1.0 - self.lambda) * z + self.lambda * (theta + (z - theta).max(0.0) / (1.0 - self.alpha))
    }

    /// Derivative in z; at the kink `z = θ` the lower endpoint `1-λ`.
    pub fn dz(&self, z: f64, theta: f64) -> f64 {
        if z > theta {
            1.0 - self.lambda + self.lambda / (1.0 - self.alpha)
        } else {
            1.0 - self.lambda
        }
    }

    /// Derivative in θ matching the lower-endpoint rule of [`PsiForm::dz`].
    pub fn dtheta(&self, z: f64, theta: f64) -> f64 {
        if z > theta {
            self.lambda - self.lambda / (1.0 - self.alpha)
        } else {
            self.lambda
        }
    }

    /// `E Ψ(Z, θ)` minimized over θ; the minimum sits at an atom.
    pub fn minimize(&self, z: &[f64], p: &[f64]) -> (f64, f64) {
        if self.lambda == 0.0 {
            let mean = z.iter().zip(p).map(|(a, b)| a * b).sum();
            return (mean, z.first().copied().unwrap_or(0.0));
        }
        let mut best = (f64::INFINITY, 0.0);
        for &theta in z {
            let v: f64 = z.iter().zip(p).map(|(zj, pj)| pj * self.value(*zj, theta)).sum();
            if v < best.0 {
                best = (v, theta);
            }
        }
        best
    }

    pub fn risk(&self) -> CoherentRisk {
        if self.lambda == 0.0 {
            CoherentRisk::Expectation
        } else {
            CoherentRisk::Combo {
                lambda: self.lambda,
                alpha: self.alpha,
            }
        }
    }
}

pub use crate::soc::{risk_soc_backward, risk_upper_bound};

/// Risk-averse backward pass for a linear program: cuts weighted by
/// `p_j ζ_j` with ζ the risk subgradient at the children values.
pub fn risk_backward_pass_sp(
    problem: &crate::model::MultistageProblem,
    state: &mut crate::sddp::SolveState,
    trials: &[&[Vec<f64>]],
    risks: &[CoherentRisk],
) -> crate::sddp::Result<()> {
    crate::sddp::backward_pass_weighted(problem, state, trials, risks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HALF: [f64; 2] = [0.5, 0.5];

    #[test]
    fn avar_of_two_point() {
        let r = CoherentRisk::AVaR { alpha: 0.5 };
        assert_eq!(r.evaluate(&[0.0, 1.0], &HALF), 1.0);
        assert_eq!(r.subgradient(&[0.0, 1.0], &HALF), vec![0.0, 2.0]);
    }

    #[test]
    fn constant_is_fixed_point() {
        for r in [
            CoherentRisk::Expectation,
            CoherentRisk::AVaR { alpha: 0.9 },
            CoherentRisk::Combo { lambda: 0.3, alpha: 0.7 },
        ] {
            assert!((r.evaluate(&[4.0, 4.0, 4.0], &[0.2, 0.3, 0.5]) - 4.0).abs() < 1e-12);
            assert_eq!(r.subgradient(&[4.0, 4.0], &HALF), vec![1.0, 1.0]);
        }
    }

    #[test]
    fn combo_zero_is_expectation_exactly() {
        let z = [0.3, 1.7, -2.2];
        let p = [0.1, 0.6, 0.3];
        let c = CoherentRisk::Combo { lambda: 0.0, alpha: 0.8 };
        assert_eq!(c.evaluate(&z, &p).to_bits(), CoherentRisk::Expectation.evaluate(&z, &p).to_bits());
        assert_eq!(c.subgradient(&z, &p), vec![1.0; 3]);
    }

    #[test]
    fn validation() {
        assert!(CoherentRisk::AVaR { alpha: 1.0 }.validate().is_err());
        assert!(CoherentRisk::Combo { lambda: 1.5, alpha: 0.5 }.validate().is_err());
        assert!(CoherentRisk::Combo { lambda: 1.0, alpha: 0.5 }.validate().is_ok());
    }

    #[test]
    fn psi_minimum_is_the_risk_value() {
        let z = [0.0, 2.0, 5.0];
        let p = [0.5, 0.3, 0.2];
        let psi = PsiForm { lambda: 0.4, alpha: 0.75 };
        let (v, _) = psi.minimize(&z, &p);
        assert!((v - psi.risk().evaluate(&z, &p)).abs() < 1e-12);
        assert_eq!(PsiForm::IDENTITY.value(3.5, -1.0), 3.5);
    }

    #[test]
    fn worst_case_limit() {
        let z = [1.0, 4.0, 2.0];
        let p = [0.4, 0.2, 0.4];
        let r = CoherentRisk::AVaR { alpha: 0.81 };
        assert!((r.evaluate(&z, &p) - 4.0).abs() < 1e-12);
    }

    fn dist() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..6).prop_flat_map(|n| {
            (
                prop::collection::vec(-10.0..10.0f64, n),
                prop::collection::vec(0.05..1.0f64, n),
            )
                .prop_map(|(z, w)| {
                    let s: f64 = w.iter().sum();
                    (z, w.into_iter().map(|v| v / s).collect())
                })
        })
    }

    fn risks() -> impl Strategy<Value = CoherentRisk> {
        prop_oneof![
            Just(CoherentRisk::Expectation),
            (0.05..0.95f64).prop_map(|alpha| CoherentRisk::AVaR { alpha }),
            (0.0..1.0f64, 0.05..0.95f64).prop_map(|(lambda, alpha)| CoherentRisk::Combo { lambda, alpha }),
        ]
    }

    proptest! {
        #[test]
        fn coherence(r in risks(), (z, p) in dist(), shift in prop::collection::vec(0.0..3.0f64, 6), c in -5.0..5.0f64, s in 0.1..4.0f64) {
            let v = r.evaluate(&z, &p);
            let up: Vec<f64> = z.iter().zip(&shift).map(|(a, d)| a + d).collect();
            prop_assert!(r.evaluate(&up, &p) >= v - 1e-9);
            let tr: Vec<f64> = z.iter().map(|a| a + c).collect();
            prop_assert!((r.evaluate(&tr, &p) - v - c).abs() < 1e-9);
            let sc: Vec<f64> = z.iter().map(|a| a * s).collect();
            prop_assert!((r.evaluate(&sc, &p) - s * v).abs() < 1e-9 * (1.0 + v.abs() * s));
            let w: Vec<f64> = shift.iter().take(z.len()).map(|d| d * 3.0 - 4.0).collect();
            let sum: Vec<f64> = z.iter().zip(&w).map(|(a, b)| a + b).collect();
            prop_assert!(r.evaluate(&sum, &p) <= v + r.evaluate(&w, &p) + 1e-9);
        }

        #[test]
        fn dual_consistency(r in risks(), (z, p) in dist()) {
            let zeta = r.subgradient(&z, &p);
            let mass: f64 = zeta.iter().zip(&p).map(|(a, b)| a * b).sum();
            prop_assert!((mass - 1.0).abs() < 1e-10);
            prop_assert!(zeta.iter().all(|v| *v >= 0.0));
            let val: f64 = zeta.iter().zip(&p).zip(&z).map(|((a, b), c)| a * b * c).sum();
            prop_assert!((val - r.evaluate(&z, &p)).abs() < 1e-9);
        }

        #[test]
        fn combo_monotone_in_lambda((z, p) in dist(), l1 in 0.0..1.0f64, l2 in 0.0..1.0f64, alpha in 0.05..0.95f64) {
            let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
            let a = CoherentRisk::Combo { lambda: lo, alpha }.evaluate(&z, &p);
            let b = CoherentRisk::Combo { lambda: hi, alpha }.evaluate(&z, &p);
            prop_assert!(a <= b + 1e-9);
        }

        #[test]
        fn psi_convex_and_monotone(lambda in 0.0..1.0f64, alpha in 0.05..0.95f64, z1 in -5.0..5.0f64, z2 in -5.0..5.0f64, t1 in -5.0..5.0f64, t2 in -5.0..5.0f64, s in 0.0..1.0f64) {
            let psi = PsiForm { lambda, alpha };
            let zm = s * z1 + (1.0 - s) * z2;
            let tm = s * t1 + (1.0 - s) * t2;
            prop_assert!(psi.value(zm, tm) <= s * psi.value(z1, t1) + (1.0 - s) * psi.value(z2, t2) + 1e-9);
            let (lo, hi) = if z1 <= z2 { (z1, z2) } else { (z2, z1) };
            prop_assert!(psi.value(lo, t1) <= psi.value(hi, t1) + 1e-12);
        }
    }
}
