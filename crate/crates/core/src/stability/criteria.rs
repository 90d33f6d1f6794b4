use nalgebra::DMatrix;
use serde::Serialize;

use super::eigen::lambda_max_sym;
use super::stationary::stationary_distribution;
use crate::error::{Error, Result};
use crate::model::LinearizedModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    StableEvidence,
    UnstableEvidence,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::StableEvidence => "stable-evidence",
            Verdict::UnstableEvidence => "unstable-evidence",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// Per-regime parts of the linearized sum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeTerms {
    pub mu: f64,
    pub drift: f64,
    pub diffusion: f64,
    pub jump: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionValue {
    pub value: f64,
    pub verdict: Verdict,
    pub terms: Vec<RegimeTerms>,
    pub notes: Vec<String>,
}

/// `Σ_i μ_i (Λ_max((b(i) + b′(i))/2) + ½Λ_max(Σ_l σ_l(i)σ_l′(i)) + λ g*(i))`;
/// a negative sum is sufficient for asymptotic stability in the large.
pub fn criterion_cor34(lm: &LinearizedModel) -> Result<CriterionValue> {
    lm.validate()?;
    let mu = stationary_distribution(&lm.q_hat)?.mu;
    let r = lm.dim_x();
    let mut terms = Vec::with_capacity(mu.len());
    for (i, &w) in mu.iter().enumerate() {
        let mut a = DMatrix::zeros(r, r);
        for s in &lm.sigma_mats[i] {
            a += s * s.transpose();
        }
        terms.push(RegimeTerms {
            mu: w,
            drift: lambda_max_sym(&lm.b_mats[i]),
            diffusion: 0.5 * lambda_max_sym(&a),
            jump: lm.jump_rate * lm.g_star[i],
        });
    }
    let value: f64 = terms.iter().map(|t| t.mu * (t.drift + t.diffusion + t.jump)).sum();
    let (verdict, notes) = if value < 0.0 {
        (Verdict::StableEvidence, Vec::new())
    } else {
        (
            Verdict::Inconclusive,
            vec!["the linearized condition is sufficient only; a nonnegative sum is not evidence of instability".into()],
        )
    };
    Ok(CriterionValue {
        value,
        verdict,
        terms,
        notes,
    })
}

/// Almost-sure Lyapunov exponent of the scalar linearization with
/// multiplicative jumps `g = g*(i) x`: `Σ_i μ_i (b(i) − σ(i)²/2 + λ ln(1 + g*(i)))`.
pub fn scalar_sharp_exponent(lm: &LinearizedModel) -> Result<f64> {
    lm.validate()?;
    if lm.dim_x() != 1 {
        return Err(Error::Unsupported(format!(
            "the sharp exponent needs a scalar state, got dim_x = {}",
            lm.dim_x()
        )));
    }
    let mu = stationary_distribution(&lm.q_hat)?.mu;
    Ok(mu
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let b = lm.b_mats[i][(0, 0)];
            let s2: f64 = lm.sigma_mats[i].iter().map(|s| s[(0, 0)].powi(2)).sum();
            w * (b - 0.5 * s2 + lm.jump_rate * lm.g_star[i].ln_1p())
        })
        .sum())
}
