//! McNemar's test on paired classifier outcomes.

use serde::{Deserialize, Serialize};

use super::{check_lengths, EvalError};
use crate::labeling::BinaryLabel;

/// Below this many discordant pairs the exact binomial test is used.
pub const EXACT_BELOW: u64 = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McNemarMethod {
    ExactBinomial,
    ChiSquared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    /// A correct, B wrong.
    pub b: u64,
    /// A wrong, B correct.
    pub c: u64,
    /// Continuity-corrected `(|b − c| − 1)² / (b + c)`; 0 when `b + c = 0`.
    pub statistic: f64,
    pub p_value: f64,
    pub method: McNemarMethod,
}

pub fn mcnemar(a: &[BinaryLabel], b: &[BinaryLabel], truth: &[BinaryLabel]) -> Result<McNemarResult, EvalError> {
    check_lengths(a.len(), truth.len())?;
    check_lengths(b.len(), truth.len())?;
    let (mut nb, mut nc) = (0u64, 0u64);
    for ((x, y), t) in a.iter().zip(b).zip(truth) {
        match (x == t, y == t) {
            (true, false) => nb += 1,
            (false, true) => nc += 1,
            _ => {}
        }
    }
    Ok(mcnemar_counts(nb, nc))
}

pub fn mcnemar_counts(b: u64, c: u64) -> McNemarResult {
    let n = b + c;
    let statistic = if n == 0 {
        0.0
    } else {
        let d = b.abs_diff(c) as f64 - 1.0;
        d * d / n as f64
    };
    if n < EXACT_BELOW {
        McNemarResult { b, c, statistic, p_value: exact_p(b.min(c), n), method: McNemarMethod::ExactBinomial }
    } else {
        McNemarResult { b, c, statistic, p_value: chi2_1_survival(statistic), method: McNemarMethod::ChiSquared }
    }
}

/// Two-sided exact p: `2 · P(X ≤ k)` for `X ~ Binomial(n, 1/2)`, capped at 1.
fn exact_p(k: u64, n: u64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut coef = 1.0f64;
    let mut cdf = 0.0;
    for i in 0..=k {
        if i > 0 {
            coef = coef * (n - i + 1) as f64 / i as f64;
        }
        cdf += coef;
    }
    (2.0 * cdf * 0.5f64.powi(n as i32)).min(1.0)
}

/// Survival function of χ² with one degree of freedom.
pub fn chi2_1_survival(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    libm::erfc((x / 2.0).sqrt())
}
