//! The exponential mechanism.
//!
//! Candidate `i` is drawn with probability proportional to
//! `exp(ε · score(i) / (2Δ))`. Call sites whose original algorithm uses a
//! different exponent pass `Δ` adjusted accordingly.

use crate::error::{invalid, Result};
use crate::rng::RngStream;

/// Selection probabilities, computed with log-sum-exp.
pub fn selection_probabilities(scores: &[f64], epsilon: f64, sensitivity: f64) -> Result<Vec<f64>> {
    validate(scores, epsilon, sensitivity)?;
    let coef = epsilon / (2.0 * sensitivity);
    let max = scores.iter().map(|s| coef * s).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores.iter().map(|s| (coef * s - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Index of the selected candidate.
pub fn exponential_mechanism(
    scores: &[f64],
    epsilon: f64,
    sensitivity: f64,
    rng: &mut RngStream,
) -> Result<usize> {
    validate(scores, epsilon, sensitivity)?;
    let coef = epsilon / (2.0 * sensitivity);
    let max = scores.iter().map(|s| coef * s).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores.iter().map(|s| (coef * s - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let target = rng.uniform_open01() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return Ok(i);
        }
    }
    // Rounding left `target` past the accumulated mass; take the last candidate with weight.
    Ok(weights.iter().rposition(|&w| w > 0.0).unwrap_or(0))
}

fn validate(scores: &[f64], epsilon: f64, sensitivity: f64) -> Result<()> {
    if scores.is_empty() {
        return Err(invalid("exponential mechanism needs at least one candidate"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(invalid("candidate scores must be finite"));
    }
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(invalid(format!("epsilon must be non-negative, got {epsilon}")));
    }
    if !(sensitivity.is_finite() && sensitivity > 0.0) {
        return Err(invalid(format!("score sensitivity must be positive, got {sensitivity}")));
    }
    Ok(())
}
