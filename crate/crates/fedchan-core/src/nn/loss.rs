//! Scalar loss primitives shared by the classifier and both path models.

use super::{NnError, Result};

/// Probabilities are clamped to this floor before any log.
pub const PROB_FLOOR: f64 = 1e-12;

/// KL divergence of a diagonal Gaussian `N(mu, exp(logvar))` from the unit
/// Gaussian: `-0.5 * sum(1 + logvar - mu^2 - exp(logvar))`. Non-negative
/// for all finite inputs.
pub fn gaussian_kl(mu: &[f64], logvar: &[f64]) -> Result<f64> {
    if mu.len() != logvar.len() {
        return Err(NnError::LengthMismatch {
            expected: mu.len(),
            got: logvar.len(),
        });
    }
    if mu.iter().chain(logvar).any(|v| !v.is_finite()) {
        return Err(NnError::NonFiniteInput);
    }
    let mut acc = 0.0;
    for (m, lv) in mu.iter().zip(logvar) {
        acc += 1.0 + lv - m * m - lv.exp();
    }
    Ok(-0.5 * acc)
}

/// Multiclass cross-entropy `-ln(probs[label])` with a floor clamp so a
/// zero probability stays finite.
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    if label >= probs.len() {
        return Err(NnError::LabelOutOfRange {
            label,
            classes: probs.len(),
        });
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(NnError::NotASimplex { sum });
    }
    Ok(-probs[label].max(PROB_FLOOR).ln())
}
