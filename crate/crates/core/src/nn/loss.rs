//! Per-row losses on probability vectors, with their derivatives.
//!
//! Probabilities entering a logarithm are clipped to `[eps, 1 - eps]`; outside that
//! interval the clipped value is constant and the derivative is zero.

use crate::error::{Error, Result};

/// Default probability clip.
pub const PROB_CLIP: f64 = 1e-6;

fn check(probs: &[f64], label: usize) -> Result<()> {
    if label >= probs.len() {
        return Err(Error::LabelOutOfRange {
            label,
            n_classes: probs.len(),
        });
    }
    Ok(())
}

fn clip(p: f64, eps: f64) -> f64 {
    p.clamp(eps, 1.0 - eps)
}

/// Derivative of the clip: one inside the interval, zero at or beyond its ends.
fn clip_slope(p: f64, eps: f64) -> f64 {
    if p > eps && p < 1.0 - eps {
        1.0
    } else {
        0.0
    }
}

/// `-ln(clip(p[label]))`
pub fn cross_entropy(probs: &[f64], label: usize, eps: f64) -> Result<f64> {
    check(probs, label)?;
    Ok(-clip(probs[label], eps).ln())
}

/// d/dp[label] of [`cross_entropy`]; every other entry has zero derivative.
pub fn cross_entropy_slope(p_label: f64, eps: f64) -> f64 {
    -clip_slope(p_label, eps) / clip(p_label, eps)
}

/// `-ln(clip(1 - p[label]))`, the loss for a label known to be wrong.
pub fn complementary_cross_entropy(probs: &[f64], label: usize, eps: f64) -> Result<f64> {
    check(probs, label)?;
    Ok(-clip(1.0 - probs[label], eps).ln())
}

/// d/dp[label] of [`complementary_cross_entropy`].
pub fn complementary_cross_entropy_slope(p_label: f64, eps: f64) -> f64 {
    let q = 1.0 - p_label;
    clip_slope(q, eps) / clip(q, eps)
}

/// Shannon entropy `-sum p ln p` (natural log), with `0 ln 0 = 0`.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Gradient of [`entropy`] with respect to each probability.
pub fn entropy_grad(probs: &[f64]) -> Vec<f64> {
    probs
        .iter()
        .map(|&p| -(p.max(f64::MIN_POSITIVE).ln() + 1.0))
        .collect()
}
