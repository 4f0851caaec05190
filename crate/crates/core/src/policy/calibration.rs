use crate::error::{Error, Result};

/// Binned expected calibration error over equal-width, right-closed bins of `(0, 1]`.
///
/// Confidence `0` falls into the first bin; empty bins contribute nothing.
pub fn expected_calibration_error(confidences: &[f64], correct: &[bool], n_bins: usize) -> Result<f64> {
    if confidences.len() != correct.len() {
        return Err(Error::Shape(format!(
            "{} confidences vs {} correctness flags",
            confidences.len(),
            correct.len()
        )));
    }
    if n_bins == 0 {
        return Err(Error::InvalidArgument("n_bins must be at least 1".into()));
    }
    if confidences.iter().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(Error::InvalidArgument("confidences must lie in [0, 1]".into()));
    }
    if confidences.is_empty() {
        return Ok(0.0);
    }
    let mut count = vec![0usize; n_bins];
    let mut conf_sum = vec![0.0; n_bins];
    let mut hits = vec![0usize; n_bins];
    for (&c, &ok) in confidences.iter().zip(correct) {
        let b = bin_of(c, n_bins);
        count[b] += 1;
        conf_sum[b] += c;
        hits[b] += usize::from(ok);
    }
    let n = confidences.len() as f64;
    Ok((0..n_bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let m = count[b] as f64;
            (m / n) * (hits[b] as f64 / m - conf_sum[b] / m).abs()
        })
        .sum())
}

fn bin_of(c: f64, n_bins: usize) -> usize {
    // bin b covers (b/n, (b+1)/n]
    let upper = (c * n_bins as f64).ceil() as usize;
    upper.saturating_sub(1).min(n_bins - 1)
}
