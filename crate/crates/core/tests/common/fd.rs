//! Central finite differences against analytic gradients.

use bitta::engine::{Feedback, FeedbackRecord, ReplayMemory, SampleId};
use bitta::nn::{Architecture, Gradients, Mlp};
use ndarray::Array2;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-4;
pub const TOL: f64 = 1e-4;

/// 6-16-12-4 network: 112 + 28 + 208 + 24 + 52 = 424 parameters.
pub fn model(seed: u64) -> Mlp {
    let mut m = Mlp::new(Architecture::new(6, vec![16, 12], 4).unwrap(), 0.3, seed).unwrap();
    // Move BN away from the identity so the affine gradients are not degenerate.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    for (kind, t) in m.param_tensors_mut() {
        if kind.is_bn_affine() {
            for v in t.iter_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
    }
    m
}

pub fn inputs(n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, 6), |_| rng.random_range(-2.0..2.0))
}

pub fn flat(g: &Gradients) -> Vec<f64> {
    g.tensors().into_iter().flat_map(|(_, t)| t.to_vec()).collect()
}

pub fn set_param(m: &mut Mlp, idx: usize, delta: f64) {
    let mut left = idx;
    for (_, t) in m.param_tensors_mut() {
        if left < t.len() {
            t[left] += delta;
            return;
        }
        left -= t.len();
    }
    panic!("parameter index out of range");
}

/// Compare analytic and central-difference gradients on `n_samples` random parameters.
/// Relative error uses `max(|a|, |n|, 1e-6)` as the scale.
pub fn check(m: &Mlp, analytic: &Gradients, n_samples: usize, seed: u64, loss: impl Fn(&Mlp) -> f64) -> (usize, f64) {
    let g = flat(analytic);
    assert!(m.param_count() <= 1000);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = index::sample(&mut rng, g.len(), n_samples.min(g.len()));
    let mut worst = 0.0f64;
    for i in picks {
        let mut plus = m.clone();
        set_param(&mut plus, i, STEP);
        let mut minus = m.clone();
        set_param(&mut minus, i, -STEP);
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * STEP);
        let scale = g[i].abs().max(numeric.abs()).max(1e-6);
        let rel = (g[i] - numeric).abs() / scale;
        // Absolute slack for entries that are numerically zero.
        if (g[i] - numeric).abs() > 1e-9 {
            worst = worst.max(rel);
        }
    }
    (n_samples.min(g.len()), worst)
}

pub fn memory(feedback: Feedback, n: usize, seed: u64, n_classes: usize) -> ReplayMemory {
    let x = inputs(n, seed);
    ReplayMemory::from_records(
        64,
        (0..n).map(|i| FeedbackRecord {
            sample_id: SampleId(i as u64),
            features: x.row(i).to_vec(),
            predicted_label: (i * 7 + seed as usize) % n_classes,
            feedback,
        }),
    )
}

