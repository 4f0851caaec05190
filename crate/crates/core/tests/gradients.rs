//! Analytic gradients against central finite differences.

mod common;

use bitta::baselines::{entropy_binary_loss, LabeledFeedback};
use bitta::engine::{
    bitta_loss, bitta_loss_value, AdaptConfig, AgreementSamples, Feedback,
};
use bitta::nn::{grad, ForwardMode, Mlp, PROB_CLIP};
use common::fd::*;
use ndarray::Array2;

#[test]
fn bitta_loss_gradient_matches_finite_differences() {
    let m = model(1);
    let mc = memory(Feedback::Correct, 5, 10, 4);
    let mi = memory(Feedback::Incorrect, 4, 11, 4);
    let aba = AgreementSamples::new(inputs(7, 12), vec![0, 1, 2, 3, 0, 1, 2]);
    let cfg = AdaptConfig::default();
    let seed = 99;
    let l = bitta_loss(&m, &mc, &mi, &aba, &cfg, seed).unwrap();
    assert_eq!(l.breakdown.terms_evaluated, 3);
    let (n, worst) = check(&m, &l.grad, 150, 3, |p| bitta_loss_value(p, &mc, &mi, &aba, &cfg, seed).unwrap());
    assert!(n >= 100);
    assert!(worst <= TOL, "worst relative error {worst:e}");
}

#[test]
fn bitta_loss_gradient_with_frozen_statistics() {
    let mut m = model(2);
    m.update_bn_stats(&inputs(32, 5), 0.3).unwrap();
    assert!(m.is_bn_frozen());
    let mc = memory(Feedback::Correct, 3, 20, 4);
    let mi = memory(Feedback::Incorrect, 6, 21, 4);
    let aba = AgreementSamples::new(inputs(4, 22), vec![3, 2, 1, 0]);
    let cfg = AdaptConfig {
        alpha: 1.0,
        beta: 0.5,
        ..Default::default()
    };
    let l = bitta_loss(&m, &mc, &mi, &aba, &cfg, 7).unwrap();
    let (_, worst) = check(&m, &l.grad, 150, 4, |p| bitta_loss_value(p, &mc, &mi, &aba, &cfg, 7).unwrap());
    assert!(worst <= TOL, "worst relative error {worst:e}");
}

#[test]
fn entropy_baseline_gradient_matches_finite_differences() {
    let mut m = model(3);
    let x = inputs(12, 30);
    m.update_bn_stats(&x, 0.3).unwrap();
    let fb = vec![
        LabeledFeedback {
            index: 0,
            label: 1,
            feedback: Feedback::Correct,
        },
        LabeledFeedback {
            index: 5,
            label: 2,
            feedback: Feedback::Incorrect,
        },
        LabeledFeedback {
            index: 9,
            label: 0,
            feedback: Feedback::Incorrect,
        },
    ];
    let (_, g) = entropy_binary_loss(&m, &x, &fb, PROB_CLIP).unwrap();
    let (n, worst) = check(&m, &g, 150, 5, |p| entropy_binary_loss(p, &x, &fb, PROB_CLIP).unwrap().0.total);
    assert!(n >= 100);
    assert!(worst <= TOL, "worst relative error {worst:e}");
}

#[test]
fn training_mode_gradient_with_batch_statistics() {
    let m = model(4);
    let x = inputs(10, 40);
    let labels: Vec<usize> = (0..10).map(|i| i % 4).collect();
    let mode = ForwardMode::train(17);
    let ce = |outs: &[Array2<f64>]| {
        let p = &outs[0];
        let mut d = Array2::zeros(p.dim());
        let mut v = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            v -= p[[i, y]].ln() / 10.0;
            d[[i, y]] = -1.0 / (10.0 * p[[i, y]]);
        }
        (v, vec![d])
    };
    let (_, g) = grad(&m, &x, &[mode], ce).unwrap();
    let value = |p: &Mlp| ce(&[p.forward(&x, mode).unwrap()]).0;
    let (_, worst) = check(&m, &g, 200, 6, value);
    assert!(worst <= TOL, "worst relative error {worst:e}");
}
