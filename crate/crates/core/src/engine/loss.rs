//! The adaptation objective over the feedback memories and the agreement set.
//!
//! ```text
//! L = alpha * mean_{M_C}(-ln pi(y*|x)) + alpha * mean_{M_I}(+ln pi(y*|x)) + beta * mean_{S_ABA}(-ln pi(y*|x))
//! ```
//!
//! `pi` is the MC-dropout policy (mean softmax over `n_passes` dropout forwards). Each term
//! draws its own dropout seeds, and a term that is empty or has zero weight is skipped
//! entirely, so removing a term never perturbs the others.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::AdaptConfig;
use super::memory::ReplayMemory;
use crate::error::{Error, Result};
use crate::nn::loss::cross_entropy_slope;
use crate::nn::{grad, ForwardMode, Gradients, Mlp};
use crate::policy::{mean_probs, pass_seeds};
use crate::seed::{derive, tag};

/// Unlabeled samples of the agreement set with their pseudo-labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AgreementSamples {
    pub features: Option<Array2<f64>>,
    pub labels: Vec<usize>,
}

impl AgreementSamples {
    pub fn new(features: Array2<f64>, labels: Vec<usize>) -> Self {
        assert_eq!(features.nrows(), labels.len());
        Self {
            features: Some(features),
            labels,
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Which terms an engine evaluates. Disabling a term is equivalent to giving it zero weight.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermMask {
    pub feedback: bool,
    pub agreement: bool,
}

impl Default for TermMask {
    fn default() -> Self {
        Self {
            feedback: true,
            agreement: true,
        }
    }
}

/// Unweighted term means and the weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// `mean(-ln pi)` over the correct memory.
    pub correct: f64,
    /// `mean(+ln pi)` over the incorrect memory.
    pub incorrect: f64,
    /// `mean(-ln pi)` over the agreement set.
    pub agreement: f64,
    pub total: f64,
    pub terms_evaluated: usize,
}

#[derive(Clone, Debug)]
pub struct BittaLoss {
    pub breakdown: LossBreakdown,
    pub grad: Gradients,
}

#[derive(Clone, Copy)]
enum Term {
    Correct,
    Incorrect,
    Agreement,
}

impl Term {
    fn id(self) -> u64 {
        match self {
            Term::Correct => 0,
            Term::Incorrect => 1,
            Term::Agreement => 2,
        }
    }

    /// `+1` for terms that minimize cross-entropy, `-1` for the one that maximizes it.
    fn sign(self) -> f64 {
        match self {
            Term::Incorrect => -1.0,
            _ => 1.0,
        }
    }
}

struct TermInput<'a> {
    term: Term,
    features: &'a Array2<f64>,
    labels: &'a [usize],
    weight: f64,
}

fn term_modes(mc_seed: u64, term: Term, n_passes: usize) -> Vec<ForwardMode> {
    pass_seeds(derive(mc_seed, &[tag::TERM, term.id()]), n_passes)
        .into_iter()
        .map(ForwardMode::mc)
        .collect()
}

/// Signed mean cross-entropy of one term and its derivative w.r.t. each pass output.
fn term_value(policy: &Array2<f64>, labels: &[usize], term: Term, eps: f64) -> f64 {
    let m = labels.len() as f64;
    let ce: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -policy[[i, y]].clamp(eps, 1.0 - eps).ln())
        .sum();
    term.sign() * ce / m
}

fn evaluate_term(model: &Mlp, input: &TermInput<'_>, config: &AdaptConfig, mc_seed: u64) -> Result<(f64, Gradients)> {
    let n_classes = model.n_classes();
    if let Some(&bad) = input.labels.iter().find(|&&y| y >= n_classes) {
        return Err(Error::LabelOutOfRange { label: bad, n_classes });
    }
    let modes = term_modes(mc_seed, input.term, config.n_passes);
    let eps = config.clip_eps;
    let (term, labels, weight) = (input.term, input.labels, input.weight);
    grad(model, input.features, &modes, |outs| {
        let policy = mean_probs(outs);
        let value = term_value(&policy, labels, term, eps);
        let scale = weight * term.sign() / (labels.len() as f64 * outs.len() as f64);
        let mut d = Array2::zeros(policy.dim());
        for (i, &y) in labels.iter().enumerate() {
            d[[i, y]] = scale * cross_entropy_slope(policy[[i, y]], eps);
        }
        (value, vec![d; outs.len()])
    })
}

fn collect_terms<'a>(
    correct: (&'a Array2<f64>, &'a [usize]),
    incorrect: (&'a Array2<f64>, &'a [usize]),
    aba: &'a AgreementSamples,
    config: &AdaptConfig,
    mask: TermMask,
) -> Vec<TermInput<'a>> {
    let mut terms = Vec::with_capacity(3);
    if mask.feedback && config.alpha != 0.0 {
        if !correct.1.is_empty() {
            terms.push(TermInput {
                term: Term::Correct,
                features: correct.0,
                labels: correct.1,
                weight: config.alpha,
            });
        }
        if !incorrect.1.is_empty() {
            terms.push(TermInput {
                term: Term::Incorrect,
                features: incorrect.0,
                labels: incorrect.1,
                weight: config.alpha,
            });
        }
    }
    if mask.agreement && config.beta != 0.0 {
        if let Some(features) = &aba.features {
            if !aba.is_empty() {
                terms.push(TermInput {
                    term: Term::Agreement,
                    features,
                    labels: &aba.labels,
                    weight: config.beta,
                });
            }
        }
    }
    terms
}

/// Loss and gradient of the adaptation objective.
///
/// Returns [`Error::NoOpBatch`] when the memories and the agreement set are all empty. When
/// every non-empty term has zero weight the loss is `0`, the gradient is zero and
/// `terms_evaluated` is `0`.
pub fn bitta_loss(
    model: &Mlp,
    correct: &ReplayMemory,
    incorrect: &ReplayMemory,
    aba: &AgreementSamples,
    config: &AdaptConfig,
    mc_seed: u64,
) -> Result<BittaLoss> {
    bitta_loss_masked(model, correct, incorrect, aba, config, mc_seed, TermMask::default())
}

pub fn bitta_loss_masked(
    model: &Mlp,
    correct: &ReplayMemory,
    incorrect: &ReplayMemory,
    aba: &AgreementSamples,
    config: &AdaptConfig,
    mc_seed: u64,
    mask: TermMask,
) -> Result<BittaLoss> {
    if correct.is_empty() && incorrect.is_empty() && aba.is_empty() {
        return Err(Error::NoOpBatch);
    }
    let dim = model.architecture().input_dim;
    let (xc, yc) = (correct.features(dim), correct.labels());
    let (xi, yi) = (incorrect.features(dim), incorrect.labels());
    let terms = collect_terms((&xc, &yc), (&xi, &yi), aba, config, mask);

    let mut breakdown = LossBreakdown::default();
    let mut total_grad: Option<Gradients> = None;
    for t in &terms {
        let (value, g) = evaluate_term(model, t, config, mc_seed)?;
        match t.term {
            Term::Correct => breakdown.correct = value,
            Term::Incorrect => breakdown.incorrect = value,
            Term::Agreement => breakdown.agreement = value,
        }
        breakdown.total += t.weight * value;
        breakdown.terms_evaluated += 1;
        match total_grad.as_mut() {
            Some(acc) => acc.accumulate(&g),
            None => total_grad = Some(g),
        }
    }
    Ok(BittaLoss {
        breakdown,
        grad: total_grad.unwrap_or_else(|| Gradients::zeros_like(model)),
    })
}

/// Loss value only, by plain forward passes with the same dropout seeds as [`bitta_loss`].
pub fn bitta_loss_value(
    model: &Mlp,
    correct: &ReplayMemory,
    incorrect: &ReplayMemory,
    aba: &AgreementSamples,
    config: &AdaptConfig,
    mc_seed: u64,
) -> Result<f64> {
    if correct.is_empty() && incorrect.is_empty() && aba.is_empty() {
        return Err(Error::NoOpBatch);
    }
    let dim = model.architecture().input_dim;
    let (xc, yc) = (correct.features(dim), correct.labels());
    let (xi, yi) = (incorrect.features(dim), incorrect.labels());
    let terms = collect_terms((&xc, &yc), (&xi, &yi), aba, config, TermMask::default());
    let mut total = 0.0;
    for t in &terms {
        let outs = term_modes(mc_seed, t.term, config.n_passes)
            .into_iter()
            .map(|mode| model.forward(t.features, mode))
            .collect::<Result<Vec<_>>>()?;
        total += t.weight * term_value(&mean_probs(&outs), t.labels, t.term, config.clip_eps);
    }
    Ok(total)
}
