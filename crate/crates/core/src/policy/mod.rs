//! MC-dropout policy estimation, feedback-sample selection and the agreement set.

pub mod calibration;

use ndarray::Array2;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{argmax_rows, ForwardMode, Mlp};
use crate::seed::{derive, tag};

pub use calibration::expected_calibration_error;

/// MC-dropout policy and deterministic predictions for one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyEstimate {
    /// Mean softmax over the dropout passes, `[batch, classes]`.
    pub mc_probs: Array2<f64>,
    pub det_probs: Array2<f64>,
    pub det_pred: Vec<usize>,
    pub mc_pred: Vec<usize>,
    /// MC-dropout probability of the deterministic prediction.
    pub confidence: Vec<f64>,
    pub n_passes: usize,
    pub pass_seeds: Vec<u64>,
}

impl PolicyEstimate {
    pub fn len(&self) -> usize {
        self.det_pred.len()
    }

    pub fn is_empty(&self) -> bool {
        self.det_pred.is_empty()
    }

    /// Confidence of the plain softmax in its own prediction.
    pub fn det_confidence(&self) -> Vec<f64> {
        self.det_pred
            .iter()
            .enumerate()
            .map(|(i, &y)| self.det_probs[[i, y]])
            .collect()
    }
}

/// Seeds of the `n_passes` dropout passes drawn from `base_seed`.
pub fn pass_seeds(base_seed: u64, n_passes: usize) -> Vec<u64> {
    (0..n_passes as u64)
        .map(|n| derive(base_seed, &[tag::PASS, n]))
        .collect()
}

/// Element-wise mean of equally shaped probability matrices.
pub fn mean_probs(passes: &[Array2<f64>]) -> Array2<f64> {
    let mut acc = passes[0].clone();
    for p in &passes[1..] {
        acc += p;
    }
    acc / passes.len() as f64
}

/// Run `n_passes` dropout forwards plus one deterministic forward, all on running BN stats.
pub fn estimate_policy(
    model: &Mlp,
    batch: &Array2<f64>,
    n_passes: usize,
    base_seed: u64,
) -> Result<PolicyEstimate> {
    if n_passes < 1 {
        return Err(Error::InvalidArgument("n_passes must be at least 1".into()));
    }
    let seeds = pass_seeds(base_seed, n_passes);
    let passes = seeds
        .iter()
        .map(|&s| model.forward(batch, ForwardMode::mc(s)))
        .collect::<Result<Vec<_>>>()?;
    let mc_probs = mean_probs(&passes);
    let det_probs = model.forward(batch, ForwardMode::eval())?;
    Ok(assemble(mc_probs, det_probs, seeds))
}

pub(crate) fn assemble(mc_probs: Array2<f64>, det_probs: Array2<f64>, seeds: Vec<u64>) -> PolicyEstimate {
    let det_pred = argmax_rows(&det_probs);
    let mc_pred = argmax_rows(&mc_probs);
    let confidence = det_pred
        .iter()
        .enumerate()
        .map(|(i, &y)| mc_probs[[i, y]])
        .collect();
    PolicyEstimate {
        n_passes: seeds.len(),
        mc_probs,
        det_probs,
        det_pred,
        mc_pred,
        confidence,
        pass_seeds: seeds,
    }
}

/// How feedback samples are picked from a batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    LeastConfidence,
    /// Uniform without replacement; the seed is mixed with the batch seed by the caller.
    Random,
}

/// Indices of the `min(k, n)` samples to query.
///
/// `LeastConfidence` returns ascending confidence, ties to the lower batch index.
/// `Random` draws uniformly without replacement from `seed`.
pub fn select_bfa(estimate: &PolicyEstimate, k: usize, strategy: Selection, seed: u64) -> Vec<usize> {
    let n = estimate.len();
    let k = k.min(n);
    match strategy {
        Selection::LeastConfidence => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                estimate.confidence[a]
                    .total_cmp(&estimate.confidence[b])
                    .then(a.cmp(&b))
            });
            order.truncate(k);
            order
        }
        Selection::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            index::sample(&mut rng, n, k).into_vec()
        }
    }
}

/// Non-selected indices whose deterministic and MC-dropout predictions coincide, ascending.
pub fn agreement_set(estimate: &PolicyEstimate, bfa_indices: &[usize]) -> Vec<usize> {
    let mut excluded = vec![false; estimate.len()];
    for &i in bfa_indices {
        excluded[i] = true;
    }
    (0..estimate.len())
        .filter(|&i| !excluded[i] && estimate.det_pred[i] == estimate.mc_pred[i])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Architecture;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn with_confidence(conf: &[f64]) -> PolicyEstimate {
        let n = conf.len();
        let mc = Array2::from_shape_fn((n, 2), |(i, j)| if j == 0 { conf[i] } else { 1.0 - conf[i] });
        let det = Array2::from_shape_fn((n, 2), |(_, j)| if j == 0 { 0.9 } else { 0.1 });
        assemble(mc, det, vec![0])
    }

    #[test]
    fn mean_of_two_passes() {
        let m = mean_probs(&[array![[0.6, 0.4]], array![[0.2, 0.8]]]);
        assert!((m[[0, 0]] - 0.4).abs() < 1e-15);
        assert!((m[[0, 1]] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn least_confidence_selection() {
        let est = with_confidence(&[0.9, 0.2, 0.5, 0.7]);
        assert_eq!(select_bfa(&est, 2, Selection::LeastConfidence, 0), vec![1, 2]);
        assert!(select_bfa(&est, 0, Selection::LeastConfidence, 0).is_empty());
        assert_eq!(select_bfa(&est, 10, Selection::LeastConfidence, 0).len(), 4);
        let tie = with_confidence(&[0.3, 0.3, 0.9]);
        assert_eq!(select_bfa(&tie, 1, Selection::LeastConfidence, 0), vec![0]);
    }

    #[test]
    fn random_selection_is_seeded() {
        let est = with_confidence(&[0.5; 20]);
        let a = select_bfa(&est, 5, Selection::Random, 3);
        assert_eq!(a, select_bfa(&est, 5, Selection::Random, 3));
        let mut sorted = a.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 5);
    }

    #[test]
    fn agreement_examples() {
        let mut est = with_confidence(&[0.5; 4]);
        est.det_pred = vec![0, 1, 2, 1];
        est.mc_pred = vec![0, 2, 2, 1];
        assert_eq!(agreement_set(&est, &[3]), vec![0, 2]);
        assert!(agreement_set(&est, &[0, 1, 2, 3]).is_empty());
    }

    #[test]
    fn zero_dropout_makes_agreement_universal() {
        let m = Mlp::new(Architecture::new(3, vec![4], 3).unwrap(), 0.0, 1).unwrap();
        let x = Array2::from_shape_fn((6, 3), |(i, j)| (i as f64 - j as f64) * 0.7);
        let est = estimate_policy(&m, &x, 4, 9).unwrap();
        assert_eq!(est.mc_probs, est.det_probs);
        assert_eq!(est.mc_pred, est.det_pred);
        assert_eq!(agreement_set(&est, &[]), (0..6).collect::<Vec<_>>());
        assert_eq!(est, estimate_policy(&m, &x, 4, 9).unwrap());
        assert!(estimate_policy(&m, &x, 0, 9).is_err());
    }

    proptest! {
        #[test]
        fn selection_and_agreement_structure(
            conf in prop::collection::vec(0.0f64..1.0, 1..40),
            preds in prop::collection::vec((0usize..3, 0usize..3), 40),
            k in 0usize..50,
            random in any::<bool>(),
        ) {
            let mut est = with_confidence(&conf);
            let n = conf.len();
            est.det_pred = preds[..n].iter().map(|p| p.0).collect();
            est.mc_pred = preds[..n].iter().map(|p| p.1).collect();
            let strategy = if random { Selection::Random } else { Selection::LeastConfidence };
            let bfa = select_bfa(&est, k, strategy, 17);
            prop_assert_eq!(bfa.len(), k.min(n));
            let aba = agreement_set(&est, &bfa);
            for i in &aba {
                prop_assert!(!bfa.contains(i));
                prop_assert_eq!(est.det_pred[*i], est.mc_pred[*i]);
            }
            for i in 0..n {
                if !bfa.contains(&i) && est.det_pred[i] == est.mc_pred[i] {
                    prop_assert!(aba.contains(&i));
                }
            }
        }

        #[test]
        fn lowering_a_confidence_forces_selection(
            conf in prop::collection::vec(0.01f64..1.0, 2..30),
            k in 1usize..10,
            target in 0usize..30,
        ) {
            let n = conf.len();
            let target = target % n;
            let mut est = with_confidence(&conf);
            let selected = select_bfa(&est, k, Selection::LeastConfidence, 0);
            let floor = selected.iter().map(|&i| est.confidence[i]).fold(f64::INFINITY, f64::min);
            est.confidence[target] = floor / 2.0;
            prop_assert!(select_bfa(&est, k, Selection::LeastConfidence, 0).contains(&target));
        }
    }
}
