//! Reference strategies: no adaptation, BN-statistics refresh, and entropy minimization
//! extended with cross-entropy on binary feedback.

use ndarray::{Array2, Axis};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{BatchView, Feedback, FeedbackOracle, Query};
use crate::error::{Error, Result};
use crate::nn::loss::{complementary_cross_entropy_slope, cross_entropy_slope, entropy_grad};
use crate::nn::{
    argmax_rows, complementary_cross_entropy, cross_entropy, entropy, grad, sgd_step_group, ForwardMode,
    Gradients, Mlp, ParamGroup, PROB_CLIP,
};
use crate::seed::{derive, tag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaselineKind {
    SrcValid,
    BnStats,
    EntropyMinBinary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    /// Randomly chosen feedback samples per batch (entropy baseline only).
    pub k: usize,
    pub lr: f64,
    pub bn_momentum: f64,
    pub clip_eps: f64,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            k: 3,
            lr: 1e-3,
            bn_momentum: 0.3,
            clip_eps: PROB_CLIP,
            seed: 0,
        }
    }
}

/// Predictions of the model as it stands, with running BN statistics.
pub fn srcvalid_step(model: &Mlp, batch: &Array2<f64>) -> Result<Vec<usize>> {
    Ok(argmax_rows(&model.forward(batch, ForwardMode::eval())?))
}

/// Predict on arrival, then blend the batch statistics into the BN running statistics.
///
/// Single-sample batches are predicted but leave the statistics alone.
pub fn bnstats_step(model: &mut Mlp, batch: &Array2<f64>, momentum: f64) -> Result<Vec<usize>> {
    let pred = srcvalid_step(model, batch)?;
    if batch.nrows() >= 2 {
        model.update_bn_stats(batch, momentum)?;
    }
    Ok(pred)
}

/// Terms of the entropy-plus-feedback objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EntropyLossBreakdown {
    /// Mean Shannon entropy of the batch's softmax rows.
    pub entropy: f64,
    /// Mean cross-entropy on samples confirmed correct (0 when there are none).
    pub ce: f64,
    /// Mean complementary cross-entropy on samples reported incorrect (0 when there are none).
    pub cce: f64,
    pub total: f64,
}

/// Feedback on a batch position: the predicted label and whether it was confirmed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabeledFeedback {
    pub index: usize,
    pub label: usize,
    pub feedback: Feedback,
}

/// Value and gradient of `mean entropy + mean CE(correct) + mean CCE(incorrect)` on
/// deterministic outputs of `model`.
pub fn entropy_binary_loss(
    model: &Mlp,
    batch: &Array2<f64>,
    feedback: &[LabeledFeedback],
    eps: f64,
) -> Result<(EntropyLossBreakdown, Gradients)> {
    let n_classes = model.n_classes();
    for f in feedback {
        if f.index >= batch.nrows() {
            return Err(Error::InvalidArgument(format!("feedback index {} outside batch", f.index)));
        }
        if f.label >= n_classes {
            return Err(Error::LabelOutOfRange {
                label: f.label,
                n_classes,
            });
        }
    }
    let n_c = feedback.iter().filter(|f| f.feedback == Feedback::Correct).count();
    let n_i = feedback.len() - n_c;
    let mut parts = EntropyLossBreakdown::default();
    let (_, g) = grad(model, batch, &[ForwardMode::eval()], |outs| {
        let p = &outs[0];
        let n = p.nrows() as f64;
        let mut d = Array2::zeros(p.dim());
        for (i, row) in p.axis_iter(Axis(0)).enumerate() {
            let row = row.to_vec();
            parts.entropy += entropy(&row) / n;
            for (j, gj) in entropy_grad(&row).into_iter().enumerate() {
                d[[i, j]] += gj / n;
            }
        }
        for f in feedback {
            let row = p.row(f.index).to_vec();
            match f.feedback {
                Feedback::Correct => {
                    let m = n_c as f64;
                    parts.ce += cross_entropy(&row, f.label, eps).expect("label checked") / m;
                    d[[f.index, f.label]] += cross_entropy_slope(row[f.label], eps) / m;
                }
                Feedback::Incorrect => {
                    let m = n_i as f64;
                    parts.cce += complementary_cross_entropy(&row, f.label, eps).expect("label checked") / m;
                    d[[f.index, f.label]] += complementary_cross_entropy_slope(row[f.label], eps) / m;
                }
            }
        }
        parts.total = parts.entropy + parts.ce + parts.cce;
        (parts.total, vec![d])
    })?;
    Ok((parts, g))
}

#[derive(Clone, Debug)]
pub struct BaselineReport {
    pub batch_index: usize,
    pub arrival_pred: Vec<usize>,
    /// Deterministic softmax confidence in `arrival_pred`.
    pub arrival_confidence: Vec<f64>,
    pub post_pred: Vec<usize>,
    pub feedback: Vec<(usize, Feedback)>,
    pub loss: Option<EntropyLossBreakdown>,
}

/// One BN refresh and one BN-affine SGD step on the entropy-plus-feedback objective.
/// Returns the arrival predictions, the feedback used and the loss.
pub fn entropy_min_binary_step(
    model: &mut Mlp,
    batch: BatchView<'_>,
    oracle: &mut dyn FeedbackOracle,
    config: &BaselineConfig,
) -> Result<BaselineReport> {
    if batch.len() < 2 {
        return Err(Error::BatchTooSmall(batch.len()));
    }
    let probs = model.forward(batch.features, ForwardMode::eval())?;
    let arrival_pred = argmax_rows(&probs);
    let arrival_confidence = arrival_pred.iter().enumerate().map(|(i, &y)| probs[[i, y]]).collect();

    let k = config.k.min(batch.len());
    let mut picked = if k == 0 {
        Vec::new()
    } else {
        let seed = derive(config.seed, &[tag::BATCH, batch.index as u64, tag::RANDOM_PICK]);
        index::sample(&mut ChaCha8Rng::seed_from_u64(seed), batch.len(), k).into_vec()
    };
    picked.sort_unstable();
    let answers = if picked.is_empty() {
        Vec::new()
    } else {
        let width = batch.features.ncols();
        let flat = batch.features.as_slice().expect("row-major batch");
        let queries: Vec<Query<'_>> = picked
            .iter()
            .map(|&i| Query {
                sample_id: batch.sample_ids[i],
                features: &flat[i * width..(i + 1) * width],
                predicted_label: arrival_pred[i],
                confidence: probs[[i, arrival_pred[i]]],
            })
            .collect();
        oracle.query_batch(batch.index, &queries)?
    };
    if answers.len() != picked.len() {
        return Err(Error::Oracle(format!("{} answers for {} queries", answers.len(), picked.len())));
    }

    let mut next = model.clone();
    next.update_bn_stats(batch.features, config.bn_momentum)?;
    let labeled: Vec<LabeledFeedback> = picked
        .iter()
        .zip(&answers)
        .map(|(&i, &feedback)| LabeledFeedback {
            index: i,
            label: arrival_pred[i],
            feedback,
        })
        .collect();
    let (loss, g) = entropy_binary_loss(&next, batch.features, &labeled, config.clip_eps)?;
    sgd_step_group(&mut next, &g, config.lr, 0.0, ParamGroup::BnAffine)?;
    let post_pred = srcvalid_step(&next, batch.features)?;
    *model = next;
    Ok(BaselineReport {
        batch_index: batch.index,
        arrival_pred,
        arrival_confidence,
        post_pred,
        feedback: picked.into_iter().zip(answers).collect(),
        loss: Some(loss),
    })
}

/// A baseline with its model, processing a stream batch by batch.
#[derive(Clone, Debug)]
pub struct Baseline {
    pub kind: BaselineKind,
    pub config: BaselineConfig,
    model: Mlp,
}

impl Baseline {
    pub fn new(kind: BaselineKind, model: Mlp, config: BaselineConfig) -> Self {
        Self { kind, config, model }
    }

    pub fn model(&self) -> &Mlp {
        &self.model
    }

    pub fn into_model(self) -> Mlp {
        self.model
    }

    pub fn step(&mut self, batch: BatchView<'_>, oracle: &mut dyn FeedbackOracle) -> Result<BaselineReport> {
        match self.kind {
            BaselineKind::SrcValid | BaselineKind::BnStats => {
                let probs = self.model.forward(batch.features, ForwardMode::eval())?;
                let arrival_pred = argmax_rows(&probs);
                let arrival_confidence = arrival_pred.iter().enumerate().map(|(i, &y)| probs[[i, y]]).collect();
                if self.kind == BaselineKind::BnStats {
                    bnstats_step(&mut self.model, batch.features, self.config.bn_momentum)?;
                }
                Ok(BaselineReport {
                    batch_index: batch.index,
                    post_pred: srcvalid_step(&self.model, batch.features)?,
                    arrival_pred,
                    arrival_confidence,
                    feedback: Vec::new(),
                    loss: None,
                })
            }
            BaselineKind::EntropyMinBinary if batch.len() < 2 => {
                let pred = srcvalid_step(&self.model, batch.features)?;
                let probs = self.model.forward(batch.features, ForwardMode::eval())?;
                Ok(BaselineReport {
                    batch_index: batch.index,
                    arrival_confidence: pred.iter().enumerate().map(|(i, &y)| probs[[i, y]]).collect(),
                    post_pred: pred.clone(),
                    arrival_pred: pred,
                    feedback: Vec::new(),
                    loss: None,
                })
            }
            BaselineKind::EntropyMinBinary => entropy_min_binary_step(&mut self.model, batch, oracle, &self.config),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SampleId;
    use crate::nn::Architecture;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn fixture(n: usize) -> (Mlp, Vec<SampleId>, Array2<f64>) {
        let m = Mlp::new(Architecture::new(3, vec![6], 2).unwrap(), 0.3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Array2::from_shape_fn((n, 3), |_| rng.random_range(-1.5..1.5));
        (m, (0..n as u64).map(SampleId).collect(), x)
    }

    struct Always(Feedback);

    impl FeedbackOracle for Always {
        fn query(&mut self, _: SampleId, _: &[f64], _: usize) -> Result<Feedback> {
            Ok(self.0)
        }
    }

    #[test]
    fn srcvalid_is_a_fixed_point() {
        let (m, _, x) = fixture(10);
        let before = m.clone();
        let a = srcvalid_step(&m, &x).unwrap();
        let b = srcvalid_step(&m, &x).unwrap();
        assert_eq!(a, b);
        assert_eq!(m, before);
    }

    #[test]
    fn bnstats_touches_only_statistics() {
        let (mut m, _, x) = fixture(10);
        let before = m.clone();
        bnstats_step(&mut m, &x, 0.3).unwrap();
        let p0: Vec<Vec<f64>> = before.param_tensors().iter().map(|(_, t)| t.to_vec()).collect();
        let p1: Vec<Vec<f64>> = m.param_tensors().iter().map(|(_, t)| t.to_vec()).collect();
        assert_eq!(p0, p1);
        assert_ne!(before.bn_stats(), m.bn_stats());
    }

    #[test]
    fn no_feedback_loss_is_mean_entropy() {
        let (m, _, x) = fixture(10);
        let (l, _) = entropy_binary_loss(&m, &x, &[], PROB_CLIP).unwrap();
        let p = m.forward(&x, ForwardMode::eval()).unwrap();
        let expect = p.rows().into_iter().map(|r| entropy(&r.to_vec())).sum::<f64>() / 10.0;
        assert_abs_diff_eq!(l.entropy, expect, epsilon = 1e-12);
        assert_abs_diff_eq!(l.total, expect, epsilon = 1e-12);
    }

    #[test]
    fn uniform_two_class_entropy_is_ln2() {
        let (mut m, _, x) = fixture(4);
        m.head_mut().weight.fill(0.0);
        m.head_mut().bias.fill(0.0);
        let (l, _) = entropy_binary_loss(&m, &x, &[], PROB_CLIP).unwrap();
        assert_abs_diff_eq!(l.entropy, std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn all_correct_feedback_adds_mean_ce() {
        let (m, _, x) = fixture(6);
        let p = m.forward(&x, ForwardMode::eval()).unwrap();
        let pred = argmax_rows(&p);
        let fb: Vec<_> = (0..6)
            .map(|i| LabeledFeedback {
                index: i,
                label: pred[i],
                feedback: Feedback::Correct,
            })
            .collect();
        let (l, _) = entropy_binary_loss(&m, &x, &fb, PROB_CLIP).unwrap();
        let ce = (0..6).map(|i| -p[[i, pred[i]]].ln()).sum::<f64>() / 6.0;
        assert_abs_diff_eq!(l.total, l.entropy + ce, epsilon = 1e-12);
        assert_eq!(l.cce, 0.0);
    }

    #[test]
    fn entropy_step_updates_only_bn_affine() {
        let (mut m, ids, x) = fixture(12);
        let before = m.clone();
        let view = BatchView::new(0, &ids, &x).unwrap();
        let r = entropy_min_binary_step(&mut m, view, &mut Always(Feedback::Incorrect), &BaselineConfig::default())
            .unwrap();
        assert_eq!(r.feedback.len(), 3);
        assert_eq!(m.head(), before.head());
        for (b0, b1) in before.blocks().iter().zip(m.blocks()) {
            assert_eq!(b0.dense, b1.dense);
            assert_ne!(b0.bn.gamma, b1.bn.gamma);
        }
    }
}
