use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::PretrainConfig;
use crate::error::{Error, Result};
use crate::nn::loss::cross_entropy_slope;
use crate::nn::{argmax_rows, grad, sgd_step, Architecture, ForwardMode, Mlp, PROB_CLIP};
use crate::seed::{derive, tag};
use crate::streams::{make_source_dataset, LabeledDataset, StreamSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub train_accuracy: f64,
    pub holdout_accuracy: f64,
    /// Mean training cross-entropy per epoch.
    pub epoch_loss: Vec<f64>,
}

pub fn source_splits(spec: &StreamSpec, cfg: &PretrainConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    let train = make_source_dataset(spec, cfg.n_train, derive(cfg.seed, &[tag::SHUFFLE, 0]))?;
    let holdout = make_source_dataset(spec, cfg.n_holdout, derive(cfg.seed, &[tag::SHUFFLE, 1]))?;
    Ok((train, holdout))
}

pub fn accuracy(model: &Mlp, data: &LabeledDataset) -> Result<f64> {
    let pred = argmax_rows(&model.forward(&data.features, ForwardMode::eval())?);
    let hits = pred.iter().zip(&data.labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / data.len() as f64)
}

/// Train a source model on clean data with minibatch SGD, then set its BN running
/// statistics to the exact statistics of the training set.
///
/// Fails with [`Error::PretrainNotConverged`] when clean holdout accuracy stays below
/// `cfg.min_accuracy`. The result depends only on `spec` and `cfg`.
pub fn pretrain(spec: &StreamSpec, cfg: &PretrainConfig) -> Result<(Mlp, PretrainReport)> {
    let (model, report) = pretrain_unchecked(spec, cfg)?;
    if report.holdout_accuracy < cfg.min_accuracy {
        return Err(Error::PretrainNotConverged {
            achieved: report.holdout_accuracy,
            required: cfg.min_accuracy,
        });
    }
    Ok((model, report))
}

/// [`pretrain`] without the accuracy gate.
pub fn pretrain_unchecked(spec: &StreamSpec, cfg: &PretrainConfig) -> Result<(Mlp, PretrainReport)> {
    if cfg.batch_size < 2 || cfg.epochs == 0 {
        return Err(Error::Config("pretraining needs batch_size >= 2 and epochs >= 1".into()));
    }
    let (train, holdout) = source_splits(spec, cfg)?;
    let arch = Architecture::new(spec.feature_dim, cfg.hidden.clone(), spec.n_classes)?;
    let mut model = Mlp::new(arch, cfg.dropout_rate, derive(cfg.seed, &[tag::INIT]))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, &[tag::SHUFFLE, 2]));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut lr = cfg.lr;
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut step = 0u64;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let (x, y) = train.rows(chunk);
            let mode = ForwardMode::train(derive(cfg.seed, &[tag::PASS, step]));
            step += 1;
            let (loss, g) = grad(&model, &x, &[mode], |outs| ce_and_slope(&outs[0], &y))?;
            sgd_step(&mut model, &g, lr, 0.0)?;
            total += loss;
            batches += 1;
        }
        epoch_loss.push(total / batches.max(1) as f64);
        lr *= cfg.lr_decay;
    }
    model.set_population_stats(&train.features)?;
    let report = PretrainReport {
        train_accuracy: accuracy(&model, &train)?,
        holdout_accuracy: accuracy(&model, &holdout)?,
        epoch_loss,
    };
    Ok((model, report))
}

fn ce_and_slope(p: &Array2<f64>, labels: &[usize]) -> (f64, Vec<Array2<f64>>) {
    let n = labels.len() as f64;
    let mut d = Array2::zeros(p.dim());
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let q = p[[i, y]].clamp(PROB_CLIP, 1.0 - PROB_CLIP);
        loss -= q.ln() / n;
        d[[i, y]] = cross_entropy_slope(p[[i, y]], PROB_CLIP) / n;
    }
    (loss, vec![d])
}
