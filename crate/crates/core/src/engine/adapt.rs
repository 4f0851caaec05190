use std::collections::VecDeque;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::config::{AdaptConfig, FeedbackSchedule};
use super::feedback::{reward_aba, Feedback, FeedbackRecord, SampleId};
use super::loss::{bitta_loss_masked, AgreementSamples, LossBreakdown, TermMask};
use super::memory::Memories;
use super::oracle::{FeedbackOracle, Query};
use crate::error::{Error, Result};
use crate::nn::{sgd_step, ForwardMode, Mlp};
use crate::policy::{agreement_set, estimate_policy, select_bfa, PolicyEstimate};
use crate::seed::{derive, tag};

/// A test batch as the engine sees it: ids and features, no labels.
#[derive(Clone, Copy, Debug)]
pub struct BatchView<'a> {
    pub index: usize,
    pub sample_ids: &'a [SampleId],
    pub features: &'a Array2<f64>,
}

impl<'a> BatchView<'a> {
    pub fn new(index: usize, sample_ids: &'a [SampleId], features: &'a Array2<f64>) -> Result<Self> {
        if sample_ids.len() != features.nrows() {
            return Err(Error::Shape(format!(
                "{} sample ids for {} feature rows",
                sample_ids.len(),
                features.nrows()
            )));
        }
        Ok(Self {
            index,
            sample_ids,
            features,
        })
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }
}

/// What happened to one batch.
#[derive(Clone, Debug)]
pub struct AdaptReport {
    pub batch_index: usize,
    /// Policy estimate on arrival, before this batch changed anything.
    pub arrival: PolicyEstimate,
    /// Deterministic predictions after adaptation.
    pub post_pred: Vec<usize>,
    pub bfa_indices: Vec<usize>,
    /// `(batch position, answer)` for every query answered on this batch.
    pub feedback: Vec<(usize, Feedback)>,
    /// Records from earlier batches that reached the memories at the start of this one.
    pub delivered_late: usize,
    /// Agreement-set size in the first epoch.
    pub n_aba: usize,
    /// `n_aba` over the samples not sent for feedback.
    pub agreement_rate: f64,
    pub memory_correct: usize,
    pub memory_incorrect: usize,
    /// Loss terms in the first epoch.
    pub loss: LossBreakdown,
    pub steps: usize,
    /// No memory records and no agreement samples: parameters untouched.
    pub skipped: bool,
    pub bn_refreshed: bool,
    /// Set when the batch was rolled back after an oracle failure.
    pub aborted: Option<String>,
}

impl AdaptReport {
    pub fn arrival_pred(&self) -> &[usize] {
        &self.arrival.det_pred
    }

    pub fn n_bfa(&self) -> usize {
        self.bfa_indices.len()
    }

    /// Sum of `+1/-1` feedback rewards on this batch.
    pub fn feedback_reward(&self) -> f64 {
        self.feedback.iter().map(|(_, f)| f.sign() as f64).sum()
    }

    /// Sum of agreement rewards over the non-queried samples in the first epoch.
    pub fn agreement_reward(&self) -> f64 {
        self.n_aba as f64 * reward_aba(true)
    }

    pub fn mean_confidence(&self) -> f64 {
        let c = &self.arrival.confidence;
        if c.is_empty() {
            0.0
        } else {
            c.iter().sum::<f64>() / c.len() as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Pending {
    due: usize,
    records: Vec<FeedbackRecord>,
}

/// Everything needed to resume adaptation exactly where it stopped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdapterState {
    pub model: Mlp,
    pub config: AdaptConfig,
    pub schedule: FeedbackSchedule,
    pub terms: TermMask,
    pub memories: Memories,
    pending: VecDeque<Pending>,
    pub ordinal: usize,
}

/// Online adaptation loop around a model.
///
/// Per batch: predict and estimate confidence on arrival, query the least confident samples,
/// refresh and freeze the BN statistics, then run `epochs` SGD steps on the memories and
/// the agreement set. A failure anywhere leaves the adapter as it was before the batch.
#[derive(Clone, Debug)]
pub struct Adapter {
    state: AdapterState,
}

impl Adapter {
    pub fn new(mut model: Mlp, config: AdaptConfig) -> Result<Self> {
        config.validate()?;
        model.set_dropout_rate(config.dropout_rate)?;
        Ok(Self {
            state: AdapterState {
                memories: Memories::new(config.memory_capacity),
                model,
                config,
                schedule: FeedbackSchedule::default(),
                terms: TermMask::default(),
                pending: VecDeque::new(),
                ordinal: 0,
            },
        })
    }

    pub fn with_schedule(mut self, schedule: FeedbackSchedule) -> Result<Self> {
        schedule.validate()?;
        self.state.schedule = schedule;
        Ok(self)
    }

    /// Restrict the objective to a subset of its terms.
    pub fn with_terms(mut self, terms: TermMask) -> Self {
        self.state.terms = terms;
        self
    }

    pub fn from_state(state: AdapterState) -> Result<Self> {
        state.config.validate()?;
        state.schedule.validate()?;
        Ok(Self { state })
    }

    pub fn state(&self) -> &AdapterState {
        &self.state
    }

    pub fn model(&self) -> &Mlp {
        &self.state.model
    }

    pub fn into_model(self) -> Mlp {
        self.state.model
    }

    pub fn config(&self) -> &AdaptConfig {
        &self.state.config
    }

    pub fn memories(&self) -> &Memories {
        &self.state.memories
    }

    /// Batches processed so far.
    pub fn ordinal(&self) -> usize {
        self.state.ordinal
    }

    /// Records still waiting for delivery under a delayed schedule.
    pub fn pending_records(&self) -> usize {
        self.state.pending.iter().map(|p| p.records.len()).sum()
    }

    pub fn predict(&self, features: &Array2<f64>) -> Result<Vec<usize>> {
        let p = self.state.model.forward(features, ForwardMode::eval())?;
        Ok(crate::nn::argmax_rows(&p))
    }

    /// Arrival estimate for a batch with the seeds `adapt_batch` would use.
    pub fn estimate(&self, batch: BatchView<'_>) -> Result<PolicyEstimate> {
        let seed = derive(self.batch_seed(batch.index), &[tag::SELECT]);
        estimate_policy(&self.state.model, batch.features, self.state.config.n_passes, seed)
    }

    /// Samples that would be queried for a batch, with their arrival estimate.
    pub fn plan_queries(&self, batch: BatchView<'_>) -> Result<(PolicyEstimate, Vec<usize>)> {
        let est = self.estimate(batch)?;
        let cfg = &self.state.config;
        let bfa = if self.state.terms.feedback && self.state.schedule.queries_batch(self.state.ordinal) {
            let seed = derive(self.batch_seed(batch.index), &[tag::RANDOM_PICK]);
            select_bfa(&est, cfg.k, cfg.selection, seed)
        } else {
            Vec::new()
        };
        Ok((est, bfa))
    }

    /// Report for a batch whose adaptation was rolled back: arrival predictions only.
    pub fn aborted_report(&self, batch: BatchView<'_>, reason: &Error) -> Result<AdaptReport> {
        let arrival = self.estimate(batch)?;
        Ok(AdaptReport {
            batch_index: batch.index,
            post_pred: arrival.det_pred.clone(),
            bfa_indices: Vec::new(),
            feedback: Vec::new(),
            delivered_late: 0,
            n_aba: 0,
            agreement_rate: 0.0,
            memory_correct: self.state.memories.correct.len(),
            memory_incorrect: self.state.memories.incorrect.len(),
            loss: LossBreakdown::default(),
            steps: 0,
            skipped: true,
            bn_refreshed: false,
            aborted: Some(reason.to_string()),
            arrival,
        })
    }

    /// `adapt_batch`, except that an oracle failure becomes an aborted report.
    pub fn adapt_or_skip(&mut self, batch: BatchView<'_>, oracle: &mut dyn FeedbackOracle) -> Result<AdaptReport> {
        match self.adapt_batch(batch, oracle) {
            Err(e @ Error::Oracle(_)) => self.aborted_report(batch, &e),
            r => r,
        }
    }

    fn batch_seed(&self, index: usize) -> u64 {
        derive(self.state.config.seed, &[tag::BATCH, index as u64])
    }

    pub fn adapt_batch(&mut self, batch: BatchView<'_>, oracle: &mut dyn FeedbackOracle) -> Result<AdaptReport> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let dim = self.state.model.architecture().input_dim;
        if batch.features.ncols() != dim {
            return Err(Error::Shape(format!(
                "batch has {} features, model expects {dim}",
                batch.features.ncols()
            )));
        }
        let (arrival, bfa) = self.plan_queries(batch)?;
        let answers = if bfa.is_empty() {
            Vec::new()
        } else {
            let queries: Vec<Query<'_>> = bfa
                .iter()
                .map(|&i| Query {
                    sample_id: batch.sample_ids[i],
                    features: row_slice(batch.features, i),
                    predicted_label: arrival.det_pred[i],
                    confidence: arrival.confidence[i],
                })
                .collect();
            let a = oracle.query_batch(batch.index, &queries)?;
            if a.len() != queries.len() {
                return Err(Error::Oracle(format!(
                    "{} answers for {} queries",
                    a.len(),
                    queries.len()
                )));
            }
            a
        };

        let mut next = self.state.clone();
        let ordinal = next.ordinal;
        let mut delivered_late = 0;
        while next.pending.front().is_some_and(|p| p.due <= ordinal) {
            let p = next.pending.pop_front().expect("checked");
            delivered_late += p.records.len();
            for r in p.records {
                next.memories.insert(r);
            }
        }
        let records: Vec<FeedbackRecord> = bfa
            .iter()
            .zip(&answers)
            .map(|(&i, &feedback)| FeedbackRecord {
                sample_id: batch.sample_ids[i],
                features: row_slice(batch.features, i).to_vec(),
                predicted_label: arrival.det_pred[i],
                feedback,
            })
            .collect();
        if next.schedule.delay == 0 {
            for r in records {
                next.memories.insert(r);
            }
        } else if !records.is_empty() {
            next.pending.push_back(Pending {
                due: ordinal + next.schedule.delay,
                records,
            });
        }

        let cfg = next.config.clone();
        let bn_refreshed = batch.len() >= 2;
        if bn_refreshed {
            next.model.update_bn_stats(batch.features, cfg.bn_momentum)?;
        }

        let rest: Vec<usize> = {
            let mut is_bfa = vec![false; batch.len()];
            for &i in &bfa {
                is_bfa[i] = true;
            }
            (0..batch.len()).filter(|&i| !is_bfa[i]).collect()
        };
        let x_rest = batch.features.select(Axis(0), &rest);
        let batch_seed = self.batch_seed(batch.index);

        let mut first: Option<(LossBreakdown, usize)> = None;
        let mut steps = 0;
        let mut skipped = false;
        for e in 0..cfg.epochs {
            let epoch_seed = derive(batch_seed, &[tag::EPOCH, e as u64]);
            let aba = agreement_samples(&next.model, &x_rest, &cfg, derive(epoch_seed, &[tag::AGREE]))?;
            let n_aba = aba.len();
            let loss = match bitta_loss_masked(
                &next.model,
                &next.memories.correct,
                &next.memories.incorrect,
                &aba,
                &cfg,
                derive(epoch_seed, &[tag::LOSS]),
                next.terms,
            ) {
                Ok(l) => l,
                Err(Error::NoOpBatch) => {
                    skipped = true;
                    first.get_or_insert((LossBreakdown::default(), n_aba));
                    break;
                }
                Err(e) => return Err(e),
            };
            first.get_or_insert((loss.breakdown, n_aba));
            if loss.breakdown.terms_evaluated > 0 {
                sgd_step(&mut next.model, &loss.grad, cfg.lr, cfg.weight_decay)?;
                steps += 1;
            }
        }
        let (loss, n_aba) = first.unwrap_or_default();
        next.ordinal += 1;

        let post_pred = crate::nn::argmax_rows(&next.model.forward(batch.features, ForwardMode::eval())?);
        let report = AdaptReport {
            batch_index: batch.index,
            post_pred,
            feedback: bfa.iter().copied().zip(answers).collect(),
            bfa_indices: bfa,
            delivered_late,
            n_aba,
            agreement_rate: if rest.is_empty() {
                0.0
            } else {
                n_aba as f64 / rest.len() as f64
            },
            memory_correct: next.memories.correct.len(),
            memory_incorrect: next.memories.incorrect.len(),
            loss,
            steps,
            skipped,
            bn_refreshed,
            aborted: None,
            arrival,
        };
        self.state = next;
        Ok(report)
    }
}

fn row_slice(x: &Array2<f64>, i: usize) -> &[f64] {
    let start = i * x.ncols();
    &x.as_slice().expect("row-major batch")[start..start + x.ncols()]
}

/// Non-queried samples whose deterministic and MC-dropout predictions agree, labeled with that class.
pub fn agreement_samples(model: &Mlp, x_rest: &Array2<f64>, cfg: &AdaptConfig, seed: u64) -> Result<AgreementSamples> {
    if x_rest.nrows() == 0 {
        return Ok(AgreementSamples::empty());
    }
    let est = estimate_policy(model, x_rest, cfg.n_passes, seed)?;
    let idx = agreement_set(&est, &[]);
    if idx.is_empty() {
        return Ok(AgreementSamples::empty());
    }
    let labels = idx.iter().map(|&i| est.det_pred[i]).collect();
    Ok(AgreementSamples::new(x_rest.select(Axis(0), &idx), labels))
}

/// Run the adapter over a sequence of batches. Oracle failures roll the batch back and are
/// recorded as aborted reports; any other error stops the stream.
pub fn adapt_stream<'a>(
    adapter: &mut Adapter,
    batches: impl IntoIterator<Item = BatchView<'a>>,
    oracle: &mut dyn FeedbackOracle,
) -> Result<Vec<AdaptReport>> {
    batches
        .into_iter()
        .map(|b| adapter.adapt_or_skip(b, oracle))
        .collect()
}
