use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method};
use super::metrics::{mean_std, write_csv_file, MetricsRow};
use super::pretrain::pretrain;
use crate::baselines::Baseline;
use crate::engine::{AdaptReport, Adapter, BatchView, FeedbackOracle, LossBreakdown};
use crate::error::{Error, Result};
use crate::nn::{checkpoint, Mlp};
use crate::policy::{estimate_policy, expected_calibration_error};
use crate::seed::{derive, tag};
use crate::streams::{make_shift_stream, SimulatedOracle, StreamBatch};

/// A method with its evolving state, stepping through a stream.
#[derive(Clone, Debug)]
pub enum Runner {
    Adapt(Adapter),
    Baseline(Baseline),
}

/// Method-independent view of one processed batch.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub arrival_pred: Vec<usize>,
    pub post_pred: Vec<usize>,
    pub n_bfa: usize,
    pub n_aba: usize,
    pub loss: LossBreakdown,
    pub mean_confidence: f64,
    pub agreement_rate: f64,
}

impl Runner {
    pub fn new(model: Mlp, cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        Ok(match cfg.method.baseline() {
            Some(kind) => Runner::Baseline(Baseline::new(kind, model, cfg.baseline_for(seed))),
            None => Runner::Adapt(Adapter::new(model, cfg.adapt_for(seed))?.with_schedule(cfg.schedule)?),
        })
    }

    pub fn model(&self) -> &Mlp {
        match self {
            Runner::Adapt(a) => a.model(),
            Runner::Baseline(b) => b.model(),
        }
    }

    pub fn step(&mut self, batch: BatchView<'_>, oracle: &mut dyn FeedbackOracle) -> Result<StepOutcome> {
        match self {
            Runner::Adapt(a) => Ok(a.adapt_or_skip(batch, oracle)?.into()),
            Runner::Baseline(b) => {
                let r = b.step(batch, oracle)?;
                let loss = r
                    .loss
                    .map(|l| LossBreakdown {
                        correct: l.ce,
                        incorrect: l.cce,
                        agreement: 0.0,
                        total: l.total,
                        terms_evaluated: 0,
                    })
                    .unwrap_or_default();
                let n = r.arrival_confidence.len().max(1) as f64;
                Ok(StepOutcome {
                    n_bfa: r.feedback.len(),
                    n_aba: 0,
                    loss,
                    mean_confidence: r.arrival_confidence.iter().sum::<f64>() / n,
                    agreement_rate: 0.0,
                    post_pred: r.post_pred,
                    arrival_pred: r.arrival_pred,
                })
            }
        }
    }
}

impl From<AdaptReport> for StepOutcome {
    fn from(r: AdaptReport) -> Self {
        Self {
            n_bfa: r.n_bfa(),
            n_aba: r.n_aba,
            loss: r.loss,
            mean_confidence: r.mean_confidence(),
            agreement_rate: r.agreement_rate,
            post_pred: r.post_pred,
            arrival_pred: r.arrival.det_pred,
        }
    }
}

/// Accumulates metrics rows from scored outcomes.
#[derive(Clone, Debug)]
pub struct RowBuilder {
    seed: u64,
    method: Method,
    hits: usize,
    seen: usize,
}

impl RowBuilder {
    pub fn new(seed: u64, method: Method) -> Self {
        Self {
            seed,
            method,
            hits: 0,
            seen: 0,
        }
    }

    /// Continue after `rows` that were already emitted.
    pub fn resume(seed: u64, method: Method, rows: &[MetricsRow]) -> Self {
        Self {
            seed,
            method,
            hits: rows.iter().map(|r| r.n_correct).sum(),
            seen: rows.iter().map(|r| r.n_samples).sum(),
        }
    }

    pub fn cumulative(&self) -> f64 {
        self.hits as f64 / self.seen.max(1) as f64
    }

    pub fn row(&mut self, batch: &StreamBatch, out: &StepOutcome, fallback_answers: usize) -> MetricsRow {
        let labels = batch.labels();
        let n_correct = labels.score(&out.arrival_pred).iter().filter(|&&c| c).count();
        self.hits += n_correct;
        self.seen += batch.len();
        MetricsRow {
            seed: self.seed,
            method: self.method.name().into(),
            batch_index: batch.index,
            segment: batch.segment,
            n_samples: batch.len(),
            n_correct,
            pre_acc: n_correct as f64 / batch.len() as f64,
            post_acc: labels.accuracy(&out.post_pred),
            cumulative_acc: self.cumulative(),
            n_bfa: out.n_bfa,
            n_aba: out.n_aba,
            loss_correct: out.loss.correct,
            loss_incorrect: out.loss.incorrect,
            loss_agreement: out.loss.agreement,
            loss_total: out.loss.total,
            mean_confidence: out.mean_confidence,
            agreement_rate: out.agreement_rate,
            fallback_answers,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
    pub final_model: Mlp,
}

impl SeedRun {
    pub fn final_accuracy(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.cumulative_acc)
    }
}

/// Run one seed of an experiment against the simulated annotator.
pub fn run_seed(model: &Mlp, cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let stream = make_shift_stream(&cfg.stream, seed)?;
    let mut oracle = SimulatedOracle::new(cfg.oracle_for(seed), &stream)?;
    run_seed_with(model, cfg, seed, &stream, &mut oracle)
}

/// Run one seed on a prepared stream with any annotator.
pub fn run_seed_with(
    model: &Mlp,
    cfg: &ExperimentConfig,
    seed: u64,
    stream: &[StreamBatch],
    oracle: &mut dyn FeedbackOracle,
) -> Result<SeedRun> {
    let mut runner = Runner::new(model.clone(), cfg, seed)?;
    let mut rows = RowBuilder::new(seed, cfg.method);
    let mut out = Vec::with_capacity(stream.len());
    for batch in stream {
        let step = runner.step(batch.view(), oracle)?;
        out.push(rows.row(batch, &step, 0));
    }
    Ok(SeedRun {
        seed,
        rows: out,
        final_model: match runner {
            Runner::Adapt(a) => a.into_model(),
            Runner::Baseline(b) => b.into_model(),
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub final_accuracy: Option<f64>,
    /// Arrival accuracy per segment.
    pub segment_accuracy: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: Method,
    pub seeds: Vec<SeedSummary>,
    /// Mean and population standard deviation of final cumulative accuracy over successful seeds.
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub segment_mean: Vec<f64>,
    pub segment_std: Vec<f64>,
}

impl RunSummary {
    pub fn failed_seeds(&self) -> impl Iterator<Item = &SeedSummary> {
        self.seeds.iter().filter(|s| s.error.is_some())
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub rows: Vec<MetricsRow>,
    pub runs: Vec<SeedRun>,
    pub directory: Option<PathBuf>,
}

fn segment_accuracy(rows: &[MetricsRow], n_segments: usize) -> Vec<f64> {
    let mut hits = vec![0usize; n_segments];
    let mut seen = vec![0usize; n_segments];
    for r in rows {
        hits[r.segment] += r.n_correct;
        seen[r.segment] += r.n_samples;
    }
    hits.iter()
        .zip(&seen)
        .map(|(&h, &s)| if s == 0 { f64::NAN } else { h as f64 / s as f64 })
        .collect()
}

/// Run every seed (in parallel), aggregate, and write `metrics.csv`, `summary.json` and
/// `config.toml` when an output directory is configured. A failing seed is recorded in the
/// summary and does not stop the others.
pub fn run_experiment(model: &Mlp, cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let results: Vec<(u64, Result<SeedRun>)> = cfg
        .seeds
        .par_iter()
        .map(|&s| (s, run_seed(model, cfg, s)))
        .collect();
    let n_segments = cfg.stream.segments.len();
    let mut seeds = Vec::new();
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(run) => {
                seeds.push(SeedSummary {
                    seed,
                    final_accuracy: Some(run.final_accuracy()),
                    segment_accuracy: segment_accuracy(&run.rows, n_segments),
                    error: None,
                });
                rows.extend(run.rows.iter().cloned());
                runs.push(run);
            }
            Err(e) => seeds.push(SeedSummary {
                seed,
                final_accuracy: None,
                segment_accuracy: Vec::new(),
                error: Some(e.to_string()),
            }),
        }
    }
    let finals: Vec<f64> = seeds.iter().filter_map(|s| s.final_accuracy).collect();
    let (mean_accuracy, std_accuracy) = mean_std(&finals);
    let (segment_mean, segment_std) = (0..n_segments)
        .map(|j| {
            let v: Vec<f64> = runs
                .iter()
                .map(|r| segment_accuracy(&r.rows, n_segments)[j])
                .collect();
            mean_std(&v)
        })
        .unzip();
    let summary = RunSummary {
        method: cfg.method,
        seeds,
        mean_accuracy,
        std_accuracy,
        segment_mean,
        segment_std,
    };
    let directory = match &cfg.output_dir {
        Some(dir) => {
            write_run_dir(dir, cfg, &summary, &rows)?;
            Some(dir.clone())
        }
        None => None,
    };
    Ok(RunOutput {
        summary,
        rows,
        runs,
        directory,
    })
}

fn write_run_dir(dir: &Path, cfg: &ExperimentConfig, summary: &RunSummary, rows: &[MetricsRow]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_csv_file(&dir.join("metrics.csv"), rows)?;
    let path = dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(summary)?).map_err(|e| Error::io(&path, e))?;
    let path = dir.join("config.toml");
    fs::write(&path, cfg.to_toml_string()?).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

/// The configured checkpoint, or a freshly pretrained model.
pub fn load_or_pretrain(cfg: &ExperimentConfig) -> Result<Mlp> {
    match &cfg.checkpoint {
        Some(path) => checkpoint::load(path),
        None => Ok(pretrain(&cfg.stream, &cfg.pretrain)?.0),
    }
}

/// Calibration of the unadapted model on one segment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentCalibration {
    pub segment: usize,
    pub accuracy_det: f64,
    pub accuracy_mc: f64,
    /// ECE of the MC-dropout policy's top-class probability.
    pub ece_mc: f64,
    /// ECE of the plain softmax's top-class probability.
    pub ece_det: f64,
}

/// Per-segment ECE of the MC-dropout and deterministic predictors of a fixed model.
pub fn segment_calibration(
    model: &Mlp,
    stream: &[StreamBatch],
    n_passes: usize,
    seed: u64,
    n_bins: usize,
) -> Result<Vec<SegmentCalibration>> {
    let n_segments = stream.iter().map(|b| b.segment + 1).max().unwrap_or(0);
    let mut conf_mc = vec![Vec::new(); n_segments];
    let mut conf_det = vec![Vec::new(); n_segments];
    let mut ok_mc = vec![Vec::new(); n_segments];
    let mut ok_det = vec![Vec::new(); n_segments];
    for b in stream {
        let est = estimate_policy(model, &b.features, n_passes, derive(seed, &[tag::SELECT, b.index as u64]))?;
        let s = b.segment;
        ok_mc[s].extend(b.labels().score(&est.mc_pred));
        ok_det[s].extend(b.labels().score(&est.det_pred));
        for i in 0..b.len() {
            conf_mc[s].push(est.mc_probs[[i, est.mc_pred[i]]]);
            conf_det[s].push(est.det_probs[[i, est.det_pred[i]]]);
        }
    }
    let acc = |v: &[bool]| v.iter().filter(|&&c| c).count() as f64 / v.len().max(1) as f64;
    (0..n_segments)
        .map(|s| {
            Ok(SegmentCalibration {
                segment: s,
                accuracy_det: acc(&ok_det[s]),
                accuracy_mc: acc(&ok_mc[s]),
                ece_mc: expected_calibration_error(&conf_mc[s], &ok_mc[s], n_bins)?,
                ece_det: expected_calibration_error(&conf_det[s], &ok_det[s], n_bins)?,
            })
        })
        .collect()
}
