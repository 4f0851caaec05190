use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row per (seed, batch) of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub seed: u64,
    pub method: String,
    pub batch_index: usize,
    pub segment: usize,
    pub n_samples: usize,
    /// Correct predictions made on arrival, before this batch's update.
    pub n_correct: usize,
    /// Accuracy of the arrival predictions.
    pub pre_acc: f64,
    /// Accuracy on the same batch after the update (diagnostic only).
    pub post_acc: f64,
    /// Running accuracy of arrival predictions over the stream so far.
    pub cumulative_acc: f64,
    pub n_bfa: usize,
    pub n_aba: usize,
    pub loss_correct: f64,
    pub loss_incorrect: f64,
    pub loss_agreement: f64,
    pub loss_total: f64,
    pub mean_confidence: f64,
    pub agreement_rate: f64,
    /// Queries answered by the fallback oracle in a live session.
    pub fallback_answers: usize,
}

pub fn write_csv<W: Write>(out: W, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<metrics>", e))?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_csv_file(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(f, rows)
}

pub fn read_csv_file(path: &Path) -> Result<Vec<MetricsRow>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(f)
}

/// Cumulative accuracy recomputed from the per-batch counts of one seed's rows.
pub fn replay_cumulative(rows: &[MetricsRow]) -> Vec<f64> {
    let (mut hits, mut seen) = (0usize, 0usize);
    rows.iter()
        .map(|r| {
            hits += r.n_correct;
            seen += r.n_samples;
            hits as f64 / seen.max(1) as f64
        })
        .collect()
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
