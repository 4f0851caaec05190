//! Live feedback sessions: the adaptation loop driven by a remote annotator.
//!
//! Each batch's queries are sent to the client, which has `deadline_ms` to answer them.
//! Whatever is still unanswered at the deadline is answered by the simulated annotator,
//! so a silent client reproduces a simulated run exactly. A dropped connection leaves the
//! session at the start of the current batch; a new connection picks up from there.

pub mod protocol;
pub mod server;
pub mod transport;

use std::collections::HashMap;
use std::time::{Duration, Instant};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use self::protocol::{ClientMessage, Rendering, ServerMessage, SpecSummary, WireQuery, PROTOCOL_VERSION};
use self::transport::{Incoming, Transport};
use super::config::ExperimentConfig;
use super::metrics::MetricsRow;
use super::run::{RowBuilder, StepOutcome};
use crate::engine::{Adapter, AdapterState, Feedback, FeedbackOracle, SampleId};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::streams::{make_shift_stream, projection_2d, prototypes, SimulatedOracle, StreamBatch};

pub use self::server::{serve, ServeOutcome};
pub use self::transport::{memory_pair, LineTransport, MemoryClient};

/// Everything needed to continue a session elsewhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub adapter: AdapterState,
    pub next_batch: usize,
    pub rows: Vec<MetricsRow>,
    pub paused: bool,
}

/// How a call to [`Session::run`] ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SessionExit {
    Finished,
    /// The client went away; the session waits at this batch.
    Disconnected { next_batch: usize },
}

enum BatchExit {
    Done,
    Disconnected,
}

/// One adaptation run over one seed's stream, answered live.
pub struct Session {
    config: ExperimentConfig,
    seed: u64,
    stream: Vec<StreamBatch>,
    fallback: SimulatedOracle,
    adapter: Adapter,
    builder: RowBuilder,
    rows: Vec<MetricsRow>,
    next_batch: usize,
    paused: bool,
    projection: Array2<f64>,
}

impl Session {
    /// Only the BiTTA family can be served: the baselines have no query loop worth a human.
    pub fn new(model: &Mlp, config: &ExperimentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if config.method.baseline().is_some() {
            return Err(Error::Config(format!(
                "method {} does not query an annotator and cannot be served",
                config.method
            )));
        }
        let adapter = Adapter::new(model.clone(), config.adapt_for(seed))?.with_schedule(config.schedule)?;
        Self::assemble(config.clone(), seed, adapter, Vec::new(), false)
    }

    pub fn restore(snapshot: SessionSnapshot) -> Result<Self> {
        snapshot.config.validate()?;
        if snapshot.rows.len() != snapshot.next_batch {
            return Err(Error::Protocol(format!(
                "snapshot has {} rows for {} batches",
                snapshot.rows.len(),
                snapshot.next_batch
            )));
        }
        let adapter = Adapter::from_state(snapshot.adapter)?;
        Self::assemble(snapshot.config, snapshot.seed, adapter, snapshot.rows, snapshot.paused)
    }

    fn assemble(
        config: ExperimentConfig,
        seed: u64,
        adapter: Adapter,
        rows: Vec<MetricsRow>,
        paused: bool,
    ) -> Result<Self> {
        let stream = make_shift_stream(&config.stream, seed)?;
        if rows.len() > stream.len() {
            return Err(Error::Protocol("snapshot is past the end of the stream".into()));
        }
        let fallback = SimulatedOracle::new(config.oracle_for(seed), &stream)?;
        Ok(Self {
            builder: RowBuilder::resume(seed, config.method, &rows),
            next_batch: rows.len(),
            projection: projection_2d(&config.stream),
            config,
            seed,
            stream,
            fallback,
            adapter,
            rows,
            paused,
        })
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            config: self.config.clone(),
            seed: self.seed,
            adapter: self.adapter.state().clone(),
            next_batch: self.next_batch,
            rows: self.rows.clone(),
            paused: self.paused,
        }
    }

    pub fn next_batch(&self) -> usize {
        self.next_batch
    }

    pub fn n_batches(&self) -> usize {
        self.stream.len()
    }

    pub fn is_finished(&self) -> bool {
        self.next_batch >= self.stream.len()
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn model(&self) -> &Mlp {
        self.adapter.model()
    }

    pub fn rows(&self) -> &[MetricsRow] {
        &self.rows
    }

    pub fn stream(&self) -> &[StreamBatch] {
        &self.stream
    }

    pub fn fallback_answers(&self) -> usize {
        self.rows.iter().map(|r| r.fallback_answers).sum()
    }

    pub fn hello(&self) -> ServerMessage {
        let cfg = &self.config;
        let protos = prototypes(&cfg.stream);
        ServerMessage::SessionHello {
            protocol_version: PROTOCOL_VERSION,
            spec: SpecSummary::new(&cfg.stream, self.stream.len(), cfg.method.name(), cfg.adapt.k, self.seed),
            class_names: cfg.stream.class_names(),
            projection: self.projection.rows().into_iter().map(|r| r.to_vec()).collect(),
            landmarks: protos.rows().into_iter().map(|p| self.project(p.as_slice().expect("row"))).collect(),
            next_batch: self.next_batch,
        }
    }

    fn project(&self, x: &[f64]) -> [f64; 2] {
        let p = &self.projection;
        let dot = |r: usize| p.row(r).iter().zip(x).map(|(a, b)| a * b).sum();
        [dot(0), dot(1)]
    }

    /// Serve batches over `transport` until the stream ends or the client leaves.
    pub fn run(&mut self, transport: &mut dyn Transport) -> Result<SessionExit> {
        transport.send(&self.hello())?;
        if self.paused {
            transport.send(&ServerMessage::Paused {
                next_batch: self.next_batch,
            })?;
        }
        while !self.is_finished() {
            if self.paused && !self.wait_for_resume(transport)? {
                return Ok(SessionExit::Disconnected {
                    next_batch: self.next_batch,
                });
            }
            if let BatchExit::Disconnected = self.serve_batch(transport)? {
                return Ok(SessionExit::Disconnected {
                    next_batch: self.next_batch,
                });
            }
        }
        transport.send(&ServerMessage::SessionEnd {
            batches: self.rows.len(),
            cumulative_acc: self.builder.cumulative(),
            fallback_answers: self.fallback_answers(),
        })?;
        Ok(SessionExit::Finished)
    }

    /// Block until `resume`; `false` if the client left first.
    fn wait_for_resume(&mut self, transport: &mut dyn Transport) -> Result<bool> {
        while self.paused {
            match transport.recv_timeout(Duration::from_secs(3600)) {
                Incoming::Message(ClientMessage::Resume) => {
                    self.paused = false;
                    transport.send(&ServerMessage::Resumed {
                        next_batch: self.next_batch,
                    })?;
                }
                Incoming::Message(ClientMessage::Pause) => {}
                Incoming::Message(ClientMessage::SnapshotRequest) => self.send_snapshot(transport)?,
                Incoming::Message(ClientMessage::Feedback { sample_id, .. }) => transport.send(&ServerMessage::Error {
                    message: "session is paused; no queries are open".into(),
                    sample_id: Some(sample_id),
                })?,
                Incoming::Malformed(e) => transport.send(&ServerMessage::Error {
                    message: e,
                    sample_id: None,
                })?,
                Incoming::Timeout => {}
                Incoming::Closed => return Ok(false),
            }
        }
        Ok(true)
    }

    fn send_snapshot(&self, transport: &mut dyn Transport) -> Result<()> {
        transport.send(&ServerMessage::Snapshot {
            next_batch: self.next_batch,
            snapshot: Box::new(self.snapshot()),
        })
    }

    fn serve_batch(&mut self, transport: &mut dyn Transport) -> Result<BatchExit> {
        let batch = &self.stream[self.next_batch];
        let (arrival, bfa) = self.adapter.plan_queries(batch.view())?;
        let queries: Vec<WireQuery> = bfa
            .iter()
            .map(|&i| {
                let x = batch.feature_row(i);
                WireQuery {
                    sample_id: batch.sample_ids[i].to_string(),
                    rendering: Rendering {
                        coords: self.project(x),
                        glyph: x.to_vec(),
                    },
                    predicted_label: arrival.det_pred[i],
                    confidence: arrival.confidence[i],
                }
            })
            .collect();
        let mut open: HashMap<String, SampleId> = bfa
            .iter()
            .map(|&i| (batch.sample_ids[i].to_string(), batch.sample_ids[i]))
            .collect();
        transport.send(&ServerMessage::QueryBatch {
            batch_index: batch.index,
            queries,
            deadline_ms: self.config.deadline_ms,
        })?;

        let mut answers: HashMap<SampleId, Feedback> = HashMap::new();
        let deadline = Instant::now() + Duration::from_millis(self.config.deadline_ms);
        while !open.is_empty() {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                break;
            }
            match transport.recv_timeout(left) {
                Incoming::Message(ClientMessage::Feedback { sample_id, correct }) => match open.remove(&sample_id) {
                    Some(id) => {
                        answers.insert(id, Feedback::from_correct(correct));
                        transport.send(&ServerMessage::Ack { sample_id })?;
                    }
                    None => transport.send(&ServerMessage::Error {
                        message: format!("sample {sample_id} is not awaiting feedback in batch {}", batch.index),
                        sample_id: Some(sample_id),
                    })?,
                },
                Incoming::Message(ClientMessage::Pause) => self.paused = true,
                Incoming::Message(ClientMessage::Resume) => self.paused = false,
                Incoming::Message(ClientMessage::SnapshotRequest) => self.send_snapshot(transport)?,
                Incoming::Malformed(e) => transport.send(&ServerMessage::Error {
                    message: e,
                    sample_id: None,
                })?,
                Incoming::Timeout => break,
                Incoming::Closed => return Ok(BatchExit::Disconnected),
            }
        }

        let mut oracle = LiveAnswers {
            answers,
            fallback: &mut self.fallback,
            fallback_used: 0,
        };
        let report = self.adapter.adapt_or_skip(batch.view(), &mut oracle)?;
        let fallback_used = oracle.fallback_used;
        let agreement_rate = report.agreement_rate;
        let row = self.builder.row(batch, &StepOutcome::from(report), fallback_used);
        let result = ServerMessage::BatchResult {
            batch_index: batch.index,
            pre_acc: row.pre_acc,
            post_acc: row.post_acc,
            cumulative_acc: row.cumulative_acc,
            agreement_rate,
            fallback_answers: fallback_used,
        };
        self.rows.push(row);
        self.next_batch += 1;
        transport.send(&result)?;
        if self.paused {
            transport.send(&ServerMessage::Paused {
                next_batch: self.next_batch,
            })?;
        }
        Ok(BatchExit::Done)
    }
}

/// Answers collected from the client, completed by the simulated annotator.
struct LiveAnswers<'a> {
    answers: HashMap<SampleId, Feedback>,
    fallback: &'a mut SimulatedOracle,
    fallback_used: usize,
}

impl FeedbackOracle for LiveAnswers<'_> {
    fn query(&mut self, sample_id: SampleId, features: &[f64], predicted_label: usize) -> Result<Feedback> {
        match self.answers.get(&sample_id) {
            Some(&f) => Ok(f),
            None => {
                self.fallback_used += 1;
                self.fallback.query(sample_id, features, predicted_label)
            }
        }
    }
}
