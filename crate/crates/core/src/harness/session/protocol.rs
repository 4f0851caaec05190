//! Wire protocol of a live feedback session: one JSON object per line, tagged by `type`.
//!
//! Unknown fields are ignored on both sides. Sample ids travel as opaque strings.

use serde::{Deserialize, Serialize};

use super::SessionSnapshot;
use crate::error::{Error, Result};
use crate::streams::StreamSpec;

pub const PROTOCOL_VERSION: u32 = 1;

/// Shape of the stream being served.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecSummary {
    pub n_classes: usize,
    pub feature_dim: usize,
    pub n_segments: usize,
    pub batch_size: usize,
    pub n_batches: usize,
    pub method: String,
    pub k: usize,
    pub seed: u64,
}

impl SpecSummary {
    pub fn new(spec: &StreamSpec, n_batches: usize, method: &str, k: usize, seed: u64) -> Self {
        Self {
            n_classes: spec.n_classes,
            feature_dim: spec.feature_dim,
            n_segments: spec.segments.len(),
            batch_size: spec.effective_batch_size(),
            n_batches,
            method: method.to_string(),
            k,
            seed,
        }
    }
}

/// What the console draws for one sample: a 2-D projection point and the raw feature glyph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rendering {
    pub coords: [f64; 2],
    pub glyph: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireQuery {
    pub sample_id: String,
    pub rendering: Rendering,
    pub predicted_label: usize,
    pub confidence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    SessionHello {
        protocol_version: u32,
        spec: SpecSummary,
        class_names: Vec<String>,
        /// Row-major `2 x feature_dim` projection used for every rendering.
        projection: Vec<Vec<f64>>,
        /// Projected class prototypes.
        landmarks: Vec<[f64; 2]>,
        /// First batch that will be served (non-zero after a restore).
        next_batch: usize,
    },
    QueryBatch {
        batch_index: usize,
        queries: Vec<WireQuery>,
        deadline_ms: u64,
    },
    BatchResult {
        batch_index: usize,
        pre_acc: f64,
        post_acc: f64,
        cumulative_acc: f64,
        agreement_rate: f64,
        fallback_answers: usize,
    },
    Ack {
        sample_id: String,
    },
    Error {
        message: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sample_id: Option<String>,
    },
    Paused {
        next_batch: usize,
    },
    Resumed {
        next_batch: usize,
    },
    Snapshot {
        next_batch: usize,
        snapshot: Box<SessionSnapshot>,
    },
    SessionEnd {
        batches: usize,
        cumulative_acc: f64,
        fallback_answers: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Feedback { sample_id: String, correct: bool },
    Pause,
    Resume,
    SnapshotRequest,
}

pub fn encode<T: Serialize>(msg: &T) -> Result<String> {
    Ok(serde_json::to_string(msg)?)
}

pub fn decode_client(line: &str) -> Result<ClientMessage> {
    serde_json::from_str(line).map_err(|e| Error::Protocol(format!("bad client message: {e}")))
}

pub fn decode_server(line: &str) -> Result<ServerMessage> {
    serde_json::from_str(line).map_err(|e| Error::Protocol(format!("bad server message: {e}")))
}
