use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque per-sample identifier, unique within a stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampleId(pub u64);

impl std::fmt::Display for SampleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "s{}", self.0)
    }
}

impl std::str::FromStr for SampleId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.strip_prefix('s')
            .and_then(|d| d.parse().ok())
            .map(SampleId)
            .ok_or_else(|| Error::Protocol(format!("malformed sample id {s:?}")))
    }
}

/// Binary judgement of a prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedback {
    Correct,
    Incorrect,
}

impl Feedback {
    pub fn from_correct(correct: bool) -> Self {
        if correct {
            Feedback::Correct
        } else {
            Feedback::Incorrect
        }
    }

    pub fn from_sign(sign: i8) -> Result<Self> {
        match sign {
            1 => Ok(Feedback::Correct),
            -1 => Ok(Feedback::Incorrect),
            other => Err(Error::InvalidArgument(format!("feedback must be +1 or -1, got {other}"))),
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Feedback::Correct => 1,
            Feedback::Incorrect => -1,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Feedback::Correct => Feedback::Incorrect,
            Feedback::Incorrect => Feedback::Correct,
        }
    }
}

/// A queried sample, the label the model predicted for it, and the oracle's verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub sample_id: SampleId,
    pub features: Vec<f64>,
    pub predicted_label: usize,
    pub feedback: Feedback,
}

/// Reward of a queried sample: the feedback sign itself.
pub fn reward_bfa(feedback: i8) -> Result<f64> {
    Feedback::from_sign(feedback).map(|f| f64::from(f.sign()))
}

/// Reward of an unqueried sample: one inside the agreement set, zero outside it.
pub fn reward_aba(in_agreement: bool) -> f64 {
    if in_agreement {
        1.0
    } else {
        0.0
    }
}
