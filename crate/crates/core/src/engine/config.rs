use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::PROB_CLIP;
use crate::policy::Selection;

/// Hyperparameters of the adaptation loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptConfig {
    /// Feedback queries per batch.
    pub k: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Weight of the two feedback-memory terms.
    pub alpha: f64,
    /// Weight of the agreement term.
    pub beta: f64,
    /// MC-dropout passes per policy estimate.
    pub n_passes: usize,
    pub dropout_rate: f64,
    pub bn_momentum: f64,
    pub weight_decay: f64,
    pub selection: Selection,
    pub clip_eps: f64,
    pub seed: u64,
    /// Capacity of each feedback memory.
    pub memory_capacity: usize,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            k: 3,
            epochs: 3,
            lr: 1e-3,
            alpha: 2.0,
            beta: 1.0,
            n_passes: 4,
            dropout_rate: 0.3,
            bn_momentum: 0.3,
            weight_decay: 0.0,
            selection: Selection::LeastConfidence,
            clip_eps: PROB_CLIP,
            seed: 0,
            memory_capacity: 64,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.epochs < 1 {
            return bad("epochs must be >= 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be > 0, got {}", self.lr));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return bad(format!("alpha and beta must be >= 0, got {} and {}", self.alpha, self.beta));
        }
        if self.n_passes < 1 {
            return bad("n_passes must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout rate must lie in [0, 1), got {}", self.dropout_rate));
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return bad(format!("BN momentum must lie in [0, 1], got {}", self.bn_momentum));
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight decay must be >= 0".into());
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 0.5) {
            return bad(format!("clip eps must lie in (0, 0.5), got {}", self.clip_eps));
        }
        Ok(())
    }

    /// Feedback-only variant: the agreement term is switched off.
    pub fn bfa_only(&self) -> Self {
        Self {
            beta: 0.0,
            ..self.clone()
        }
    }

    /// Agreement-only variant: no queries and no feedback terms.
    pub fn aba_only(&self) -> Self {
        Self {
            k: 0,
            alpha: 0.0,
            ..self.clone()
        }
    }
}

/// When feedback is requested and when it arrives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeedbackSchedule {
    /// Only every `skip_period`-th batch (starting with the first) is sent for labeling.
    pub skip_period: usize,
    /// Answers reach the memories this many batches after the query.
    pub delay: usize,
}

impl Default for FeedbackSchedule {
    fn default() -> Self {
        Self {
            skip_period: 1,
            delay: 0,
        }
    }
}

impl FeedbackSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.skip_period < 1 {
            return Err(Error::InvalidArgument("skip period must be >= 1".into()));
        }
        Ok(())
    }

    pub fn queries_batch(&self, ordinal: usize) -> bool {
        ordinal % self.skip_period == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        AdaptConfig::default().validate().unwrap();
        FeedbackSchedule::default().validate().unwrap();
    }

    #[test]
    fn rejects_out_of_range() {
        let bad = [
            AdaptConfig { epochs: 0, ..Default::default() },
            AdaptConfig { lr: 0.0, ..Default::default() },
            AdaptConfig { beta: -1.0, ..Default::default() },
            AdaptConfig { clip_eps: 0.5, ..Default::default() },
            AdaptConfig { n_passes: 0, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn skip_schedule() {
        let s = FeedbackSchedule { skip_period: 4, delay: 0 };
        let labeled = (0..10).filter(|&t| s.queries_batch(t)).count();
        assert_eq!(labeled, 3);
    }
}
