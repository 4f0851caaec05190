//! Test-time adaptation of a small classifier from binary feedback.
//!
//! A pretrained MLP meets a stream of shifted test batches. For every batch it queries an
//! annotator about its least confident predictions (correct or incorrect), keeps the answers
//! in two replay memories, and updates itself with a policy-gradient objective over those
//! memories plus the unlabeled samples on which its deterministic and MC-dropout predictions
//! agree.
//!
//! Modules, bottom-up:
//!
//! - [`nn`]: the MLP with batch norm and dropout, analytic gradients, SGD, checkpoints.
//! - [`policy`]: MC-dropout policy, sample selection, calibration error.
//! - [`engine`]: replay memories, the objective, the per-batch adaptation loop.
//! - [`baselines`]: no adaptation, BN-statistics refresh, entropy minimization with feedback.
//! - [`streams`]: synthetic source data, shift streams, simulated annotator, stream dumps.
//! - [`harness`]: pretraining, experiment runs, ablation grids, live feedback sessions.

pub mod baselines;
pub mod engine;
pub mod error;
pub mod harness;
pub mod nn;
pub mod policy;
pub mod seed;
pub mod streams;

pub use error::{Error, Result};
