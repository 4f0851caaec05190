//! The online adaptation engine: feedback memories, the adaptation objective and the
//! per-batch loop.

pub mod adapt;
pub mod config;
pub mod feedback;
pub mod loss;
pub mod memory;
pub mod oracle;

pub use adapt::{adapt_stream, agreement_samples, AdaptReport, Adapter, AdapterState, BatchView};
pub use config::{AdaptConfig, FeedbackSchedule};
pub use feedback::{reward_aba, reward_bfa, Feedback, FeedbackRecord, SampleId};
pub use loss::{bitta_loss, bitta_loss_masked, bitta_loss_value, AgreementSamples, BittaLoss, LossBreakdown, TermMask};
pub use memory::{Memories, ReplayMemory};
pub use oracle::{FeedbackOracle, Query};
