//! Synthetic source data, continual covariate-shift test streams and the simulated oracle.

pub mod dump;
pub mod generate;
pub mod oracle;
pub mod spec;

pub use generate::{
    make_shift_stream, make_source_dataset, projection_2d, prototypes, HiddenLabels, LabeledDataset, SegmentTransform,
    StreamBatch,
};
pub use oracle::{oracle_answer, SimulatedOracle};
pub use spec::{Corruption, CorruptionKind, OracleSpec, Ordering, StreamSpec};
