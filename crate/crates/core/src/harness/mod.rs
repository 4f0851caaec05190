//! Experiment plumbing: pretraining, runs over seeds, ablation grids, metrics files and the
//! live feedback session.

pub mod config;
pub mod grid;
pub mod metrics;
pub mod pretrain;
pub mod run;
pub mod session;

pub use config::{output_root, ExperimentConfig, Method, PretrainConfig, OUT_ENV};
pub use grid::{ablation_grid, GridAxis, GridCell, GridResult};
pub use metrics::{mean_std, read_csv_file, replay_cumulative, write_csv_file, MetricsRow};
pub use pretrain::{accuracy, pretrain, pretrain_unchecked, source_splits, PretrainReport};
pub use run::{
    load_or_pretrain, run_experiment, run_seed, run_seed_with, segment_calibration, RowBuilder, RunOutput,
    RunSummary, Runner, SeedRun, SeedSummary, SegmentCalibration, StepOutcome,
};
pub use session::{memory_pair, serve, LineTransport, MemoryClient, ServeOutcome, Session, SessionExit, SessionSnapshot};
