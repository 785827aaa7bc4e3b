//! Problem ingestion, synthetic problem generation and benchmark
//! orchestration on top of `npcg-core`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod features;
pub mod io;
pub mod record;
pub mod runner;
pub mod spec;

pub use record::{BenchRecord, BenchSummary, Status};
pub use runner::{build_problem, run_benchmark, run_trial, BenchReport, Problem};
pub use spec::ProblemSpec;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Io(#[from] io::IoError),
    #[error(transparent)]
    Core(#[from] npcg_core::Error),
    #[error("invalid problem spec: {0}")]
    Spec(String),
}
