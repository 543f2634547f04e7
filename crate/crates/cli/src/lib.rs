//! Benchmark orchestration behind the `graphcast` binary.

pub mod manifest;
pub mod pipeline;

pub use manifest::RunManifest;
pub use pipeline::{
    artifact_stem, benchmark, prepare, product_seed, run_job, write_preprocessed, BenchmarkOutcome, JobResult,
    Prepared,
};
