//! Evaluation harness for `cobigicp`: point-cloud I/O, synthetic scenes,
//! seeded downsampling and perturbation, experiment specs, and CSV reports.

// Range checks are written negated so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiment;
pub mod io;
pub mod report;
pub mod sampling;
pub mod synth;

pub use error::{BenchError, Result};
pub use experiment::{run_sequence, Algorithm, DataSource, Downsampling, ExperimentSpec};
pub use report::{emit_report, PairResult, ReportOptions, Summary};
pub use synth::{make_synthetic_scene, Scene, SceneKind, SceneSpec};
