//! Three-mass benchmark for joint input-state estimation with latent force models.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bench;
pub mod config;
pub mod error;
pub mod metrics;
pub mod output;
pub mod runner;
pub mod scenario;

pub use bench::{run_bench, BenchOutcome};
pub use config::BenchConfig;
pub use error::{BenchError, Result};
pub use runner::{run_scenario, MetricsReport, RunReport, RunSeeds};
pub use scenario::{build_3dof, synthesize_load, Scenario};
