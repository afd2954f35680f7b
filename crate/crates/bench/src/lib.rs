//! Verification and benchmark harness for `taylorattn`.
//!
//! Every experiment draws its tokens from [`rng::TokenStream`], so a fixed
//! [`ExperimentConfig`] reproduces the same CSV bytes (timing columns aside).

pub mod basis_export;
pub mod config;
pub mod cost;
pub mod csvout;
pub mod perf;
pub mod recon;
pub mod rng;
pub mod selftest;

pub use config::{ConfigError, ExperimentConfig};
pub use recon::{run_error_by_position, run_reconstruction, ErrorSummary};
