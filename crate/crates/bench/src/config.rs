use std::path::PathBuf;

use taylorattn::attention::{DenominatorPolicy, MethodRegistry, ReadoutOptions};
use taylorattn::Precision;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("{0} must be at least 1")]
    Zero(&'static str),
    #[error("unknown method `{name}` (available: {available})")]
    UnknownMethod { name: String, available: String },
    #[error("{0}")]
    Invalid(String),
}

/// One reconstruction or timing experiment over a grid of head widths and
/// truncation orders. Head widths set `d_K = d_V = d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub head_widths: Vec<usize>,
    pub truncation_orders: Vec<usize>,
    pub context_length: usize,
    pub seed: u64,
    pub precision: Precision,
    pub chunk_size: usize,
    pub method: String,
    pub policy: DenominatorPolicy,
    /// Worker threads for independent cells; 0 uses every core.
    pub jobs: usize,
    pub output_path: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            head_widths: vec![4, 8, 16, 32],
            truncation_orders: vec![1, 2, 3, 4],
            context_length: 2048,
            seed: 42,
            precision: Precision::Double,
            chunk_size: 64,
            method: "stream".into(),
            policy: DenominatorPolicy::Strict,
            jobs: 0,
            output_path: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self, registry: &MethodRegistry) -> Result<(), ConfigError> {
        if self.head_widths.is_empty() {
            return Err(ConfigError::Empty("head widths"));
        }
        if self.truncation_orders.is_empty() {
            return Err(ConfigError::Empty("truncation orders"));
        }
        if self.head_widths.contains(&0) {
            return Err(ConfigError::Zero("head width"));
        }
        if self.truncation_orders.contains(&0) {
            return Err(ConfigError::Zero("truncation order"));
        }
        if self.context_length == 0 {
            return Err(ConfigError::Zero("context length"));
        }
        if self.chunk_size == 0 {
            return Err(ConfigError::Zero("chunk size"));
        }
        if !registry.contains(&self.method) {
            return Err(ConfigError::UnknownMethod {
                name: self.method.clone(),
                available: registry.names().collect::<Vec<_>>().join(", "),
            });
        }
        Ok(())
    }

    pub fn readout(&self) -> ReadoutOptions {
        ReadoutOptions {
            precision: self.precision,
            policy: self.policy,
        }
    }

    /// `(d, P)` cells in grid order.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        self.head_widths
            .iter()
            .flat_map(|&d| self.truncation_orders.iter().map(move |&p| (d, p)))
            .collect()
    }
}

/// A pool for independent experiment cells.
pub fn worker_pool(jobs: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool construction")
}
