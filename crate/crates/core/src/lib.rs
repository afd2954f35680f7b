//! Constant-cost causal self-attention.
//!
//! The exponential kernel `exp(q·k / c)` is replaced by its first `P` Taylor
//! terms. Each term `(q·k)^p` is an inner product of packed symmetric
//! monomial features weighted by permutation multiplicities, so attention
//! becomes a sum of `P` linear-attention recurrences whose state size depends
//! only on `(d_K, d_V, P)`.
//!
//! * [`basis`]: monomial index tables and multiplicities per degree
//! * [`featuremap`]: packed features and the weighted inner product
//! * [`kernel`]: exact and truncated kernels
//! * [`attention`]: accumulated state, streaming and chunked-scan evaluators,
//!   the exact softmax oracle and a registry of named methods
//! * [`costmodel`]: exact state-size and FLOP accounting
//! * [`census`]: instrumented operation counts for one token step
//! * [`tokenio`]: binary token stream format

pub mod attention;
pub mod basis;
pub mod census;
pub mod combinatorics;
pub mod costmodel;
pub mod error;
pub mod featuremap;
pub mod kernel;
pub mod scalar;
pub mod tokenio;

pub use attention::{
    attend_scan, attend_stream, conventional_attention, init_state, read_output, update_state, AttentionOutput,
    AttentionState, DenominatorPolicy, MethodRegistry, ReadoutOptions, TokenTriple,
};
pub use basis::{build_basis_family, build_degree_basis, BasisFamily, DegreeBasis, IndexTuple};
pub use error::{Error, Result};
pub use scalar::Precision;
