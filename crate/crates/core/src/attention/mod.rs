//! Causal self-attention over a fixed-size accumulated state.
//!
//! For each degree `p` the state keeps
//!
//! * `Z_p = Σ_t α_p C_p ⊙ Φ_p(k_t)` (length `m_p`)
//! * `S_p = Σ_t (α_p C_p ⊙ Φ_p(k_t)) v_tᵀ` (`m_p × d_V`)
//!
//! and the output at a query is `Σ_p S_pᵀ Φ_p(q) / Σ_p ⟨Φ_p(q), Z_p⟩`.
//! Weights are folded into the key side at accumulation, so readout is a
//! plain dot product.

mod conventional;
mod registry;
mod scan;
mod state;
mod stream;

pub use conventional::{conventional_attention, KvCache};
pub use registry::{AttentionSession, CausalAttention, MethodFactory, MethodParams, MethodRegistry};
pub use scan::{attend_scan, attend_scan_with, ScanAttention};
pub use state::{init_state, init_state_with_budget, read_output, update_state, AttentionState};
pub use stream::{attend_stream, attend_stream_with, StreamingAttention};

pub(crate) use state::{accumulate_row, readout_row};

use crate::error::{Error, Result};
use crate::scalar::Precision;

/// One token's query, key and value.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenTriple {
    pub query: Vec<f64>,
    pub key: Vec<f64>,
    pub value: Vec<f64>,
}

impl TokenTriple {
    pub fn new(query: Vec<f64>, key: Vec<f64>, value: Vec<f64>) -> Result<Self> {
        if query.len() != key.len() {
            return Err(Error::domain(format!(
                "query width {} differs from key width {}",
                query.len(),
                key.len()
            )));
        }
        Ok(TokenTriple { query, key, value })
    }

    pub fn key_width(&self) -> usize {
        self.key.len()
    }

    pub fn value_width(&self) -> usize {
        self.value.len()
    }
}

/// Checks that every token shares the first token's widths.
pub(crate) fn check_tokens(tokens: &[TokenTriple]) -> Result<(usize, usize)> {
    let first = tokens
        .first()
        .ok_or_else(|| Error::domain("token sequence is empty"))?;
    let (dk, dv) = (first.key_width(), first.value_width());
    for (i, t) in tokens.iter().enumerate() {
        if t.query.len() != dk || t.key.len() != dk || t.value.len() != dv {
            return Err(Error::domain("token widths are inconsistent").at_token(i));
        }
    }
    Ok((dk, dv))
}

/// Result of reading the state at one query.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    pub output: Vec<f64>,
    /// `Z_T`. For the softmax oracle this is the max-shifted normalizer.
    pub denominator: f64,
    /// `S_T`, shifted like the denominator.
    pub numerator: Vec<f64>,
}

/// What to do when the truncated normalizer fails the guard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DenominatorPolicy {
    /// Return [`Error::DegenerateDenominator`].
    #[default]
    Strict,
    /// Fall back to the degree-0 term alone, i.e. the running mean of values.
    FallbackUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReadoutOptions {
    pub precision: Precision,
    pub policy: DenominatorPolicy,
}

/// Guard threshold `1e-12 · (1 + T·α₀)`.
pub fn denominator_guard(token_count: u64, alpha0: f64) -> f64 {
    1e-12 * (1.0 + token_count as f64 * alpha0)
}
