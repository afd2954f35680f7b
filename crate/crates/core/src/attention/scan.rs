use rayon::prelude::*;

use super::{check_tokens, init_state, AttentionOutput, AttentionState, ReadoutOptions, StreamingAttention, TokenTriple};
use crate::basis::BasisFamily;
use crate::error::{Error, Result};

/// Chunks handled per fork-join round; bounds the number of live carry states.
const CHUNKS_PER_ROUND: usize = 64;

/// Chunked scan evaluator.
///
/// Each round:
/// 1. every chunk's own state total is computed independently (in parallel),
/// 2. totals are folded left-to-right into exclusive carry-in states,
/// 3. every chunk replays its tokens from its carry-in, reading per token.
///
/// The fold order is fixed, so outputs are bitwise reproducible for a given
/// chunk size regardless of thread count. With a single chunk the replay is
/// exactly the streaming evaluator.
#[derive(Debug, Clone)]
pub struct ScanAttention<'a> {
    family: &'a BasisFamily,
    chunk_size: usize,
    options: ReadoutOptions,
}

impl<'a> ScanAttention<'a> {
    pub fn new(family: &'a BasisFamily, chunk_size: usize, options: ReadoutOptions) -> Result<Self> {
        if chunk_size == 0 {
            return Err(Error::domain("chunk size must be at least 1"));
        }
        Ok(ScanAttention {
            family,
            chunk_size,
            options,
        })
    }

    fn chunk_total(&self, chunk: &[TokenTriple], value_width: usize) -> Result<AttentionState> {
        let mut state = init_state(self.family, value_width)?;
        let keys: Vec<&[f64]> = chunk.iter().map(|t| t.key.as_slice()).collect();
        let values: Vec<&[f64]> = chunk.iter().map(|t| t.value.as_slice()).collect();
        state.absorb_batch(&keys, &values, self.family, self.options.precision)?;
        Ok(state)
    }

    /// Per-token results; failing reads are reported in place.
    pub fn outputs(&self, tokens: &[TokenTriple]) -> Result<Vec<Result<AttentionOutput>>> {
        let (_, dv) = check_tokens(tokens)?;
        let chunks: Vec<&[TokenTriple]> = tokens.chunks(self.chunk_size).collect();
        let mut carry = init_state(self.family, dv)?;
        let mut results = Vec::with_capacity(tokens.len());

        for (round_idx, round) in chunks.chunks(CHUNKS_PER_ROUND).enumerate() {
            let is_last_round = (round_idx + 1) * CHUNKS_PER_ROUND >= chunks.len();
            // the final chunk's total is never needed as a carry
            let needed = if is_last_round { round.len() - 1 } else { round.len() };
            let totals = round[..needed]
                .par_iter()
                .map(|c| self.chunk_total(c, dv))
                .collect::<Result<Vec<_>>>()?;

            let mut carries = Vec::with_capacity(round.len());
            for total in &totals {
                carries.push(carry.clone());
                carry.combine(total)?;
            }
            if needed < round.len() {
                carries.push(carry.clone());
            }

            let base = round_idx * CHUNKS_PER_ROUND * self.chunk_size;
            let round_out: Vec<Vec<Result<AttentionOutput>>> = round
                .par_iter()
                .zip(carries)
                .enumerate()
                .map(|(c, (chunk, start))| {
                    let offset = base + c * self.chunk_size;
                    let mut stream = StreamingAttention::from_state(self.family, start, self.options);
                    chunk
                        .iter()
                        .enumerate()
                        .map(|(i, t)| stream.push(t).map_err(|e| e.at_token(offset + i)))
                        .collect()
                })
                .collect();
            results.extend(round_out.into_iter().flatten());
        }
        Ok(results)
    }
}

pub fn attend_scan(tokens: &[TokenTriple], family: &BasisFamily, chunk_size: usize) -> Result<Vec<AttentionOutput>> {
    attend_scan_with(tokens, family, chunk_size, ReadoutOptions::default())
}

pub fn attend_scan_with(
    tokens: &[TokenTriple],
    family: &BasisFamily,
    chunk_size: usize,
    options: ReadoutOptions,
) -> Result<Vec<AttentionOutput>> {
    ScanAttention::new(family, chunk_size, options)?
        .outputs(tokens)?
        .into_iter()
        .collect()
}
