use super::{check_tokens, init_state, AttentionOutput, AttentionState, ReadoutOptions, TokenTriple};
use crate::basis::BasisFamily;
use crate::error::Result;

/// Token-at-a-time evaluator: absorb the token, then read at its query.
///
/// Holds exactly one [`AttentionState`]; memory does not grow with the
/// number of tokens pushed.
#[derive(Debug, Clone)]
pub struct StreamingAttention<'a> {
    family: &'a BasisFamily,
    state: AttentionState,
    options: ReadoutOptions,
}

impl<'a> StreamingAttention<'a> {
    pub fn new(family: &'a BasisFamily, value_width: usize, options: ReadoutOptions) -> Result<Self> {
        Ok(StreamingAttention {
            family,
            state: init_state(family, value_width)?,
            options,
        })
    }

    pub fn from_state(family: &'a BasisFamily, state: AttentionState, options: ReadoutOptions) -> Self {
        StreamingAttention { family, state, options }
    }

    /// A failed read leaves the token absorbed, so the stream can continue.
    pub fn push(&mut self, token: &TokenTriple) -> Result<AttentionOutput> {
        self.state
            .update(&token.key, &token.value, self.family, self.options.precision)?;
        self.state.read(&token.query, self.family, self.options)
    }

    /// Absorbs tokens without reading.
    pub fn prefill(&mut self, tokens: &[TokenTriple]) -> Result<()> {
        let keys: Vec<&[f64]> = tokens.iter().map(|t| t.key.as_slice()).collect();
        let values: Vec<&[f64]> = tokens.iter().map(|t| t.value.as_slice()).collect();
        self.state
            .absorb_batch(&keys, &values, self.family, self.options.precision)
    }

    pub fn state(&self) -> &AttentionState {
        &self.state
    }

    pub fn into_state(self) -> AttentionState {
        self.state
    }
}

/// Per-token results; a failing token does not stop the sequence.
pub(crate) fn stream_outputs(
    tokens: &[TokenTriple],
    family: &BasisFamily,
    options: ReadoutOptions,
) -> Result<Vec<Result<AttentionOutput>>> {
    let (_, dv) = check_tokens(tokens)?;
    let mut stream = StreamingAttention::new(family, dv, options)?;
    Ok(tokens
        .iter()
        .enumerate()
        .map(|(i, t)| stream.push(t).map_err(|e| e.at_token(i)))
        .collect())
}

/// Causal outputs, one per token, in order.
pub fn attend_stream(tokens: &[TokenTriple], family: &BasisFamily) -> Result<Vec<AttentionOutput>> {
    attend_stream_with(tokens, family, ReadoutOptions::default())
}

pub fn attend_stream_with(
    tokens: &[TokenTriple],
    family: &BasisFamily,
    options: ReadoutOptions,
) -> Result<Vec<AttentionOutput>> {
    stream_outputs(tokens, family, options)?.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_basis_family;
    use crate::error::Error;

    fn tok(q: &[f64], k: &[f64], v: &[f64]) -> TokenTriple {
        TokenTriple::new(q.to_vec(), k.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn single_token() {
        let f = build_basis_family(2, 4, 1.0).unwrap();
        let out = attend_stream(&[tok(&[0.2, 0.9], &[1.0, -0.5], &[7.0])], &f).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out[0].output[0] - 7.0).abs() < 1e-14);
    }

    #[test]
    fn zero_keys_give_running_mean() {
        let f = build_basis_family(2, 4, 1.0).unwrap();
        let toks: Vec<_> = (0..6)
            .map(|i| tok(&[i as f64, 1.0], &[0.0, 0.0], &[i as f64 * 2.0]))
            .collect();
        let out = attend_stream(&toks, &f).unwrap();
        for (t, o) in out.iter().enumerate() {
            let mean = (0..=t).map(|i| i as f64 * 2.0).sum::<f64>() / (t + 1) as f64;
            assert!((o.output[0] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_and_inconsistent_sequences_rejected() {
        let f = build_basis_family(2, 2, 1.0).unwrap();
        assert!(matches!(attend_stream(&[], &f), Err(Error::Domain(_))));
        let toks = [tok(&[1.0, 0.0], &[1.0, 0.0], &[1.0]), tok(&[1.0, 0.0], &[1.0, 0.0], &[1.0, 2.0])];
        match attend_stream(&toks, &f) {
            Err(Error::AtToken { index, .. }) => assert_eq!(index, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn degenerate_read_carries_token_index() {
        let f = build_basis_family(1, 2, 1.0).unwrap();
        let toks = [tok(&[1.0], &[1.0], &[1.0]), tok(&[-1.0], &[1.0], &[2.0])];
        let err = attend_stream(&toks, &f).unwrap_err();
        assert!(matches!(err, Error::AtToken { index: 1, .. }));
        assert!(matches!(err.root(), Error::DegenerateDenominator { .. }));
    }
}
