use super::{check_tokens, AttentionOutput, TokenTriple};
use crate::error::{Error, Result};

/// Exact causal softmax attention over a materialized key/value history.
///
/// This is the ground-truth oracle and also the conventional arm of the
/// benchmarks. Memory grows by `d_K + d_V` elements per token.
#[derive(Debug, Clone)]
pub struct KvCache {
    key_width: usize,
    value_width: usize,
    scale: f64,
    keys: Vec<f64>,
    values: Vec<f64>,
    logits: Vec<f64>,
}

impl KvCache {
    pub fn new(key_width: usize, value_width: usize, scale: f64) -> Result<Self> {
        if key_width == 0 || value_width == 0 {
            return Err(Error::domain("widths must be at least 1"));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::domain(format!("scale must be positive, got {scale}")));
        }
        Ok(KvCache {
            key_width,
            value_width,
            scale,
            keys: Vec::new(),
            values: Vec::new(),
            logits: Vec::new(),
        })
    }

    /// Fallible reservation so the benchmark can record an out-of-memory
    /// outcome instead of aborting.
    pub fn try_reserve(&mut self, tokens: usize) -> Result<()> {
        let oom = |_| Error::domain(format!("cannot reserve a KV cache for {tokens} tokens"));
        self.keys.try_reserve_exact(tokens * self.key_width).map_err(oom)?;
        self.values.try_reserve_exact(tokens * self.value_width).map_err(oom)?;
        self.logits.try_reserve_exact(tokens).map_err(oom)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.keys.len() / self.key_width
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// `n (d_K + d_V)` cached elements.
    pub fn element_count(&self) -> usize {
        self.keys.len() + self.values.len()
    }

    pub fn resident_bytes(&self) -> usize {
        self.element_count() * std::mem::size_of::<f64>()
    }

    pub fn truncate(&mut self, tokens: usize) {
        self.keys.truncate(tokens * self.key_width);
        self.values.truncate(tokens * self.value_width);
    }

    pub fn push(&mut self, key: &[f64], value: &[f64]) -> Result<()> {
        if key.len() != self.key_width || value.len() != self.value_width {
            return Err(Error::domain("token widths do not match the cache"));
        }
        self.keys.extend_from_slice(key);
        self.values.extend_from_slice(value);
        Ok(())
    }

    /// Softmax-weighted mean of all cached values at `query`, with the
    /// maximum logit subtracted before exponentiation.
    pub fn attend(&mut self, query: &[f64]) -> Result<AttentionOutput> {
        if query.len() != self.key_width {
            return Err(Error::domain("query width does not match the cache"));
        }
        if self.is_empty() {
            return Err(Error::EmptyContext);
        }
        self.logits.clear();
        let mut max = f64::NEG_INFINITY;
        for k in self.keys.chunks_exact(self.key_width) {
            let l = query.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() / self.scale;
            max = max.max(l);
            self.logits.push(l);
        }
        let mut numerator = vec![0.0; self.value_width];
        let mut denominator = 0.0;
        for (l, v) in self.logits.iter().zip(self.values.chunks_exact(self.value_width)) {
            let w = (l - max).exp();
            denominator += w;
            for (n, x) in numerator.iter_mut().zip(v) {
                *n += w * x;
            }
        }
        let output = numerator.iter().map(|n| n / denominator).collect();
        Ok(AttentionOutput {
            output,
            denominator,
            numerator,
        })
    }

    pub fn push_and_attend(&mut self, token: &TokenTriple) -> Result<AttentionOutput> {
        self.push(&token.key, &token.value)?;
        self.attend(&token.query)
    }
}

/// Exact causal softmax attention with temperature `scale`.
pub fn conventional_attention(tokens: &[TokenTriple], scale: f64) -> Result<Vec<AttentionOutput>> {
    let (dk, dv) = check_tokens(tokens)?;
    let mut cache = KvCache::new(dk, dv, scale)?;
    cache.try_reserve(tokens.len())?;
    tokens
        .iter()
        .enumerate()
        .map(|(i, t)| cache.push_and_attend(t).map_err(|e| e.at_token(i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(q: &[f64], k: &[f64], v: &[f64]) -> TokenTriple {
        TokenTriple::new(q.to_vec(), k.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn single_token_returns_value() {
        let out = conventional_attention(&[tok(&[3.0, 1.0], &[2.0, -7.0], &[1.5, -2.0])], 1.0).unwrap();
        assert_eq!(out[0].output, vec![1.5, -2.0]);
    }

    #[test]
    fn orthogonal_query_averages() {
        let toks = [
            tok(&[0.0, 1.0], &[1.0, 0.0], &[2.0]),
            tok(&[0.0, 1.0], &[3.0, 0.0], &[6.0]),
        ];
        let out = conventional_attention(&toks, 2.0).unwrap();
        assert_eq!(out[1].output, vec![4.0]);
    }

    #[test]
    fn stable_under_huge_logits() {
        let toks = [
            tok(&[1000.0], &[1000.0], &[1.0]),
            tok(&[1000.0], &[999.0], &[3.0]),
        ];
        let out = conventional_attention(&toks, 1.0).unwrap();
        assert!(out[1].output[0].is_finite());
        assert!((out[1].output[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cache_accounting_and_errors() {
        let mut c = KvCache::new(3, 2, 1.0).unwrap();
        assert_eq!(c.attend(&[0.0; 3]), Err(Error::EmptyContext));
        c.push(&[1.0; 3], &[1.0; 2]).unwrap();
        c.push(&[1.0; 3], &[1.0; 2]).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.element_count(), 10);
        assert!(c.push(&[1.0; 2], &[1.0; 2]).is_err());
        c.truncate(1);
        assert_eq!(c.len(), 1);
        assert!(KvCache::new(0, 1, 1.0).is_err());
        assert!(conventional_attention(&[], 1.0).is_err());
    }
}
