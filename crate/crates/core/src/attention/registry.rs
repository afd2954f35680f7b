//! Named, interchangeable causal-attention evaluators.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::scan::ScanAttention;
use super::stream::stream_outputs;
use super::{check_tokens, AttentionOutput, KvCache, ReadoutOptions, StreamingAttention, TokenTriple};
use crate::basis::BasisFamily;
use crate::error::{Error, Result};

/// Incremental evaluation, one token at a time.
pub trait AttentionSession: Send {
    /// Ingests context tokens without producing outputs.
    fn prefill(&mut self, tokens: &[TokenTriple]) -> Result<()>;
    fn step(&mut self, token: &TokenTriple) -> Result<AttentionOutput>;
    /// Makes room for `tokens` more tokens. Fixed-size sessions ignore it.
    fn reserve(&mut self, _tokens: usize) -> Result<()> {
        Ok(())
    }
    /// Bytes held by accumulators or cache.
    fn resident_bytes(&self) -> usize;
    fn context_len(&self) -> u64;
    /// Independent copy of the current session.
    fn fork(&self) -> Box<dyn AttentionSession + '_>;
}

/// A whole-sequence causal attention method.
pub trait CausalAttention: Send + Sync {
    fn name(&self) -> &str;

    /// Outputs for every prefix. The outer error covers invalid input; inner
    /// errors are per token and do not stop the sequence.
    fn evaluate(&self, tokens: &[TokenTriple]) -> Result<Vec<Result<AttentionOutput>>>;

    fn session(&self, key_width: usize, value_width: usize) -> Result<Box<dyn AttentionSession + '_>>;
}

#[derive(Debug, Clone)]
pub struct MethodParams {
    pub family: Arc<BasisFamily>,
    pub chunk_size: usize,
    pub options: ReadoutOptions,
}

impl MethodParams {
    pub fn new(family: Arc<BasisFamily>) -> Self {
        MethodParams {
            family,
            chunk_size: 64,
            options: ReadoutOptions::default(),
        }
    }
}

pub type MethodFactory = Box<dyn Fn(&MethodParams) -> Result<Box<dyn CausalAttention>> + Send + Sync>;

pub struct MethodRegistry {
    factories: BTreeMap<String, MethodFactory>,
}

impl Default for MethodRegistry {
    fn default() -> Self {
        Self::with_builtin()
    }
}

impl MethodRegistry {
    pub fn empty() -> Self {
        MethodRegistry {
            factories: BTreeMap::new(),
        }
    }

    /// `stream`, `scan` and `conventional`.
    pub fn with_builtin() -> Self {
        let mut r = Self::empty();
        r.register("stream", |p| {
            Ok(Box::new(StreamMethod {
                family: p.family.clone(),
                options: p.options,
            }))
        });
        r.register("scan", |p| {
            if p.chunk_size == 0 {
                return Err(Error::domain("chunk size must be at least 1"));
            }
            Ok(Box::new(ScanMethod {
                family: p.family.clone(),
                chunk_size: p.chunk_size,
                options: p.options,
            }))
        });
        r.register("conventional", |p| {
            Ok(Box::new(ConventionalMethod {
                scale: p.family.scale(),
            }))
        });
        r
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&MethodParams) -> Result<Box<dyn CausalAttention>> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn create(&self, name: &str, params: &MethodParams) -> Result<Box<dyn CausalAttention>> {
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| Error::UnknownMethod(name.to_string()))?;
        factory(params)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }
}

struct StreamMethod {
    family: Arc<BasisFamily>,
    options: ReadoutOptions,
}

struct ScanMethod {
    family: Arc<BasisFamily>,
    chunk_size: usize,
    options: ReadoutOptions,
}

struct ConventionalMethod {
    scale: f64,
}

impl<'a> AttentionSession for StreamingAttention<'a> {
    fn prefill(&mut self, tokens: &[TokenTriple]) -> Result<()> {
        StreamingAttention::prefill(self, tokens)
    }

    fn step(&mut self, token: &TokenTriple) -> Result<AttentionOutput> {
        self.push(token)
    }

    fn resident_bytes(&self) -> usize {
        self.state().resident_bytes()
    }

    fn context_len(&self) -> u64 {
        self.state().token_count()
    }

    fn fork(&self) -> Box<dyn AttentionSession + '_> {
        Box::new(self.clone())
    }
}

impl AttentionSession for KvCache {
    fn prefill(&mut self, tokens: &[TokenTriple]) -> Result<()> {
        self.try_reserve(tokens.len())?;
        tokens.iter().try_for_each(|t| self.push(&t.key, &t.value))
    }

    fn step(&mut self, token: &TokenTriple) -> Result<AttentionOutput> {
        self.push_and_attend(token)
    }

    fn reserve(&mut self, tokens: usize) -> Result<()> {
        self.try_reserve(tokens)
    }

    fn resident_bytes(&self) -> usize {
        KvCache::resident_bytes(self)
    }

    fn context_len(&self) -> u64 {
        self.len() as u64
    }

    fn fork(&self) -> Box<dyn AttentionSession + '_> {
        Box::new(self.clone())
    }
}

impl CausalAttention for StreamMethod {
    fn name(&self) -> &str {
        "stream"
    }

    fn evaluate(&self, tokens: &[TokenTriple]) -> Result<Vec<Result<AttentionOutput>>> {
        stream_outputs(tokens, &self.family, self.options)
    }

    fn session(&self, key_width: usize, value_width: usize) -> Result<Box<dyn AttentionSession + '_>> {
        if key_width != self.family.key_width() {
            return Err(Error::domain("key width does not match the basis family"));
        }
        Ok(Box::new(StreamingAttention::new(&self.family, value_width, self.options)?))
    }
}

impl CausalAttention for ScanMethod {
    fn name(&self) -> &str {
        "scan"
    }

    fn evaluate(&self, tokens: &[TokenTriple]) -> Result<Vec<Result<AttentionOutput>>> {
        ScanAttention::new(&self.family, self.chunk_size, self.options)?.outputs(tokens)
    }

    /// Token-at-a-time use of a scan is the streaming recurrence.
    fn session(&self, key_width: usize, value_width: usize) -> Result<Box<dyn AttentionSession + '_>> {
        if key_width != self.family.key_width() {
            return Err(Error::domain("key width does not match the basis family"));
        }
        Ok(Box::new(StreamingAttention::new(&self.family, value_width, self.options)?))
    }
}

impl CausalAttention for ConventionalMethod {
    fn name(&self) -> &str {
        "conventional"
    }

    fn evaluate(&self, tokens: &[TokenTriple]) -> Result<Vec<Result<AttentionOutput>>> {
        let (dk, dv) = check_tokens(tokens)?;
        let mut cache = KvCache::new(dk, dv, self.scale)?;
        cache.try_reserve(tokens.len())?;
        Ok(tokens
            .iter()
            .enumerate()
            .map(|(i, t)| cache.push_and_attend(t).map_err(|e| e.at_token(i)))
            .collect())
    }

    fn session(&self, key_width: usize, value_width: usize) -> Result<Box<dyn AttentionSession + '_>> {
        Ok(Box::new(KvCache::new(key_width, value_width, self.scale)?))
    }
}
