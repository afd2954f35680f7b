//! Seeded token generation.
//!
//! ChaCha20 with 20 rounds (`rand_chacha::ChaCha20Rng`), seeded through
//! `seed_from_u64`, with the head width as the ChaCha stream id. Normals use
//! the ziggurat sampler of `rand_distr::StandardNormal`. Each token draws
//! query, key, then value, each in coordinate order.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use taylorattn::TokenTriple;

/// Generator for the tokens of one head width. Independent of the truncation
/// order, so every `P` in a cell sees the same sequence.
#[derive(Debug, Clone)]
pub struct TokenStream {
    rng: ChaCha20Rng,
    key_width: usize,
    value_width: usize,
}

impl TokenStream {
    pub fn new(seed: u64, key_width: usize, value_width: usize) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(((key_width as u64) << 32) | value_width as u64);
        TokenStream {
            rng,
            key_width,
            value_width,
        }
    }

    fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(&mut self.rng)).collect()
    }

    pub fn next_token(&mut self) -> TokenTriple {
        let q = self.normals(self.key_width);
        let k = self.normals(self.key_width);
        let v = self.normals(self.value_width);
        TokenTriple::new(q, k, v).expect("widths are at least 1")
    }

    pub fn take(&mut self, n: usize) -> Vec<TokenTriple> {
        (0..n).map(|_| self.next_token()).collect()
    }
}

/// `n` tokens of width `d` for `(seed, d)`.
pub fn sample_tokens(seed: u64, n: usize, d: usize) -> Vec<TokenTriple> {
    TokenStream::new(seed, d, d).take(n)
}
