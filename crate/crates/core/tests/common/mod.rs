#![allow(dead_code)]

use itertools::Itertools;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use taylorattn::TokenTriple;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn normal_vec(rng: &mut ChaCha20Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn normal_tokens(seed: u64, n: usize, dk: usize, dv: usize) -> Vec<TokenTriple> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let q = normal_vec(&mut r, dk);
            let k = normal_vec(&mut r, dk);
            let v = normal_vec(&mut r, dv);
            TokenTriple::new(q, k, v).unwrap()
        })
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// All `d^p` raw index tuples (0-based), independent of the library's enumerator.
pub fn all_raw_tuples(d: usize, p: usize) -> Vec<Vec<usize>> {
    if p == 0 {
        return vec![vec![]];
    }
    (0..p).map(|_| 0..d).multi_cartesian_product().collect()
}

/// Direct partial sum `Σ_{p<P} z^p / (p! c^p)` with `z = q·k`.
pub fn scalar_partial_sum(qk: f64, order: usize, scale: f64) -> f64 {
    let mut fact = 1.0;
    (0..order)
        .map(|p| {
            if p > 0 {
                fact *= p as f64;
            }
            qk.powi(p as i32) / (fact * scale.powi(p as i32))
        })
        .sum()
}

/// Literal causal softmax with no max-subtraction.
pub fn literal_softmax(tokens: &[TokenTriple], scale: f64) -> Vec<Vec<f64>> {
    (0..tokens.len())
        .map(|t| {
            let q = &tokens[t].query;
            let w: Vec<f64> = tokens[..=t].iter().map(|s| (dot(q, &s.key) / scale).exp()).collect();
            let den: f64 = w.iter().sum();
            let dv = tokens[t].value.len();
            (0..dv)
                .map(|j| tokens[..=t].iter().zip(&w).map(|(s, wi)| wi * s.value[j]).sum::<f64>() / den)
                .collect()
        })
        .collect()
}

/// Double-double arithmetic for an extended-precision exponential.
#[derive(Debug, Clone, Copy)]
pub struct Dd(pub f64, pub f64);

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.0, o.0);
        let e = e + self.1 + o.1;
        let (hi, lo) = two_sum(s, e);
        Dd(hi, lo)
    }

    pub fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.0, o.0);
        let e = e + self.0 * o.1 + self.1 * o.0;
        let (hi, lo) = two_sum(p, e);
        Dd(hi, lo)
    }

    pub fn div_f64(self, d: f64) -> Dd {
        let q1 = self.0 / d;
        let r = self.add(Dd(q1, 0.0).mul(Dd(-d, 0.0)));
        let q2 = r.0 / d;
        let (hi, lo) = two_sum(q1, q2);
        Dd(hi, lo)
    }

    pub fn recip(self) -> Dd {
        let y = 1.0 / self.0;
        // one Newton step: y + y (1 - x y)
        let e = Dd(1.0, 0.0).add(self.mul(Dd(-y, 0.0)));
        Dd(y, 0.0).add(Dd(y, 0.0).mul(e))
    }

    pub fn to_f64(self) -> f64 {
        self.0 + self.1
    }
}

/// Compensated dot product.
pub fn dd_dot(a: &[f64], b: &[f64]) -> Dd {
    a.iter().zip(b).fold(Dd(0.0, 0.0), |acc, (&x, &y)| {
        let (p, e) = two_prod(x, y);
        acc.add(Dd(p, e))
    })
}

/// `exp(z)` by direct Taylor summation in double-double, for `|z| ≲ 20`.
pub fn dd_exp(z: Dd) -> f64 {
    let neg = z.0 < 0.0;
    let x = if neg { Dd(-z.0, -z.1) } else { z };
    let mut term = Dd(1.0, 0.0);
    let mut sum = Dd(1.0, 0.0);
    for k in 1..200 {
        term = term.mul(x).div_f64(k as f64);
        sum = sum.add(term);
        if term.0 < 1e-34 * sum.0 {
            break;
        }
    }
    if neg {
        sum.recip().to_f64()
    } else {
        sum.to_f64()
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        ((a - b) / b).abs()
    }
}
