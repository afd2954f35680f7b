//! Desk-scale invariant checks with fixed seeds.
//!
//! Each check computes its reference values independently of the library
//! path it checks and returns a [`CheckOutcome`] rather than panicking.

use std::fmt;
use std::time::{Duration, Instant};

use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use taylorattn::attention::{attend_scan, attend_stream, init_state, AttentionState};
use taylorattn::basis::build_degree_basis;
use taylorattn::costmodel::{
    conventional_costs, flops_per_token_degree, flops_per_token_total, hidden_state_size_degree,
    hidden_state_size_total, CostReport,
};
use taylorattn::featuremap::{phi, weighted_inner};
use taylorattn::kernel::TruncatedKernel;
use taylorattn::{build_basis_family, BasisFamily, DegreeBasis, Precision};

use crate::rng::{sample_tokens, TokenStream};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} ({:.1} s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

fn timed(name: &'static str, f: impl FnOnce() -> Result<String, String>) -> CheckOutcome {
    let start = Instant::now();
    let r = f();
    let elapsed = start.elapsed();
    match r {
        Ok(detail) => CheckOutcome {
            name,
            passed: true,
            detail,
            elapsed,
        },
        Err(detail) => CheckOutcome {
            name,
            passed: false,
            detail,
            elapsed,
        },
    }
}

/// `C(n, k)` from Pascal's rule.
fn pascal(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k as usize;
    let mut row = vec![0u128; k + 1];
    row[0] = 1;
    for _ in 0..n {
        for j in (1..=k).rev() {
            row[j] += row[j - 1];
        }
    }
    row[k]
}

fn normals(rng: &mut ChaCha20Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Dot product with error-free products and compensated summation, accurate
/// to about one rounding of the exact value.
fn dot2(a: &[f64], b: &[f64]) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let h = x * y;
        let l = x.mul_add(*y, -h);
        let t = s + h;
        let e = if s.abs() >= h.abs() { (s - t) + h } else { (h - t) + s };
        s = t;
        c += e + l;
    }
    s + c
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Structural checks on already built bases; the error names the first
/// violated invariant.
pub fn check_basis_tables(bases: impl IntoIterator<Item = DegreeBasis>) -> Result<usize, String> {
    let mut checked = 0;
    for b in bases {
        let (d, p) = (b.key_width() as u64, b.degree() as u64);
        b.validate().map_err(|v| format!("d_K={d} p={p}: {v}"))?;
        let want_rows = pascal(d + p - 1, p);
        if b.basis_size() as u128 != want_rows {
            return Err(format!("d_K={d} p={p}: basis_size {} != {want_rows}", b.basis_size()));
        }
        let total: u128 = b.multiplicities().iter().map(|&m| m as u128).sum();
        if total != (d as u128).pow(p as u32) {
            return Err(format!("d_K={d} p={p}: multiplicity_sum {total} != {d}^{p}"));
        }
        checked += 1;
    }
    Ok(checked)
}

/// Row counts and multiplicity sums for `d_K ∈ 1..=8`, `p ∈ 0..=5`.
pub fn check_basis() -> CheckOutcome {
    timed("basis", || {
        let bases = (1..=8usize)
            .flat_map(|d| (0..=5usize).map(move |p| (d, p)))
            .map(|(d, p)| build_degree_basis(d, p).map_err(|e| format!("d_K={d} p={p}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        let n = check_basis_tables(bases)?;
        Ok(format!("{n} bases match C(d_K+p-1, p) rows and d_K^p total multiplicity"))
    })
}

/// `⟨Φ_p(q), Φ_p(k)⟩_C = (q·k)^p` for standard-normal pairs over the basis
/// grid. The error is taken relative to `max(|q·k|^p, (Σ|q_i k_i|)^p)`, so
/// pairs whose dot product cancels are held to rounding of the terms rather
/// than of the result; such pairs are counted in the detail.
pub fn check_polynomial_identity(seed: u64, pairs: usize, tol: f64) -> CheckOutcome {
    timed("polynomial identity", || {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (mut worst, mut worst_plain, mut cancelling) = (0.0f64, 0.0f64, 0usize);
        for d in 1..=8usize {
            for p in 0..=5usize {
                let b = build_degree_basis(d, p).map_err(|e| e.to_string())?;
                for _ in 0..pairs {
                    let q = normals(&mut rng, d);
                    let k = normals(&mut rng, d);
                    let fq = phi(&q, &b).map_err(|e| e.to_string())?;
                    let fk = phi(&k, &b).map_err(|e| e.to_string())?;
                    let got = weighted_inner(&fq, &fk, &b).map_err(|e| e.to_string())?;
                    let want = dot2(&q, &k).powi(p as i32);
                    let magnitude = q.iter().zip(&k).map(|(a, b)| (a * b).abs()).sum::<f64>().powi(p as i32);
                    let err = (got - want).abs();
                    let plain = err / want.abs();
                    let scaled = err / want.abs().max(magnitude);
                    worst = worst.max(scaled);
                    worst_plain = worst_plain.max(plain);
                    if plain > tol {
                        cancelling += 1;
                    }
                    if !(scaled <= tol) {
                        return Err(format!("d={d} p={p}: {got} vs {want}, relative error {scaled:e}"));
                    }
                }
            }
        }
        Ok(format!(
            "{} pairs, worst relative error {worst:.2e}; plain relative error worst {worst_plain:.2e}, above tolerance on {cancelling} cancelling pairs",
            48 * pairs
        ))
    })
}

/// Feature-map evaluation of the truncated kernel against the scalar series
/// `Σ_{p<P} (q·k)^p / (p! c^p)` for `P ≤ 6`, relative tolerance `tol`.
pub fn check_kernel_paths(seed: u64, pairs: usize, tol: f64) -> CheckOutcome {
    timed("kernel paths", || {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        let mut count = 0;
        for d in 1..=8usize {
            let c = (d as f64).sqrt();
            for order in 1..=6usize {
                let family = build_basis_family(d, order, c).map_err(|e| e.to_string())?;
                let kern = TruncatedKernel::new(&family);
                for _ in 0..pairs {
                    let q = normals(&mut rng, d);
                    let k = normals(&mut rng, d);
                    let got = kern.eval(&q, &k).map_err(|e| e.to_string())?;
                    let qk = dot(&q, &k);
                    let mut term = 1.0;
                    let mut want = 1.0;
                    for p in 1..order {
                        term *= qk / (p as f64 * c);
                        want += term;
                    }
                    let rel = (got - want).abs() / want.abs();
                    worst = worst.max(rel);
                    count += 1;
                    if !(rel <= tol) {
                        return Err(format!("d={d} P={order}: {got} vs {want}, relative error {rel:e}"));
                    }
                }
            }
        }
        Ok(format!("{count} pairs, worst relative error {worst:.2e}"))
    })
}

fn max_deviation(a: &[taylorattn::attention::AttentionOutput], b: &[taylorattn::attention::AttentionOutput]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.output.iter().zip(&y.output).map(|(u, v)| (u - v).abs()))
        .fold(0.0, f64::max)
}

/// Chunked scan against the streaming recurrence at width `d`, order `P`.
pub fn check_scan_stream(seed: u64, n: usize, d: usize, order: usize, chunks: &[usize], tol: f64) -> CheckOutcome {
    timed("scan/stream equivalence", || {
        let family = build_basis_family(d, order, (d as f64).sqrt()).map_err(|e| e.to_string())?;
        let tokens = sample_tokens(seed, n, d);
        let stream = attend_stream(&tokens, &family).map_err(|e| e.to_string())?;
        let mut parts = Vec::new();
        for &chunk in chunks {
            let scan = attend_scan(&tokens, &family, chunk).map_err(|e| e.to_string())?;
            let dev = max_deviation(&stream, &scan);
            if !(dev <= tol) {
                return Err(format!("chunk {chunk}: max deviation {dev:e}"));
            }
            parts.push(format!("chunk {chunk}: {dev:.1e}"));
        }
        let whole = attend_scan(&tokens, &family, n).map_err(|e| e.to_string())?;
        let same_bits = whole.iter().zip(&stream).all(|(a, b)| {
            a.output.iter().map(|x| x.to_bits()).eq(b.output.iter().map(|x| x.to_bits()))
                && a.denominator.to_bits() == b.denominator.to_bits()
        });
        if !same_bits {
            return Err(format!("chunk {n}: not bitwise identical to the stream"));
        }
        parts.push(format!("chunk {n}: bitwise identical"));
        Ok(format!("n={n} d={d} P={order}; {}", parts.join(", ")))
    })
}

fn absorb(state: &mut AttentionState, family: &BasisFamily, stream: &mut TokenStream, mut count: usize) -> Result<(), String> {
    const BLOCK: usize = 4096;
    while count > 0 {
        let block = stream.take(count.min(BLOCK));
        let keys: Vec<&[f64]> = block.iter().map(|t| t.key.as_slice()).collect();
        let values: Vec<&[f64]> = block.iter().map(|t| t.value.as_slice()).collect();
        state
            .absorb_batch(&keys, &values, family, Precision::Double)
            .map_err(|e| e.to_string())?;
        count -= block.len();
    }
    Ok(())
}

/// Accumulator element count after `early` and `late` updates, against
/// `(d_V + 1)·C(d_K + P − 1, P − 1)`, for each `(d_K, d_V, P)`.
pub fn check_constant_state(seed: u64, configs: &[(usize, usize, usize)], early: usize, late: usize) -> CheckOutcome {
    timed("constant state", || {
        let mut parts = Vec::new();
        for &(dk, dv, order) in configs {
            let family = build_basis_family(dk, order, (dk as f64).sqrt()).map_err(|e| e.to_string())?;
            let mut state = init_state(&family, dv).map_err(|e| e.to_string())?;
            let mut stream = TokenStream::new(seed, dk, dv);
            absorb(&mut state, &family, &mut stream, early)?;
            let at_early = state.element_count();
            absorb(&mut state, &family, &mut stream, late - early)?;
            let at_late = state.element_count();
            let want = (dv as u128 + 1) * pascal((dk + order - 1) as u64, (order - 1) as u64);
            if state.token_count() != late as u64 {
                return Err(format!("({dk},{dv},{order}): absorbed {} tokens, expected {late}", state.token_count()));
            }
            if at_early != at_late || at_late as u128 != want {
                return Err(format!(
                    "({dk},{dv},{order}): {at_early} elements after {early}, {at_late} after {late}, expected {want}"
                ));
            }
            parts.push(format!("({dk},{dv},{order}): {want} elements"));
        }
        Ok(format!("after {early} and {late} updates; {}", parts.join(", ")))
    })
}

/// Closed forms against per-degree sums and reference values.
pub fn check_cost_model() -> CheckOutcome {
    timed("cost model", || {
        let e = |e: taylorattn::Error| e.to_string();
        let mut configs = 0;
        for d in [16u64, 32, 64, 128] {
            for order in 1..=6u64 {
                let mut hs = 0u128;
                let mut fl = 0u128;
                for p in 0..order {
                    let rows = pascal(d + p - 1, p);
                    let want_hs = (d as u128 + 1) * rows;
                    let want_fl = (4 * d as u128 + 2 * p as u128 + 4) * rows;
                    if hidden_state_size_degree(d, d, p).map_err(e)? != want_hs
                        || flops_per_token_degree(d, d, p).map_err(e)? != want_fl
                    {
                        return Err(format!("d={d} p={p}: per-degree value differs from its formula"));
                    }
                    hs += want_hs;
                    fl += want_fl;
                }
                let closed_hs = hidden_state_size_total(d, d, order).map_err(e)?;
                let closed_fl = flops_per_token_total(d, d, order).map_err(e)?;
                if closed_hs != hs || closed_fl != Ratio::from_integer(fl) {
                    return Err(format!(
                        "d={d} P={order}: closed forms ({closed_hs}, {closed_fl}) vs per-degree sums ({hs}, {fl})"
                    ));
                }
                let report = CostReport::evaluate(d, d, order, 1, 1).map_err(e)?;
                let disagreements = report.cross_check().map_err(e)?;
                if !disagreements.is_empty() {
                    return Err(format!("d={d} P={order}: {disagreements:?}"));
                }
                configs += 1;
            }
        }
        let spot = flops_per_token_total(64, 64, 4).map_err(e)?;
        if spot != Ratio::from_integer(12_738_308) {
            return Err(format!("flops_per_token_total(64, 64, 4) = {spot}"));
        }
        let conv = conventional_costs(1, 64, 64).map_err(e)?;
        if (conv.kv_cache_elements, conv.flops_per_token) != (128, 259) {
            return Err(format!("conventional_costs(1, 64, 64) = {conv:?}"));
        }
        Ok(format!(
            "{configs} configurations agree exactly; flops(64,64,4) = 12738308; conventional(1,64,64) = (128, 259)"
        ))
    })
}

/// Runs every check in order with the given seed.
pub fn selftest(seed: u64) -> Vec<CheckOutcome> {
    vec![
        check_basis(),
        check_polynomial_identity(seed, 100, 1e-10),
        check_kernel_paths(seed, 100, 1e-12),
        check_scan_stream(seed, 10_000, 8, 4, &[1, 7, 64, 1024], 1e-10),
        check_constant_state(seed, &[(8, 8, 4), (64, 64, 4)], 1_000, 1_000_000),
        check_cost_model(),
    ]
}
