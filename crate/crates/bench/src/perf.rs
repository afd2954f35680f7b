//! Per-token wall time and resident bytes against context length.
//!
//! For each context length `n`, a session is prefilled with `n` tokens, then
//! forked once per run; each fork steps through the same probe tokens and the
//! wall time per probe token is recorded. One warmup run precedes the timed
//! runs and the median is reported. Runs execute serially.

use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use taylorattn::attention::{AttentionSession, MethodParams, MethodRegistry, ReadoutOptions};
use taylorattn::{build_basis_family, Result, TokenTriple};

use crate::recon::Stats;
use crate::rng::TokenStream;

/// Tokens generated and prefilled per block.
const PREFILL_BLOCK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct PerfConfig {
    pub width: usize,
    pub truncation_order: usize,
    pub contexts: Vec<usize>,
    /// Context lengths for the conventional arm; `None` reuses `contexts`.
    pub conventional_contexts: Option<Vec<usize>>,
    pub probe_tokens: usize,
    pub runs: usize,
    pub warmup: usize,
    pub seed: u64,
    /// Method for our arm: `stream` or `scan`.
    pub method: String,
    pub chunk_size: usize,
    pub options: ReadoutOptions,
    /// KV caches larger than this are recorded as capped instead of built.
    pub conventional_byte_cap: usize,
}

impl Default for PerfConfig {
    fn default() -> Self {
        PerfConfig {
            width: 8,
            truncation_order: 4,
            contexts: log_grid(1_000, 1_000_000, 2),
            conventional_contexts: None,
            probe_tokens: 256,
            runs: 5,
            warmup: 1,
            seed: 42,
            method: "stream".into(),
            chunk_size: 64,
            options: ReadoutOptions::default(),
            conventional_byte_cap: 1 << 31,
        }
    }
}

/// `per_decade` log-spaced integers from `lo` to `hi` inclusive, deduplicated.
pub fn log_grid(lo: usize, hi: usize, per_decade: usize) -> Vec<usize> {
    let (a, b) = ((lo as f64).log10(), (hi as f64).log10());
    let steps = ((b - a) * per_decade as f64).round() as usize;
    let mut out: Vec<usize> = (0..=steps)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / steps.max(1) as f64).round() as usize)
        .collect();
    out.dedup();
    out
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct PerfRow {
    pub arm: &'static str,
    pub method: String,
    pub d: usize,
    #[serde(rename = "P")]
    pub order: usize,
    pub n: usize,
    pub probe_tokens: usize,
    pub runs: usize,
    pub status: &'static str,
    pub state_bytes: Option<usize>,
    pub median_ns_per_token: Option<f64>,
    pub min_ns_per_token: Option<f64>,
    pub max_ns_per_token: Option<f64>,
    /// Marks the three timing columns as run-dependent.
    pub timing_nondeterministic: bool,
    pub os: &'static str,
    pub arch: &'static str,
    pub cpus: usize,
    pub detail: String,
}

impl PerfRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

fn prefill(session: &mut dyn AttentionSession, stream: &mut TokenStream, n: usize) -> Result<()> {
    session.reserve(n)?;
    let mut left = n;
    while left > 0 {
        let block = stream.take(left.min(PREFILL_BLOCK));
        session.prefill(&block)?;
        left -= block.len();
    }
    Ok(())
}

fn time_probes(session: &dyn AttentionSession, probes: &[TokenTriple]) -> Result<f64> {
    let mut fork = session.fork();
    fork.reserve(probes.len())?;
    let start = Instant::now();
    for t in probes {
        std::hint::black_box(fork.step(t)?);
    }
    Ok(start.elapsed().as_nanos() as f64 / probes.len() as f64)
}

struct Arm<'a> {
    name: &'static str,
    method: &'a str,
}

fn measure(config: &PerfConfig, registry: &MethodRegistry, params: &MethodParams, arm: &Arm, n: usize) -> PerfRow {
    let d = config.width;
    let mut row = PerfRow {
        arm: arm.name,
        method: arm.method.to_string(),
        d,
        order: config.truncation_order,
        n,
        probe_tokens: config.probe_tokens,
        runs: config.runs,
        status: "ok",
        state_bytes: None,
        median_ns_per_token: None,
        min_ns_per_token: None,
        max_ns_per_token: None,
        timing_nondeterministic: true,
        os: std::env::consts::OS,
        arch: std::env::consts::ARCH,
        cpus: std::thread::available_parallelism().map_or(1, |c| c.get()),
        detail: String::new(),
    };
    if arm.name == "conventional" {
        let bytes = (n + config.probe_tokens).saturating_mul(2 * d + 1).saturating_mul(8);
        if bytes > config.conventional_byte_cap {
            row.status = "capped";
            row.detail = format!("KV cache of {bytes} bytes exceeds cap of {}", config.conventional_byte_cap);
            return row;
        }
    }
    let outcome = (|| -> Result<(usize, Vec<f64>)> {
        let method = registry.create(arm.method, params)?;
        let mut session = method.session(d, d)?;
        let mut stream = TokenStream::new(config.seed, d, d);
        prefill(session.as_mut(), &mut stream, n)?;
        let probes = stream.take(config.probe_tokens);
        for _ in 0..config.warmup {
            time_probes(session.as_ref(), &probes)?;
        }
        let times = (0..config.runs)
            .map(|_| time_probes(session.as_ref(), &probes))
            .collect::<Result<Vec<_>>>()?;
        Ok((session.resident_bytes(), times))
    })();
    match outcome {
        Ok((bytes, times)) => {
            let s = Stats::of(&times).expect("at least one run");
            row.state_bytes = Some(bytes);
            row.median_ns_per_token = Some(s.median);
            row.min_ns_per_token = times.iter().copied().reduce(f64::min);
            row.max_ns_per_token = Some(s.max);
        }
        Err(e) => {
            row.status = if arm.name == "conventional" { "capped" } else { "error" };
            row.detail = e.to_string();
        }
    }
    row
}

/// Timing rows for our arm over `contexts`, then the conventional arm.
pub fn run_perf(config: &PerfConfig) -> Result<Vec<PerfRow>> {
    if config.runs < 1 || config.probe_tokens < 1 || config.contexts.is_empty() {
        return Err(taylorattn::Error::Domain(
            "perf needs at least one run, one probe token and one context length".into(),
        ));
    }
    let registry = MethodRegistry::with_builtin();
    let family = Arc::new(build_basis_family(
        config.width,
        config.truncation_order,
        (config.width as f64).sqrt(),
    )?);
    let params = MethodParams {
        family,
        chunk_size: config.chunk_size,
        options: config.options,
    };
    let ours = Arm {
        name: "ours",
        method: &config.method,
    };
    let conventional = Arm {
        name: "conventional",
        method: "conventional",
    };
    let mut rows: Vec<PerfRow> = config
        .contexts
        .iter()
        .map(|&n| measure(config, &registry, &params, &ours, n))
        .collect();
    let conv_contexts = config.conventional_contexts.as_ref().unwrap_or(&config.contexts);
    rows.extend(
        conv_contexts
            .iter()
            .map(|&n| measure(config, &registry, &params, &conventional, n)),
    );
    Ok(rows)
}

/// Least-squares slope of `log10(median time)` on `log10(n)` over rows of
/// `arm` with `lo ≤ n ≤ hi`.
pub fn loglog_slope(rows: &[PerfRow], arm: &str, lo: usize, hi: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.arm == arm && r.is_ok() && (lo..=hi).contains(&r.n))
        .filter_map(|r| Some(((r.n as f64).log10(), r.median_ns_per_token?.log10())))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Median time at `n` for `arm`.
pub fn median_at(rows: &[PerfRow], arm: &str, n: usize) -> Option<f64> {
    rows.iter()
        .find(|r| r.arm == arm && r.n == n && r.is_ok())
        .and_then(|r| r.median_ns_per_token)
}
