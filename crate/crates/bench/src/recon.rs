//! Reconstruction error against the exact softmax oracle.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use taylorattn::attention::{conventional_attention, AttentionOutput, MethodParams, MethodRegistry};
use taylorattn::{build_basis_family, Result, TokenTriple};

use crate::config::{worker_pool, ExperimentConfig};
use crate::rng::sample_tokens;

/// Floor applied to `log10` of an exactly zero difference.
pub const LOG10_FLOOR: f64 = -16.0;

pub fn log10_err(a: f64, b: f64) -> f64 {
    (a - b).abs().log10().max(LOG10_FLOOR)
}

/// Median, mean and max of a sample; `None` when empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub median: f64,
    pub mean: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        Some(Stats {
            median,
            mean: v.iter().sum::<f64>() / n as f64,
            max: v[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub d: usize,
    pub order: usize,
    pub measured_tokens: usize,
    pub flagged_tokens: usize,
    /// Over `log10 |ours − oracle|` of every output element.
    pub log10: Option<Stats>,
    pub median_abs_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlaggedToken {
    pub d: usize,
    pub order: usize,
    /// 0-based token index.
    pub token: usize,
    pub detail: String,
}

/// Positions `start..=end`, 1-based, with bucket bounds at powers of two.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionBucket {
    pub d: usize,
    pub order: usize,
    pub start: usize,
    pub end: usize,
    pub measured_tokens: usize,
    pub flagged_tokens: usize,
    pub log10: Option<Stats>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorSummary {
    pub n: usize,
    pub seed: u64,
    pub precision: String,
    pub method: String,
    pub cells: Vec<CellSummary>,
    pub flagged: Vec<FlaggedToken>,
    pub positions: Vec<PositionBucket>,
}

impl ErrorSummary {
    pub fn cell(&self, d: usize, order: usize) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.d == d && c.order == order)
    }
}

/// Bucket index of a 1-based position: `floor(log2(pos))`.
fn bucket_of(pos: usize) -> u32 {
    usize::BITS - 1 - pos.leading_zeros()
}

struct CellResult {
    cell: CellSummary,
    flagged: Vec<FlaggedToken>,
    positions: Vec<PositionBucket>,
}

fn measure_cell(
    d: usize,
    order: usize,
    tokens: &[TokenTriple],
    oracle: &[AttentionOutput],
    config: &ExperimentConfig,
    registry: &MethodRegistry,
) -> Result<CellResult> {
    let scale = (d as f64).sqrt();
    let family = Arc::new(build_basis_family(d, order, scale)?);
    let params = MethodParams {
        family,
        chunk_size: config.chunk_size,
        options: config.readout(),
    };
    let method = registry.create(&config.method, &params)?;
    let outputs = method.evaluate(tokens)?;

    let mut flagged = Vec::new();
    let mut all_log = Vec::new();
    let mut all_abs = Vec::new();
    let mut by_bucket: BTreeMap<u32, (Vec<f64>, usize, usize)> = BTreeMap::new();
    for (t, (out, exact)) in outputs.iter().zip(oracle).enumerate() {
        let bucket = by_bucket.entry(bucket_of(t + 1)).or_default();
        let out = match out {
            Ok(o) if o.output.iter().all(|x| x.is_finite()) => o,
            Ok(_) => {
                flagged.push(FlaggedToken {
                    d,
                    order,
                    token: t,
                    detail: "non-finite output".into(),
                });
                bucket.2 += 1;
                continue;
            }
            Err(e) => {
                flagged.push(FlaggedToken {
                    d,
                    order,
                    token: t,
                    detail: e.root().to_string(),
                });
                bucket.2 += 1;
                continue;
            }
        };
        bucket.1 += 1;
        for (&x, &y) in out.output.iter().zip(&exact.output) {
            let l = log10_err(x, y);
            all_log.push(l);
            all_abs.push((x - y).abs());
            bucket.0.push(l);
        }
    }
    let n = tokens.len();
    let positions = by_bucket
        .into_iter()
        .map(|(b, (logs, measured, flagged))| PositionBucket {
            d,
            order,
            start: 1 << b,
            end: ((1usize << (b + 1)) - 1).min(n),
            measured_tokens: measured,
            flagged_tokens: flagged,
            log10: Stats::of(&logs),
        })
        .collect();
    Ok(CellResult {
        cell: CellSummary {
            d,
            order,
            measured_tokens: n - flagged.len(),
            flagged_tokens: flagged.len(),
            log10: Stats::of(&all_log),
            median_abs_err: Stats::of(&all_abs).map(|s| s.median),
        },
        flagged,
        positions,
    })
}

fn summarize(config: &ExperimentConfig, supplied: Option<&[TokenTriple]>) -> Result<ErrorSummary> {
    let registry = MethodRegistry::with_builtin();
    let pool = worker_pool(config.jobs);
    pool.install(|| {
        let oracles: Vec<(usize, Vec<TokenTriple>, Vec<AttentionOutput>)> = config
            .head_widths
            .par_iter()
            .map(|&d| {
                let tokens = match supplied {
                    Some(t) => t.to_vec(),
                    None => sample_tokens(config.seed, config.context_length, d),
                };
                let exact = conventional_attention(&tokens, (d as f64).sqrt())?;
                Ok((d, tokens, exact))
            })
            .collect::<Result<_>>()?;
        let results: Vec<CellResult> = config
            .cells()
            .par_iter()
            .map(|&(d, order)| {
                let (_, tokens, exact) = oracles.iter().find(|o| o.0 == d).expect("oracle per width");
                measure_cell(d, order, tokens, exact, config, &registry)
            })
            .collect::<Result<_>>()?;
        let mut summary = ErrorSummary {
            n: config.context_length,
            seed: config.seed,
            precision: config.precision.to_string(),
            method: config.method.clone(),
            ..Default::default()
        };
        for r in results {
            summary.cells.push(r.cell);
            summary.flagged.extend(r.flagged);
            summary.positions.extend(r.positions);
        }
        Ok(summary)
    })
}

/// Error of the configured method against `conventional_attention` for every
/// `(d, P)` cell. Degenerate denominators become flagged tokens.
pub fn run_reconstruction(config: &ExperimentConfig) -> Result<ErrorSummary> {
    summarize(config, None)
}

/// As [`run_reconstruction`], read through [`ErrorSummary::positions`].
pub fn run_error_by_position(config: &ExperimentConfig) -> Result<ErrorSummary> {
    summarize(config, None)
}

/// As [`run_reconstruction`] on a given token sequence instead of sampled
/// tokens. The sequence must have `d_K = d_V`; its width replaces
/// `config.head_widths` and its length `config.context_length`.
pub fn run_reconstruction_on(config: &ExperimentConfig, tokens: &[TokenTriple]) -> Result<ErrorSummary> {
    let first = tokens.first().ok_or(taylorattn::Error::EmptyContext)?;
    if first.key_width() != first.value_width() {
        return Err(taylorattn::Error::Domain("token file must have d_K = d_V".into()));
    }
    let config = ExperimentConfig {
        head_widths: vec![first.key_width()],
        context_length: tokens.len(),
        ..config.clone()
    };
    summarize(&config, Some(tokens))
}

#[derive(Debug, Serialize)]
pub struct ReconRow {
    pub kind: &'static str,
    pub d: usize,
    #[serde(rename = "P")]
    pub order: usize,
    pub n: usize,
    pub seed: u64,
    pub precision: String,
    pub method: String,
    pub token: Option<usize>,
    pub measured_tokens: Option<usize>,
    pub flagged_tokens: Option<usize>,
    pub median_log10_err: Option<f64>,
    pub mean_log10_err: Option<f64>,
    pub max_log10_err: Option<f64>,
    pub median_abs_err: Option<f64>,
    pub detail: String,
}

/// One `cell` row per `(d, P)`, then one `flagged` row per failed token.
pub fn recon_rows(s: &ErrorSummary) -> Vec<ReconRow> {
    let base = |kind, d, order| ReconRow {
        kind,
        d,
        order,
        n: s.n,
        seed: s.seed,
        precision: s.precision.clone(),
        method: s.method.clone(),
        token: None,
        measured_tokens: None,
        flagged_tokens: None,
        median_log10_err: None,
        mean_log10_err: None,
        max_log10_err: None,
        median_abs_err: None,
        detail: String::new(),
    };
    let cells = s.cells.iter().map(|c| ReconRow {
        measured_tokens: Some(c.measured_tokens),
        flagged_tokens: Some(c.flagged_tokens),
        median_log10_err: c.log10.map(|l| l.median),
        mean_log10_err: c.log10.map(|l| l.mean),
        max_log10_err: c.log10.map(|l| l.max),
        median_abs_err: c.median_abs_err,
        ..base("cell", c.d, c.order)
    });
    let flagged = s.flagged.iter().map(|f| ReconRow {
        token: Some(f.token),
        detail: f.detail.clone(),
        ..base("flagged", f.d, f.order)
    });
    cells.chain(flagged).collect()
}

#[derive(Debug, Serialize)]
pub struct PositionRow {
    pub d: usize,
    #[serde(rename = "P")]
    pub order: usize,
    pub n: usize,
    pub seed: u64,
    pub bucket_start: usize,
    pub bucket_end: usize,
    pub measured_tokens: usize,
    pub flagged_tokens: usize,
    pub median_log10_err: Option<f64>,
    pub mean_log10_err: Option<f64>,
    pub max_log10_err: Option<f64>,
}

pub fn position_rows(s: &ErrorSummary) -> Vec<PositionRow> {
    s.positions
        .iter()
        .map(|b| PositionRow {
            d: b.d,
            order: b.order,
            n: s.n,
            seed: s.seed,
            bucket_start: b.start,
            bucket_end: b.end,
            measured_tokens: b.measured_tokens,
            flagged_tokens: b.flagged_tokens,
            median_log10_err: b.log10.map(|l| l.median),
            mean_log10_err: b.log10.map(|l| l.mean),
            max_log10_err: b.log10.map(|l| l.max),
        })
        .collect()
}
