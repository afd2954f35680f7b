use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use taylorattn::attention::{DenominatorPolicy, MethodRegistry, ReadoutOptions};
use taylorattn::tokenio::{read_tokens, write_tokens};
use taylorattn::Precision;
use taylorattn_bench::basis_export::basis_rows;
use taylorattn_bench::cost::{emit_cost_tables, CostGrid};
use taylorattn_bench::csvout::{emit, sibling};
use taylorattn_bench::perf::{log_grid, run_perf, PerfConfig};
use taylorattn_bench::recon::{position_rows, recon_rows, run_reconstruction, run_reconstruction_on};
use taylorattn_bench::rng::sample_tokens;
use taylorattn_bench::selftest::selftest;
use taylorattn_bench::ExperimentConfig;

#[derive(Parser)]
#[command(name = "taylorattn", version, about = "Truncated-Taylor attention: verification and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Export the packed monomial basis and multiplicities.
    Basis(BasisArgs),
    /// Reconstruction error against exact softmax attention, per (d, P).
    Recon(ReconArgs),
    /// Reconstruction error bucketed by token position.
    ReconByPos(ReconArgs),
    /// Per-token time and resident bytes against context length.
    Perf(PerfArgs),
    /// State size and FLOP tables.
    Cost(CostArgs),
    /// Run the invariant suite.
    Selftest(SelftestArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Args)]
struct Common {
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

impl Common {
    fn target(&self) -> Option<&std::path::Path> {
        match self.format {
            Format::Csv => self.out.as_deref(),
        }
    }
}

#[derive(Args)]
struct BasisArgs {
    #[arg(long, value_delimiter = ',', default_value = "2,3")]
    d: Vec<usize>,
    /// Truncation order; degrees 0..P-1 are exported.
    #[arg(long, default_value_t = 4)]
    p_max: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ReconArgs {
    #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
    d: Vec<usize>,
    /// Orders 1..=p-max are evaluated.
    #[arg(long, default_value_t = 4)]
    p_max: usize,
    #[arg(long, default_value_t = 2048)]
    n: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = "double")]
    precision: Precision,
    #[arg(long, default_value_t = 64)]
    chunk: usize,
    #[arg(long, default_value = "stream")]
    method: String,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Read degenerate denominators as uniform attention instead of flagging.
    #[arg(long)]
    fallback_uniform: bool,
    /// Evaluate on a token file instead of sampled tokens.
    #[arg(long, conflicts_with_all = ["dump_tokens", "d", "n"])]
    tokens: Option<PathBuf>,
    /// Also write the sampled tokens (single --d only).
    #[arg(long)]
    dump_tokens: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct PerfArgs {
    #[arg(long, default_value_t = 8)]
    d: usize,
    /// Truncation order.
    #[arg(long, default_value_t = 4)]
    p_max: usize,
    /// Largest context length.
    #[arg(long, default_value_t = 1_000_000)]
    n: usize,
    #[arg(long, default_value_t = 1_000)]
    n_min: usize,
    /// Context lengths per decade.
    #[arg(long, default_value_t = 2)]
    per_decade: usize,
    /// Largest context for the conventional arm.
    #[arg(long, default_value_t = 100_000)]
    conv_max: usize,
    #[arg(long, default_value_t = 256)]
    probe: usize,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = "double")]
    precision: Precision,
    #[arg(long, default_value_t = 64)]
    chunk: usize,
    #[arg(long, default_value = "stream")]
    method: String,
    /// KV cache byte cap; larger caches become capped rows.
    #[arg(long, default_value_t = 1 << 31)]
    cap_bytes: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct CostArgs {
    #[arg(long, value_delimiter = ',', default_value = "16,32,64,128")]
    d: Vec<u64>,
    #[arg(long, default_value_t = 6)]
    p_max: u64,
    #[arg(long, value_delimiter = ',', default_value = "1000,10000,100000,1000000")]
    n: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    heads: Vec<u64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

/// Exit code 2: the request itself is invalid.
struct Invalid(String);

enum Failure {
    Invalid(String),
    Failed(String),
}

impl From<Invalid> for Failure {
    fn from(e: Invalid) -> Self {
        Failure::Invalid(e.0)
    }
}

impl From<taylorattn::Error> for Failure {
    fn from(e: taylorattn::Error) -> Self {
        use taylorattn::Error as E;
        match e.root() {
            E::Domain(_) | E::ElementBudget { .. } | E::UnknownMethod(_) | E::Overflow(_) | E::Format(_) => {
                Failure::Invalid(e.to_string())
            }
            _ => Failure::Failed(e.to_string()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Failed(format!("{e:#}"))
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Failed(e.to_string())
    }
}

fn recon_config(a: &ReconArgs) -> Result<ExperimentConfig, Invalid> {
    let config = ExperimentConfig {
        head_widths: a.d.clone(),
        truncation_orders: (1..=a.p_max).collect(),
        context_length: a.n,
        seed: a.seed,
        precision: a.precision,
        chunk_size: a.chunk,
        method: a.method.clone(),
        policy: if a.fallback_uniform {
            DenominatorPolicy::FallbackUniform
        } else {
            DenominatorPolicy::Strict
        },
        jobs: a.jobs,
        output_path: a.common.out.clone(),
    };
    config
        .validate(&MethodRegistry::with_builtin())
        .map_err(|e| Invalid(e.to_string()))?;
    if a.dump_tokens.is_some() && a.d.len() != 1 {
        return Err(Invalid("--dump-tokens needs exactly one --d".into()));
    }
    Ok(config)
}

fn recon(a: &ReconArgs, by_position: bool) -> Result<(), Failure> {
    let config = recon_config(a)?;
    let summary = match &a.tokens {
        Some(path) => {
            let (_, tokens) = read_tokens(&mut BufReader::new(File::open(path)?))?;
            run_reconstruction_on(&config, &tokens)?
        }
        None => {
            if let Some(path) = &a.dump_tokens {
                let tokens = sample_tokens(config.seed, config.context_length, config.head_widths[0]);
                write_tokens(&mut BufWriter::new(File::create(path)?), &tokens)?;
            }
            run_reconstruction(&config)?
        }
    };
    for f in &summary.flagged {
        eprintln!("flagged: d={} P={} token {}: {}", f.d, f.order, f.token, f.detail);
    }
    let out = a.common.target();
    if by_position {
        emit(out, &position_rows(&summary))?;
    } else {
        emit(out, &recon_rows(&summary))?;
    }
    Ok(())
}

fn perf(a: &PerfArgs) -> Result<(), Failure> {
    if a.d == 0 || a.p_max == 0 || a.n == 0 || a.n_min == 0 || a.n_min > a.n || a.per_decade == 0 {
        return Err(Invalid("perf needs d, p-max, per-decade ≥ 1 and 1 ≤ n-min ≤ n".into()).into());
    }
    if !matches!(a.method.as_str(), "stream" | "scan") {
        return Err(Invalid(format!("perf --method must be stream or scan, got `{}`", a.method)).into());
    }
    if a.runs < 5 {
        return Err(Invalid("perf needs at least 5 timed runs".into()).into());
    }
    let contexts = log_grid(a.n_min, a.n, a.per_decade);
    let conv: Vec<usize> = contexts.iter().copied().filter(|&n| n <= a.conv_max).collect();
    let config = PerfConfig {
        width: a.d,
        truncation_order: a.p_max,
        contexts,
        conventional_contexts: Some(conv),
        probe_tokens: a.probe,
        runs: a.runs,
        warmup: 1,
        seed: a.seed,
        method: a.method.clone(),
        chunk_size: a.chunk,
        options: ReadoutOptions {
            precision: a.precision,
            policy: DenominatorPolicy::FallbackUniform,
        },
        conventional_byte_cap: a.cap_bytes,
    };
    let rows = run_perf(&config)?;
    emit(a.common.target(), &rows)?;
    Ok(())
}

fn cost(a: &CostArgs) -> Result<(), Failure> {
    if a.d.is_empty() || a.n.is_empty() || a.heads.is_empty() || a.p_max == 0 {
        return Err(Invalid("cost needs nonempty --d, --n, --heads and --p-max ≥ 1".into()).into());
    }
    let grid = CostGrid {
        widths: a.d.clone(),
        truncation_orders: (1..=a.p_max).collect(),
        contexts: a.n.clone(),
        heads: a.heads.clone(),
    };
    let tables = emit_cost_tables(&grid)?;
    for f in &tables.flagged {
        eprintln!("flagged: {f}");
    }
    match a.common.target() {
        Some(path) => {
            emit(Some(path), &tables.costs)?;
            emit(Some(&sibling(path, "alpha")), &tables.alphas)?;
            emit(Some(&sibling(path, "packing")), &tables.packing)?;
        }
        None => emit(None, &tables.costs)?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Basis(a) => {
            if a.d.is_empty() || a.d.contains(&0) || a.p_max == 0 {
                return Err(Invalid("basis needs widths ≥ 1 and --p-max ≥ 1".into()).into());
            }
            emit(a.common.target(), &basis_rows(&a.d, a.p_max)?)?;
            Ok(())
        }
        Command::Recon(a) => recon(&a, false),
        Command::ReconByPos(a) => recon(&a, true),
        Command::Perf(a) => perf(&a),
        Command::Cost(a) => cost(&a),
        Command::Selftest(a) => {
            let outcomes = selftest(a.seed);
            for o in &outcomes {
                println!("{o}");
            }
            let failed: Vec<_> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name).collect();
            if failed.is_empty() {
                println!("selftest passed");
                Ok(())
            } else {
                Err(Failure::Failed(format!("failed checks: {}", failed.join(", "))))
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Failed(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Invalid(msg)) => {
            eprintln!("invalid configuration: {msg}");
            ExitCode::from(2)
        }
    }
}
