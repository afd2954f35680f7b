//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use taylorattn::attention::{DenominatorPolicy, ReadoutOptions};
use taylorattn_bench::perf::{log_grid, loglog_slope, median_at, run_perf, PerfConfig};
use taylorattn_bench::selftest::{
    check_basis, check_constant_state, check_cost_model, check_kernel_paths, check_polynomial_identity,
    check_scan_stream, CheckOutcome,
};
use taylorattn_bench::{run_reconstruction, ExperimentConfig};

const SEED: u64 = 42;

struct Line {
    id: usize,
    passed: bool,
    detail: String,
}

fn from_check(id: usize, outcome: CheckOutcome, budget: Duration) -> Line {
    let in_time = outcome.elapsed < budget;
    Line {
        id,
        passed: outcome.passed && in_time,
        detail: format!(
            "{} ({:.1} s, budget {} s{}): {}",
            outcome.name,
            outcome.elapsed.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", exceeded" },
            outcome.detail
        ),
    }
}

fn reconstruction() -> Line {
    let start = Instant::now();
    let config = ExperimentConfig {
        head_widths: vec![4, 8, 16],
        truncation_orders: vec![1, 2, 3, 4],
        context_length: 2048,
        seed: SEED,
        ..Default::default()
    };
    let result = run_reconstruction(&config).map_err(|e| e.to_string()).and_then(|s| {
        let mut parts = Vec::new();
        let mut ok = true;
        for &d in &config.head_widths {
            let means: Vec<f64> = (1..=4)
                .map(|p| {
                    s.cell(d, p)
                        .and_then(|c| c.log10.as_ref())
                        .map(|l| l.mean)
                        .ok_or(format!("d={d} P={p}: no measured tokens"))
                })
                .collect::<Result<_, _>>()?;
            let decreasing = means.windows(2).all(|w| w[1] < w[0]);
            ok &= decreasing;
            let shown: Vec<String> = means.iter().map(|m| format!("{m:.2}")).collect();
            parts.push(format!("d={d} mean log10 [{}]{}", shown.join(", "), if decreasing { "" } else { " not decreasing" }));
        }
        let median = s.cell(16, 4).and_then(|c| c.median_abs_err).ok_or("d=16 P=4: no median")?;
        ok &= median <= 1e-2;
        parts.push(format!("d=16 P=4 median abs error {median:.3e}"));
        if !s.flagged.is_empty() {
            parts.push(format!("{} flagged tokens", s.flagged.len()));
        }
        Ok((ok, parts.join("; ")))
    });
    let elapsed = start.elapsed();
    let in_time = elapsed < Duration::from_secs(300);
    match result {
        Ok((ok, detail)) => Line {
            id: 4,
            passed: ok && in_time,
            detail: format!("reconstruction ({:.1} s): {detail}", elapsed.as_secs_f64()),
        },
        Err(e) => Line {
            id: 4,
            passed: false,
            detail: format!("reconstruction: {e}"),
        },
    }
}

fn scaling() -> Line {
    let start = Instant::now();
    let config = PerfConfig {
        width: 8,
        truncation_order: 4,
        contexts: vec![10_000, 1_000_000],
        conventional_contexts: Some(log_grid(1_000, 100_000, 2)),
        seed: SEED,
        options: ReadoutOptions {
            policy: DenominatorPolicy::FallbackUniform,
            ..Default::default()
        },
        ..Default::default()
    };
    let rows = match run_perf(&config) {
        Ok(r) => r,
        Err(e) => {
            return Line {
                id: 8,
                passed: false,
                detail: format!("scaling: {e}"),
            }
        }
    };
    let elapsed = start.elapsed();
    let (small, large) = (median_at(&rows, "ours", 10_000), median_at(&rows, "ours", 1_000_000));
    let slope = loglog_slope(&rows, "conventional", 1_000, 100_000);
    match (small, large, slope) {
        (Some(a), Some(b), Some(s)) => {
            let ratio = b / a;
            let passed = ratio <= 2.0 && (0.8..=1.2).contains(&s) && elapsed < Duration::from_secs(900);
            Line {
                id: 8,
                passed,
                detail: format!(
                    "scaling ({:.1} s): ours {a:.0} ns/token at n=1e4, {b:.0} ns/token at n=1e6, ratio {ratio:.2}; conventional log-log slope {s:.3}",
                    elapsed.as_secs_f64()
                ),
            }
        }
        _ => Line {
            id: 8,
            passed: false,
            detail: "scaling: missing timing rows".into(),
        },
    }
}

fn selftest_process() -> Line {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_taylorattn")).arg("selftest").output();
    let elapsed = start.elapsed();
    match out {
        Ok(o) => {
            let code = o.status.code();
            let passed = code == Some(0) && elapsed < Duration::from_secs(300);
            let mut detail = format!("selftest process exited with {code:?} in {:.1} s", elapsed.as_secs_f64());
            if !passed {
                detail.push_str(&format!(": {}", String::from_utf8_lossy(&o.stdout).trim()));
            }
            Line { id: 9, passed, detail }
        }
        Err(e) => Line {
            id: 9,
            passed: false,
            detail: format!("selftest process: {e}"),
        },
    }
}

fn main() -> ExitCode {
    let criteria: Vec<Box<dyn Fn() -> Line>> = vec![
        Box::new(|| from_check(1, check_basis(), Duration::from_secs(10))),
        Box::new(|| from_check(2, check_polynomial_identity(SEED, 100, 1e-10), Duration::from_secs(30))),
        Box::new(|| from_check(3, check_kernel_paths(SEED, 100, 1e-12), Duration::from_secs(30))),
        Box::new(reconstruction),
        Box::new(|| from_check(5, check_scan_stream(SEED, 10_000, 8, 4, &[1, 7, 64, 1024], 1e-10), Duration::from_secs(300))),
        Box::new(|| {
            from_check(
                6,
                check_constant_state(SEED, &[(8, 8, 4), (64, 64, 4)], 1_000, 1_000_000),
                Duration::from_secs(600),
            )
        }),
        Box::new(|| from_check(7, check_cost_model(), Duration::from_secs(10))),
        Box::new(scaling),
        Box::new(selftest_process),
    ];
    let mut failed = 0;
    for run in &criteria {
        let line = run();
        println!("{} criterion {}: {}", if line.passed { "PASS" } else { "FAIL" }, line.id, line.detail);
        failed += usize::from(!line.passed);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
