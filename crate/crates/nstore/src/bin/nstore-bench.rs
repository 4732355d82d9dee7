use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Context;
use clap::{Parser, Subcommand};
use nstore::bench::metrics::{self, MetricsReport, StorageReport};
use nstore::bench::{fixture, golden, query_load, storage_load};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "nstore-bench", version, about = "Load generators for an nstore node")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Concurrent closed-loop users running the Data joint query.
    Query {
        #[arg(long, default_value = "http://127.0.0.1:8080")]
        target: String,
        /// One or more user counts, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "100")]
        users: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        loops: usize,
        /// Seconds over which users start.
        #[arg(long, default_value_t = 1.0)]
        rampup: f64,
        /// Runs per user count; rows report the average.
        #[arg(long, default_value_t = 1)]
        repeat: usize,
        #[arg(long, default_value_t = 30)]
        timeout_s: u64,
        /// Sweep 100..=600 users in steps of 100, five runs each.
        #[arg(long)]
        full_scale: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Raw latencies of the last run, one per line.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Simulated devices streaming 64-bit samples in real time.
    Storage {
        #[arg(long, default_value = "127.0.0.1:7070")]
        ingest: String,
        /// Persist data directory of the target node, read after the run.
        #[arg(long, default_value = "nstore-data")]
        data_dir: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        devices: Vec<usize>,
        #[arg(long, default_value_t = 60)]
        duration: u64,
        #[arg(long, default_value_t = 65)]
        channels: u16,
        #[arg(long, default_value_t = 1000)]
        rate: u32,
        /// Seeds stream ids and samples; defaults to the clock.
        #[arg(long)]
        seed: Option<u64>,
        /// Run 20 devices and compare with 9.6 MB/s (within 20%).
        #[arg(long)]
        full_scale: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a seeded population and optionally ingest it.
    Fixture {
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Ingest address to publish to.
        #[arg(long)]
        ingest: Option<String>,
        /// Write the documents as JSON lines.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the wire-format reference vectors.
    Golden {
        #[arg(long, default_value = "golden/vectors.json")]
        out: PathBuf,
    },
}

#[derive(Serialize)]
struct QueryRow {
    users: usize,
    runs: usize,
    mean_ms: f64,
    std_ms: f64,
    p99_ms: f64,
    throughput_rps: f64,
    errors: usize,
    reports: Vec<MetricsReport>,
}

fn write_json(path: &Option<PathBuf>, value: &impl Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn query(
    target: String,
    mut users: Vec<usize>,
    loops: usize,
    rampup: f64,
    mut repeat: usize,
    timeout_s: u64,
    full_scale: bool,
    out: Option<PathBuf>,
    csv: Option<PathBuf>,
) -> anyhow::Result<ExitCode> {
    if full_scale {
        users = (1..=6).map(|k| k * 100).collect();
        repeat = 5;
    }
    let mut rows = Vec::new();
    let mut last_latencies = Vec::new();
    let mut errors = 0;
    for &u in &users {
        let mut reports = Vec::new();
        for _ in 0..repeat.max(1) {
            let outcome = query_load::run(&query_load::QueryLoad {
                target: target.clone(),
                users: u,
                loops,
                rampup: Duration::from_secs_f64(rampup),
                timeout: Duration::from_secs(timeout_s),
            })?;
            for e in &outcome.first_errors {
                eprintln!("users={u}: {e}");
            }
            eprintln!(
                "users={u} requests={} errors={} mean={:.1}ms p99={:.1}ms rps={:.1}",
                outcome.report.total_requests,
                outcome.report.errors,
                outcome.report.mean_ms,
                outcome.report.p99_ms,
                outcome.report.throughput_rps
            );
            errors += outcome.report.errors;
            last_latencies = outcome.latencies_ms;
            reports.push(outcome.report);
        }
        let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / reports.len() as f64;
        rows.push(QueryRow {
            users: u,
            runs: reports.len(),
            mean_ms: avg(|r| r.mean_ms),
            std_ms: avg(|r| r.std_ms),
            p99_ms: avg(|r| r.p99_ms),
            throughput_rps: avg(|r| r.throughput_rps),
            errors: reports.iter().map(|r| r.errors).sum(),
            reports,
        });
    }
    if let Some(p) = &csv {
        metrics::write_latencies_csv(p, &last_latencies)?;
        for row in &mut rows {
            if let Some(r) = row.reports.last_mut() {
                r.raw_latencies_path = Some(p.clone());
            }
        }
    }
    write_json(&out, &rows)?;
    Ok(if errors == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

#[derive(Serialize)]
struct StorageSummary {
    runs: Vec<StorageReport>,
    /// speed(d) / speed(first run), per run.
    ratios: Vec<f64>,
    full_scale_ok: Option<bool>,
}

fn main() -> anyhow::Result<ExitCode> {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .try_init();
    match Cli::parse().cmd {
        Cmd::Query {
            target,
            users,
            loops,
            rampup,
            repeat,
            timeout_s,
            full_scale,
            out,
            csv,
        } => query(target, users, loops, rampup, repeat, timeout_s, full_scale, out, csv),
        Cmd::Storage {
            ingest,
            data_dir,
            mut devices,
            duration,
            channels,
            rate,
            seed,
            full_scale,
            out,
        } => {
            if full_scale {
                devices = vec![20];
            }
            let mut seed = seed.unwrap_or_else(|| {
                std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map_or(0, |d| d.as_nanos() as u64)
            });
            let mut runs = Vec::new();
            for d in devices {
                let report = storage_load::run(&storage_load::StorageLoad {
                    ingest: ingest.clone(),
                    data_dir: data_dir.clone(),
                    devices: d,
                    duration: Duration::from_secs(duration),
                    channels,
                    rate_hz: rate,
                    seed,
                })?;
                eprintln!(
                    "devices={d} bytes={} speed={:.3} MB/s ({:.3} MiB/s) lossless={}",
                    report.bytes_on_disk, report.speed_mb_s, report.speed_mib_s, report.lossless
                );
                seed = seed.wrapping_add(1 << 32);
                runs.push(report);
            }
            let base = runs.first().map_or(0.0, |r| r.speed_mb_s);
            let ratios = runs
                .iter()
                .map(|r| if base > 0.0 { r.speed_mb_s / base } else { 0.0 })
                .collect();
            let full_scale_ok = full_scale.then(|| runs.iter().all(|r| (r.speed_mb_s - 9.6).abs() <= 0.2 * 9.6));
            let lossless = runs.iter().all(|r| r.lossless);
            write_json(
                &out,
                &StorageSummary {
                    runs,
                    ratios,
                    full_scale_ok,
                },
            )?;
            Ok(if lossless && full_scale_ok != Some(false) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Cmd::Fixture { n, seed, ingest, out } => {
            let docs = fixture::generate(n, seed);
            if let Some(p) = &out {
                fixture::write_jsonl(p, &docs)?;
            }
            if let Some(addr) = &ingest {
                let acked = fixture::load(addr, &docs)?;
                eprintln!("published {acked} entities to {addr}");
            }
            if out.is_none() && ingest.is_none() {
                eprintln!("generated {} entities; pass --out or --ingest to use them", docs.len());
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Golden { out } => {
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(&out, golden::to_json(&golden::generate()))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
