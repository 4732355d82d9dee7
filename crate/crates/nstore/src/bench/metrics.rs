//! Latency statistics and report documents.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Nearest-rank percentile of an ascending slice: the `ceil(pct/100 * n)`-th
/// order statistic. `pct` is an integer percentage in 1..=100.
pub fn nearest_rank(sorted: &[f64], pct: u32) -> Option<f64> {
    if sorted.is_empty() || pct == 0 || pct > 100 {
        return None;
    }
    let n = sorted.len() as u64;
    // Integer ceiling keeps e.g. 99% of 100 at rank 99 exactly.
    let rank = (pct as u64 * n).div_ceil(100).max(1);
    Some(sorted[rank as usize - 1])
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub users: usize,
    pub loops: usize,
    pub total_requests: usize,
    pub errors: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub duration_s: f64,
    pub throughput_rps: f64,
    pub cpu_avg_pct: Option<f64>,
    pub mem_avg_pct: Option<f64>,
    pub raw_latencies_path: Option<PathBuf>,
}

impl MetricsReport {
    /// `latencies_ms` holds successful requests only.
    pub fn build(
        users: usize,
        loops: usize,
        mut latencies_ms: Vec<f64>,
        errors: usize,
        duration_s: f64,
    ) -> MetricsReport {
        latencies_ms.sort_by(f64::total_cmp);
        let ok = latencies_ms.len();
        MetricsReport {
            users,
            loops,
            total_requests: ok,
            errors,
            mean_ms: mean(&latencies_ms),
            std_ms: std_dev(&latencies_ms),
            p50_ms: nearest_rank(&latencies_ms, 50).unwrap_or(0.0),
            p99_ms: nearest_rank(&latencies_ms, 99).unwrap_or(0.0),
            duration_s,
            throughput_rps: if duration_s > 0.0 { ok as f64 / duration_s } else { 0.0 },
            cpu_avg_pct: None,
            mem_avg_pct: None,
            raw_latencies_path: None,
        }
    }

    /// Whether the request accounting adds up.
    pub fn consistent(&self) -> bool {
        self.total_requests + self.errors == self.users * self.loops
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamResult {
    pub stream_id: String,
    pub sent_bytes: u64,
    pub sent_sha256: String,
    pub disk_sha256: String,
    pub lossless: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageReport {
    pub devices: usize,
    pub duration_s: f64,
    pub channels: u16,
    pub rate_hz: u32,
    pub bytes_on_disk: u64,
    /// Megabytes (10^6 bytes) per second.
    pub speed_mb_s: f64,
    pub speed_mib_s: f64,
    pub drain_s: f64,
    pub cpu_avg_pct: Option<f64>,
    pub mem_avg_pct: Option<f64>,
    pub lossless: bool,
    pub streams: Vec<StreamResult>,
}

pub fn write_latencies_csv(path: &Path, latencies_ms: &[f64]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "latency_ms")?;
    for l in latencies_ms {
        writeln!(f, "{l:.3}")?;
    }
    f.flush()
}
