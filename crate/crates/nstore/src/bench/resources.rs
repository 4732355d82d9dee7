//! Host CPU and memory sampling from /proc.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub cpu_pct: f64,
    pub mem_pct: f64,
}

/// `(busy, total)` jiffies from the aggregate cpu line.
fn cpu_times() -> Option<(u64, u64)> {
    let stat = std::fs::read_to_string("/proc/stat").ok()?;
    let line = stat.lines().find(|l| l.starts_with("cpu "))?;
    let v: Vec<u64> = line.split_whitespace().skip(1).filter_map(|x| x.parse().ok()).collect();
    if v.len() < 4 {
        return None;
    }
    let total: u64 = v.iter().sum();
    let idle = v[3] + v.get(4).copied().unwrap_or(0);
    Some((total - idle, total))
}

fn mem_pct() -> Option<f64> {
    let info = std::fs::read_to_string("/proc/meminfo").ok()?;
    let field = |name: &str| -> Option<f64> {
        let line = info.lines().find(|l| l.starts_with(name))?;
        line.split_whitespace().nth(1)?.parse().ok()
    };
    let total = field("MemTotal:")?;
    let avail = field("MemAvailable:")?;
    Some(100.0 * (total - avail) / total)
}

pub fn supported() -> bool {
    cpu_times().is_some() && mem_pct().is_some()
}

pub struct Sampler {
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<Vec<Sample>>>,
}

impl Sampler {
    /// `None` when the platform has no readable counters.
    pub fn start(interval: Duration) -> Option<Sampler> {
        if !supported() {
            return None;
        }
        let stop = Arc::new(AtomicBool::new(false));
        let s = stop.clone();
        let handle = std::thread::spawn(move || {
            let mut out = Vec::new();
            let mut prev = cpu_times();
            let tick = Duration::from_millis(20);
            while !s.load(Ordering::SeqCst) {
                let mut waited = Duration::ZERO;
                while waited < interval && !s.load(Ordering::SeqCst) {
                    std::thread::sleep(tick);
                    waited += tick;
                }
                let now = cpu_times();
                if let (Some((b0, t0)), Some((b1, t1)), Some(m)) = (prev, now, mem_pct()) {
                    if t1 > t0 {
                        out.push(Sample {
                            cpu_pct: 100.0 * (b1 - b0) as f64 / (t1 - t0) as f64,
                            mem_pct: m,
                        });
                    }
                }
                prev = now;
            }
            out
        });
        Some(Sampler {
            stop,
            handle: Some(handle),
        })
    }

    pub fn finish(mut self) -> Vec<Sample> {
        self.stop.store(true, Ordering::SeqCst);
        self.handle
            .take()
            .map(|h| h.join().unwrap_or_default())
            .unwrap_or_default()
    }
}

/// Averages `(cpu, mem)`, or `None` for an empty series.
pub fn averages(samples: &[Sample]) -> (Option<f64>, Option<f64>) {
    if samples.is_empty() {
        return (None, None);
    }
    let n = samples.len() as f64;
    (
        Some(samples.iter().map(|s| s.cpu_pct).sum::<f64>() / n),
        Some(samples.iter().map(|s| s.mem_pct).sum::<f64>() / n),
    )
}

impl Drop for Sampler {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
    }
}
