//! Closed-loop virtual users issuing the Data-topic joint query.

use std::time::{Duration, Instant};

use serde_json::{json, Value};
use thiserror::Error;

use super::metrics::MetricsReport;
use super::resources::{self, Sampler};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("TargetUnreachable: {0}")]
    TargetUnreachable(String),
    #[error("FixtureMissing: target store holds no entities")]
    FixtureMissing,
    #[error("runtime: {0}")]
    Runtime(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct QueryLoad {
    /// e.g. `http://127.0.0.1:8080`
    pub target: String,
    pub users: usize,
    pub loops: usize,
    pub rampup: Duration,
    pub timeout: Duration,
}

/// Data entities recorded from subjects named S01.
pub fn joint_body() -> Value {
    json!({
        "anchor_topic": "Person",
        "anchor": {"field": "name", "op": "eq", "value": "S01"},
        "relation": "PersonData",
        "direction": "from",
        "page": 0,
        "page_size": 50,
    })
}

pub struct LoadOutcome {
    pub report: MetricsReport,
    /// Successful latencies in completion order per user, concatenated.
    pub latencies_ms: Vec<f64>,
    pub first_errors: Vec<String>,
}

pub fn run(load: &QueryLoad) -> Result<LoadOutcome, LoadError> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    rt.block_on(run_async(load))
}

async fn run_async(load: &QueryLoad) -> Result<LoadOutcome, LoadError> {
    let client = reqwest::Client::builder()
        .timeout(load.timeout)
        .pool_max_idle_per_host(load.users.max(1))
        .build()
        .map_err(|e| LoadError::TargetUnreachable(e.to_string()))?;
    let base = load.target.trim_end_matches('/').to_string();
    let health: Value = client
        .get(format!("{base}/v1/health"))
        .send()
        .await
        .map_err(|e| LoadError::TargetUnreachable(e.to_string()))?
        .json()
        .await
        .map_err(|e| LoadError::TargetUnreachable(e.to_string()))?;
    if health["entities"].as_u64().unwrap_or(0) == 0 {
        return Err(LoadError::FixtureMissing);
    }

    let url = format!("{base}/v1/Data/joint");
    let body = joint_body().to_string();
    let sampler = Sampler::start(Duration::from_millis(500));
    let started = Instant::now();
    let mut tasks = Vec::with_capacity(load.users);
    for u in 0..load.users {
        let (client, url, body) = (client.clone(), url.clone(), body.clone());
        let delay = if load.users > 1 {
            load.rampup.mul_f64(u as f64 / load.users as f64)
        } else {
            Duration::ZERO
        };
        let loops = load.loops;
        tasks.push(tokio::spawn(async move {
            tokio::time::sleep_until(tokio::time::Instant::from_std(started + delay)).await;
            let mut lat = Vec::with_capacity(loops);
            let mut errs = Vec::new();
            for _ in 0..loops {
                let t = Instant::now();
                let r = client
                    .post(&url)
                    .header("content-type", "application/json")
                    .body(body.clone())
                    .send()
                    .await;
                let outcome = match r {
                    Ok(resp) if resp.status().is_success() => resp.bytes().await.map(|_| ()).map_err(|e| e.to_string()),
                    Ok(resp) => Err(format!("{} {}", resp.status(), resp.text().await.unwrap_or_default())),
                    Err(e) => Err(e.to_string()),
                };
                match outcome {
                    Ok(()) => lat.push(t.elapsed().as_secs_f64() * 1000.0),
                    Err(e) => errs.push(e),
                }
            }
            (lat, errs)
        }));
    }
    let mut latencies = Vec::new();
    let mut errors = 0;
    let mut first_errors = Vec::new();
    for t in tasks {
        match t.await {
            Ok((lat, errs)) => {
                latencies.extend(lat);
                errors += errs.len();
                first_errors.extend(errs.into_iter().take(5usize.saturating_sub(first_errors.len())));
            }
            Err(e) => {
                errors += load.loops;
                first_errors.push(e.to_string());
            }
        }
    }
    let duration = started.elapsed().as_secs_f64();
    let samples = sampler.map(Sampler::finish).unwrap_or_default();
    let mut report = MetricsReport::build(load.users, load.loops, latencies.clone(), errors, duration);
    (report.cpu_avg_pct, report.mem_avg_pct) = resources::averages(&samples);
    Ok(LoadOutcome {
        report,
        latencies_ms: latencies,
        first_errors,
    })
}
