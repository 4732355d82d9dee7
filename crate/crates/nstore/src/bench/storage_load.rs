//! Simulated EEG devices streaming at real-time pace.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use nstore_core::domain::{AttributeBlock, EntityDocument, EntityId, Timestamp, TopicEntity, TopicKind};
use nstore_core::persist::signal_log::{self, LogState};
use nstore_core::wire::{SampleMatrix, StreamChunker};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::fixture::entity_frame;
use super::metrics::{StorageReport, StreamResult};
use super::resources::{self, Sampler};
use crate::ingest::{Producer, ProducerError};

pub const CHUNK_INTERVAL: Duration = Duration::from_millis(100);
pub const DRAIN_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("TargetUnreachable: {0}")]
    TargetUnreachable(String),
    #[error("device {device}: {source}")]
    Device { device: usize, source: ProducerError },
    #[error("DrainTimeout: {0} streams not finalized within {1:?}")]
    DrainTimeout(usize, Duration),
    #[error("reading stream {0}: {1}")]
    Disk(EntityId, String),
}

#[derive(Debug, Clone)]
pub struct StorageLoad {
    pub ingest: String,
    /// The persist data directory of the target node.
    pub data_dir: PathBuf,
    pub devices: usize,
    pub duration: Duration,
    pub channels: u16,
    pub rate_hz: u32,
    pub seed: u64,
}

struct Sent {
    stream_id: EntityId,
    bytes: u64,
    sha256: String,
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn device(load: &StorageLoad, index: usize, start: Instant) -> Result<Sent, ProducerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(load.seed.wrapping_add(index as u64));
    let stream_id = EntityId::from_bytes(rng.gen());
    let mut p = Producer::connect(&load.ingest)?;
    let mut entity = TopicEntity::with_id(stream_id, TopicKind::Data, &format!("device{index}"), Timestamp::now())
        .expect("valid entity");
    entity
        .mount(
            AttributeBlock::new("EEG")
                .expect("kind")
                .with("sampling_rate", load.rate_hz as i64)
                .with("channels", load.channels as i64),
        )
        .expect("one EEG block");
    p.publish(&entity_frame(&EntityDocument::new(entity)))?;

    let ch = load.channels as usize;
    let frames_per_chunk = ((load.rate_hz as f64 * CHUNK_INTERVAL.as_secs_f64()).round() as usize).max(1);
    let total_frames = (load.duration.as_secs_f64() * load.rate_hz as f64).round() as usize;
    let chunks = total_frames.div_ceil(frames_per_chunk);
    let base: Vec<f64> = (0..frames_per_chunk * ch)
        .map(|_| rng.gen_range(-200.0..200.0))
        .collect();
    let mut chunker = StreamChunker::new(stream_id, frames_per_chunk).expect("non-nil id");
    let mut hasher = Sha256::new();
    let mut bytes = 0u64;
    let deadline = start + load.duration;
    for k in 0..chunks {
        let due = start + CHUNK_INTERVAL * k as u32;
        let now = Instant::now();
        if now >= deadline {
            // Devices stop together; whatever was not sent in time is not sent.
            break;
        }
        if due > now {
            std::thread::sleep(due - now);
        }
        let frames = frames_per_chunk.min(total_frames - k * frames_per_chunk);
        let block: Vec<f64> = base[..frames * ch].iter().map(|v| v + k as f64).collect();
        for v in &block {
            hasher.update(v.to_le_bytes());
        }
        bytes += (block.len() * 8) as u64;
        let m = SampleMatrix::from_interleaved(ch, block).expect("whole frames");
        for c in chunker.chunk(&m) {
            p.send(&c.to_frame(false))?;
        }
        p.flush()?;
        while p.in_flight() > 16 {
            p.recv_ack()?;
        }
    }
    p.send(&chunker.end_of_stream(load.channels))?;
    while p.in_flight() > 0 {
        p.recv_ack()?;
    }
    Ok(Sent {
        stream_id,
        bytes,
        sha256: hex(&hasher.finalize()),
    })
}

pub fn run(load: &StorageLoad) -> Result<StorageReport, StorageError> {
    let mut report = StorageReport {
        devices: load.devices,
        duration_s: load.duration.as_secs_f64(),
        channels: load.channels,
        rate_hz: load.rate_hz,
        bytes_on_disk: 0,
        speed_mb_s: 0.0,
        speed_mib_s: 0.0,
        drain_s: 0.0,
        cpu_avg_pct: None,
        mem_avg_pct: None,
        lossless: true,
        streams: Vec::new(),
    };
    if load.devices == 0 || load.duration.is_zero() {
        return Ok(report);
    }
    Producer::connect(&load.ingest).map_err(|e| StorageError::TargetUnreachable(e.to_string()))?;
    let sampler = Sampler::start(Duration::from_secs(1));
    let start = Instant::now() + Duration::from_millis(200);
    let results: Vec<Result<Sent, StorageError>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..load.devices)
            .map(|i| {
                s.spawn(move || device(load, i, start).map_err(|source| StorageError::Device { device: i, source }))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("device thread")).collect()
    });
    let sent = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let drain_start = Instant::now();
    loop {
        let pending = sent
            .iter()
            .filter(|s| {
                signal_log::stream_info(&load.data_dir, &s.stream_id).map_or(true, |i| i.state != LogState::Finalized)
            })
            .count();
        if pending == 0 {
            break;
        }
        if drain_start.elapsed() > DRAIN_TIMEOUT {
            return Err(StorageError::DrainTimeout(pending, DRAIN_TIMEOUT));
        }
        std::thread::sleep(Duration::from_millis(100));
    }
    report.drain_s = drain_start.elapsed().as_secs_f64();
    let samples = sampler.map(Sampler::finish).unwrap_or_default();
    (report.cpu_avg_pct, report.mem_avg_pct) = resources::averages(&samples);

    for s in &sent {
        let info = signal_log::stream_info(&load.data_dir, &s.stream_id)
            .map_err(|e| StorageError::Disk(s.stream_id, e.to_string()))?;
        report.bytes_on_disk += info.bytes_on_disk;
        let disk = signal_log::sample_bytes(&signal_log::log_path(&load.data_dir, &s.stream_id))
            .map_err(|e| StorageError::Disk(s.stream_id, e.to_string()))?;
        let disk_sha = hex(&Sha256::digest(&disk));
        let lossless = disk_sha == s.sha256 && disk.len() as u64 == s.bytes;
        report.lossless &= lossless;
        report.streams.push(StreamResult {
            stream_id: s.stream_id.to_string(),
            sent_bytes: s.bytes,
            sent_sha256: s.sha256.clone(),
            disk_sha256: disk_sha,
            lossless,
        });
    }
    report.speed_mb_s = report.bytes_on_disk as f64 / report.duration_s / 1e6;
    report.speed_mib_s = report.bytes_on_disk as f64 / report.duration_s / (1024.0 * 1024.0);
    Ok(report)
}
