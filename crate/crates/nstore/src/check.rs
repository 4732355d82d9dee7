//! Offline integrity audit of a data directory. Nothing is modified.

use std::path::Path;

use nstore_core::broker;
use nstore_core::persist::quarantine_dir;
use nstore_core::persist::signal_log::{self, LogState};
use nstore_core::store;
use serde::Serialize;

#[derive(Debug, Default, Serialize)]
pub struct StoreSummary {
    pub lsn: u64,
    pub entities: usize,
    pub relations: usize,
    pub torn_bytes: u64,
}

#[derive(Debug, Serialize)]
pub struct PartitionSummary {
    pub partition: u16,
    pub first_offset: u64,
    pub next_offset: u64,
    pub torn_bytes: u64,
}

#[derive(Debug, Default, Serialize)]
pub struct StreamSummary {
    pub streams: usize,
    pub finalized: usize,
    pub open: usize,
    pub torn_bytes: u64,
    pub sample_bytes: u64,
}

#[derive(Debug, Default, Serialize)]
pub struct CheckReport {
    pub ok: bool,
    pub store: Option<StoreSummary>,
    pub broker: Option<Vec<PartitionSummary>>,
    pub streams: StreamSummary,
    pub quarantined: usize,
    /// Recoverable findings, such as torn tails a restart will truncate.
    pub warnings: Vec<String>,
    pub problems: Vec<String>,
}

pub fn check(data_dir: &Path) -> CheckReport {
    let mut r = CheckReport::default();

    if data_dir.join("meta").exists() {
        match store::verify(data_dir) {
            Ok(c) => {
                if c.torn_bytes > 0 {
                    r.warnings
                        .push(format!("metadata wal: {} torn bytes at the tail", c.torn_bytes));
                }
                r.problems.extend(c.problems.iter().map(|p| format!("metadata: {p}")));
                r.store = Some(StoreSummary {
                    lsn: c.lsn,
                    entities: c.entities,
                    relations: c.relations,
                    torn_bytes: c.torn_bytes,
                });
            }
            Err(e) => r.problems.push(format!("metadata: {e}")),
        }
    }

    let broker_dir = data_dir.join("broker");
    if broker_dir.exists() {
        match broker::verify(&broker_dir) {
            Ok(parts) => {
                for p in &parts {
                    if p.torn_bytes > 0 {
                        r.warnings.push(format!(
                            "broker partition {}: {} torn bytes at the tail",
                            p.partition, p.torn_bytes
                        ));
                    }
                }
                r.broker = Some(
                    parts
                        .into_iter()
                        .map(|p| PartitionSummary {
                            partition: p.partition,
                            first_offset: p.first_offset,
                            next_offset: p.next_offset,
                            torn_bytes: p.torn_bytes,
                        })
                        .collect(),
                );
            }
            Err(e) => r.problems.push(format!("broker: {e}")),
        }
    }

    match signal_log::list_streams(data_dir) {
        Ok(ids) => {
            for id in ids {
                let info = match signal_log::stream_info(data_dir, &id) {
                    Ok(i) => i,
                    Err(e) => {
                        r.problems.push(format!("stream {id}: {e}"));
                        continue;
                    }
                };
                let torn = info.bytes_on_disk - info.valid_bytes;
                r.streams.streams += 1;
                r.streams.torn_bytes += torn;
                if let Some(c) = info.channel_count {
                    r.streams.sample_bytes += info.frames * c as u64 * 8;
                }
                match info.state {
                    LogState::Finalized => {
                        r.streams.finalized += 1;
                        if torn > 0 {
                            r.problems
                                .push(format!("stream {id}: finalized log has {torn} trailing bytes"));
                        }
                        match info.final_chunk_count {
                            Some(n) if n != info.chunk_count => r.problems.push(format!(
                                "stream {id}: finalized at {n} chunks but {} are on disk",
                                info.chunk_count
                            )),
                            Some(_) => {}
                            None => r.problems.push(format!("stream {id}: finalized without a chunk count")),
                        }
                    }
                    LogState::Open => {
                        r.streams.open += 1;
                        if torn > 0 {
                            r.warnings.push(format!("stream {id}: {torn} torn bytes at the tail"));
                        }
                    }
                }
            }
        }
        Err(e) => r.problems.push(format!("streams: {e}")),
    }

    r.quarantined = std::fs::read_dir(quarantine_dir(data_dir)).map_or(0, |d| d.count());
    r.ok = r.problems.is_empty();
    r
}
