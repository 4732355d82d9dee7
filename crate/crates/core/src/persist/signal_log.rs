//! Per-stream append-only sample log `<data_dir>/streams/<id>.nsl`.
//!
//! The file is the concatenation of chunk payloads exactly as received (fixed
//! chunk header followed by samples), in sequence order. A JSON sidecar
//! `<id>.json` carries what the log itself cannot: sampling rate, finalization.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PersistError;
use crate::domain::{EntityId, Timestamp};
use crate::wire::{ChunkHeader, CHUNK_HEADER_LEN};

pub const DEFAULT_SAMPLING_RATE_HZ: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogState {
    Open,
    Finalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    stream_id: EntityId,
    sampling_rate_hz: f64,
    #[serde(default)]
    rate_from_entity: bool,
    state: LogState,
    /// Chunk count the stream is complete at, once known.
    #[serde(default)]
    final_chunk_count: Option<u64>,
    created_at: Timestamp,
}

pub struct SignalLog {
    pub stream_id: EntityId,
    pub path: PathBuf,
    pub channel_count: Option<u16>,
    pub sampling_rate_hz: f64,
    pub next_expected_sequence: u64,
    pub next_sample: u64,
    pub bytes_written: u64,
    pub state: LogState,
    pub created_at: Timestamp,
    final_chunk_count: Option<u64>,
    rate_from_entity: bool,
    sidecar_path: PathBuf,
    file: File,
    dirty: bool,
}

pub fn streams_dir(data_dir: &Path) -> PathBuf {
    data_dir.join("streams")
}

pub fn log_path(data_dir: &Path, id: &EntityId) -> PathBuf {
    streams_dir(data_dir).join(format!("{id}.nsl"))
}

/// Result of scanning a log's chunk headers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogScan {
    pub chunks: u64,
    pub frames: u64,
    pub channel_count: Option<u16>,
    pub valid_len: u64,
    pub file_len: u64,
}

/// Walks chunk headers, stopping at the first incomplete or inconsistent chunk.
pub fn scan_log(path: &Path, stream_id: &EntityId) -> io::Result<LogScan> {
    let file = File::open(path)?;
    let file_len = file.metadata()?.len();
    let mut reader = BufReader::with_capacity(1 << 20, file);
    let mut scan = LogScan {
        chunks: 0,
        frames: 0,
        channel_count: None,
        valid_len: 0,
        file_len,
    };
    let mut header = [0u8; CHUNK_HEADER_LEN];
    loop {
        if file_len - scan.valid_len < CHUNK_HEADER_LEN as u64 {
            break;
        }
        reader.read_exact(&mut header)?;
        let Ok(h) = ChunkHeader::parse_prefix(&header) else {
            break;
        };
        let consistent = h.stream_id == *stream_id
            && h.sequence == scan.chunks
            && h.start_sample == scan.frames
            && scan.channel_count.is_none_or(|c| c == h.channel_count);
        let len = h.payload_len() as u64;
        if !consistent || scan.valid_len + len > file_len {
            break;
        }
        io::copy(&mut (&mut reader).take(len - CHUNK_HEADER_LEN as u64), &mut io::sink())?;
        scan.channel_count = Some(h.channel_count);
        scan.chunks += 1;
        scan.frames += h.samples_per_channel as u64;
        scan.valid_len += len;
    }
    Ok(scan)
}

impl SignalLog {
    /// Opens or creates the log, truncating any incomplete tail chunk.
    pub fn open(data_dir: &Path, stream_id: EntityId) -> Result<SignalLog, PersistError> {
        let dir = streams_dir(data_dir);
        fs::create_dir_all(&dir)?;
        let path = log_path(data_dir, &stream_id);
        let sidecar_path = dir.join(format!("{stream_id}.json"));
        let file = OpenOptions::new().read(true).append(true).create(true).open(&path)?;
        let scan = scan_log(&path, &stream_id)?;
        if scan.valid_len < scan.file_len {
            tracing::warn!(
                stream = %stream_id,
                dropped = scan.file_len - scan.valid_len,
                "truncating incomplete chunk at signal log tail"
            );
            file.set_len(scan.valid_len)?;
            file.sync_all()?;
        }
        let sidecar: Option<Sidecar> = match fs::read(&sidecar_path) {
            Ok(bytes) => serde_json::from_slice(&bytes).ok(),
            Err(e) if e.kind() == io::ErrorKind::NotFound => None,
            Err(e) => return Err(e.into()),
        };
        let fresh = sidecar.is_none();
        let sidecar = sidecar.unwrap_or(Sidecar {
            stream_id,
            sampling_rate_hz: DEFAULT_SAMPLING_RATE_HZ,
            rate_from_entity: false,
            state: LogState::Open,
            final_chunk_count: None,
            created_at: Timestamp::now(),
        });
        let log = SignalLog {
            stream_id,
            path,
            channel_count: scan.channel_count,
            sampling_rate_hz: sidecar.sampling_rate_hz,
            next_expected_sequence: scan.chunks,
            next_sample: scan.frames,
            bytes_written: scan.valid_len,
            state: sidecar.state,
            created_at: sidecar.created_at,
            final_chunk_count: sidecar.final_chunk_count,
            rate_from_entity: sidecar.rate_from_entity,
            sidecar_path,
            file,
            dirty: false,
        };
        if fresh {
            log.write_sidecar()?;
        }
        Ok(log)
    }

    fn write_sidecar(&self) -> io::Result<()> {
        let sidecar = Sidecar {
            stream_id: self.stream_id,
            sampling_rate_hz: self.sampling_rate_hz,
            rate_from_entity: self.rate_from_entity,
            state: self.state,
            final_chunk_count: self.final_chunk_count,
            created_at: self.created_at,
        };
        let tmp = self.sidecar_path.with_extension("json.tmp");
        let mut f = File::create(&tmp)?;
        f.write_all(&serde_json::to_vec_pretty(&sidecar)?)?;
        f.sync_data()?;
        fs::rename(&tmp, &self.sidecar_path)
    }

    /// Records the rate from the owning Data entity's EEG block.
    pub fn set_sampling_rate(&mut self, hz: f64) -> Result<(), PersistError> {
        if !(hz.is_finite() && hz > 0.0) {
            return Err(PersistError::UnknownSamplingRate(self.stream_id));
        }
        if self.rate_from_entity && self.sampling_rate_hz == hz {
            return Ok(());
        }
        self.sampling_rate_hz = hz;
        self.rate_from_entity = true;
        self.write_sidecar()?;
        Ok(())
    }

    /// Appends one in-sequence chunk payload verbatim.
    pub fn append_samples(&mut self, header: &ChunkHeader, payload: &[u8]) -> Result<u64, PersistError> {
        if self.state == LogState::Finalized {
            return Err(PersistError::StreamClosed(self.stream_id));
        }
        if header.sequence != self.next_expected_sequence {
            return Err(PersistError::OutOfSequence {
                stream: self.stream_id,
                expected: self.next_expected_sequence,
                found: header.sequence,
            });
        }
        if let Some(c) = self.channel_count {
            if c != header.channel_count {
                return Err(PersistError::ChannelMismatch {
                    stream: self.stream_id,
                    expected: c,
                    found: header.channel_count,
                });
            }
        }
        if header.start_sample != self.next_sample {
            return Err(PersistError::Malformed(format!(
                "stream {} chunk {} starts at sample {}, expected {}",
                self.stream_id, header.sequence, header.start_sample, self.next_sample
            )));
        }
        self.file.write_all(payload)?;
        self.channel_count = Some(header.channel_count);
        self.next_expected_sequence += 1;
        self.next_sample += header.samples_per_channel as u64;
        self.bytes_written += payload.len() as u64;
        self.dirty = true;
        Ok(header.samples_per_channel as u64)
    }

    /// Makes appended bytes durable.
    pub fn sync(&mut self) -> io::Result<()> {
        if self.dirty {
            self.file.sync_data()?;
            self.dirty = false;
        }
        Ok(())
    }

    pub fn final_chunk_count(&self) -> Option<u64> {
        self.final_chunk_count
    }

    /// Notes that the stream ends after `chunks` chunks; finalizes if complete.
    pub fn end_at(&mut self, chunks: u64) -> Result<bool, PersistError> {
        if self.final_chunk_count != Some(chunks) {
            self.final_chunk_count = Some(chunks);
            self.write_sidecar()?;
        }
        self.finalize_if_complete()
    }

    pub fn finalize_if_complete(&mut self) -> Result<bool, PersistError> {
        if self.state == LogState::Finalized {
            return Ok(false);
        }
        match self.final_chunk_count {
            Some(n) if self.next_expected_sequence >= n => {
                self.sync()?;
                self.state = LogState::Finalized;
                self.write_sidecar()?;
                Ok(true)
            }
            _ => Ok(false),
        }
    }
}

/// Reads a stream's logged chunks in order.
pub struct LogReader {
    reader: BufReader<File>,
    remaining: u64,
}

impl LogReader {
    pub fn open(path: &Path) -> io::Result<LogReader> {
        let file = File::open(path)?;
        let remaining = file.metadata()?.len();
        Ok(LogReader {
            reader: BufReader::with_capacity(1 << 20, file),
            remaining,
        })
    }

    /// Next chunk header and its samples (frame-major), or `None` at the end.
    pub fn next_chunk(&mut self) -> io::Result<Option<(ChunkHeader, Vec<f64>)>> {
        if self.remaining < CHUNK_HEADER_LEN as u64 {
            return Ok(None);
        }
        let mut header = [0u8; CHUNK_HEADER_LEN];
        self.reader.read_exact(&mut header)?;
        let h = ChunkHeader::parse_prefix(&header)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
        let mut raw = vec![0u8; h.sample_bytes()];
        self.reader.read_exact(&mut raw)?;
        self.remaining -= (CHUNK_HEADER_LEN + raw.len()) as u64;
        let samples = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(Some((h, samples)))
    }
}

/// Concatenated sample bytes of a log (headers stripped), for checksums.
pub fn sample_bytes(path: &Path) -> io::Result<Vec<u8>> {
    let mut r = LogReader::open(path)?;
    let mut out = Vec::new();
    while let Some((_, samples)) = r.next_chunk()? {
        for s in samples {
            out.extend_from_slice(&s.to_le_bytes());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamInfo {
    pub stream_id: EntityId,
    pub sampling_rate_hz: f64,
    pub state: LogState,
    pub chunk_count: u64,
    pub frames: u64,
    pub channel_count: Option<u16>,
    pub bytes_on_disk: u64,
    /// Length of the prefix made of whole, consistent chunks.
    pub valid_bytes: u64,
    pub final_chunk_count: Option<u64>,
    pub created_at: Timestamp,
}

/// Read-only view of a stream on disk, without opening it for writing.
pub fn stream_info(data_dir: &Path, stream_id: &EntityId) -> Result<StreamInfo, PersistError> {
    let path = log_path(data_dir, stream_id);
    if !path.exists() {
        return Err(PersistError::UnknownStream(*stream_id));
    }
    let scan = scan_log(&path, stream_id)?;
    let sidecar: Option<Sidecar> = fs::read(streams_dir(data_dir).join(format!("{stream_id}.json")))
        .ok()
        .and_then(|b| serde_json::from_slice(&b).ok());
    let (rate, state, final_count, created_at) = sidecar
        .map_or((DEFAULT_SAMPLING_RATE_HZ, LogState::Open, None, Timestamp(0)), |s| {
            (s.sampling_rate_hz, s.state, s.final_chunk_count, s.created_at)
        });
    Ok(StreamInfo {
        stream_id: *stream_id,
        sampling_rate_hz: rate,
        state,
        chunk_count: scan.chunks,
        frames: scan.frames,
        channel_count: scan.channel_count,
        bytes_on_disk: scan.file_len,
        valid_bytes: scan.valid_len,
        final_chunk_count: final_count,
        created_at,
    })
}

/// Every stream id with a log under `data_dir`.
pub fn list_streams(data_dir: &Path) -> io::Result<Vec<EntityId>> {
    let dir = streams_dir(data_dir);
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut ids: Vec<EntityId> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str()?.strip_suffix(".nsl")?.parse().ok())
        .collect();
    ids.sort();
    Ok(ids)
}
