//! Workers that drain the broker into the metadata store and signal logs.

pub mod bdf;
pub mod signal_log;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::broker::{Broker, QueueRecord};
use crate::domain::{EntityDocument, EntityId, TopicKind};
use crate::store::{InsertOutcome, Store, StoreError};
use crate::wire::{ChunkHeader, ControlMessage, FrameType};
pub use signal_log::{LogState, SignalLog, StreamInfo};

#[derive(Debug, Error)]
pub enum SinkError {
    #[error("{0}")]
    Dangling(String),
    #[error("{code}: {message}")]
    Rejected { code: String, message: String },
    #[error("store unavailable: {0}")]
    Unavailable(String),
}

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("stream {stream}: {found} channels, expected {expected}")]
    ChannelMismatch {
        stream: EntityId,
        expected: u16,
        found: u16,
    },
    #[error("stream {stream}: chunk {found} out of sequence, expected {expected}")]
    OutOfSequence {
        stream: EntityId,
        expected: u64,
        found: u64,
    },
    #[error("stream {0} is finalized")]
    StreamClosed(EntityId),
    #[error("stream {0} is not finalized")]
    StreamNotFinalized(EntityId),
    #[error("no signal log for stream {0}")]
    UnknownStream(EntityId),
    #[error("stream {0} has no usable sampling rate")]
    UnknownSamplingRate(EntityId),
    #[error("{workers} workers for {partitions} partitions")]
    NoPartitionsAvailable { workers: usize, partitions: u16 },
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error("record source: {0}")]
    Source(String),
    #[error(transparent)]
    Sink(#[from] SinkError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl PersistError {
    pub fn code(&self) -> &'static str {
        match self {
            PersistError::ChannelMismatch { .. } => "ChannelMismatch",
            PersistError::OutOfSequence { .. } => "OutOfSequence",
            PersistError::StreamClosed(_) => "StreamClosed",
            PersistError::StreamNotFinalized(_) => "StreamNotFinalized",
            PersistError::UnknownStream(_) => "UnknownStream",
            PersistError::UnknownSamplingRate(_) => "UnknownSamplingRate",
            PersistError::NoPartitionsAvailable { .. } => "NoPartitionsAvailable",
            PersistError::Malformed(_) => "MalformedPayload",
            PersistError::Source(_) => "BrokerUnavailable",
            PersistError::Sink(SinkError::Unavailable(_)) => "StoreUnavailable",
            PersistError::Sink(SinkError::Dangling(_)) => "IntegrityViolation",
            PersistError::Sink(SinkError::Rejected { .. }) => "Rejected",
            PersistError::Io(_) => "IoFailure",
        }
    }

    /// Errors worth retrying the same record for.
    fn is_transient(&self) -> bool {
        matches!(
            self,
            PersistError::Sink(SinkError::Unavailable(_) | SinkError::Dangling(_))
                | PersistError::Source(_)
                | PersistError::Io(_)
        )
    }
}

/// Where workers read records from: the broker in-process or over its admin port.
pub trait RecordSource: Send + Sync {
    fn partitions(&self) -> Result<u16, PersistError>;
    fn fetch(&self, group: &str, partition: u16, from: u64, max: usize) -> Result<Vec<QueueRecord>, PersistError>;
    fn commit(&self, group: &str, partition: u16, offset: u64) -> Result<(), PersistError>;
    fn committed(&self, group: &str, partition: u16) -> Result<u64, PersistError>;
    fn wait_for_data(&self, timeout: Duration);
}

impl RecordSource for Broker {
    fn partitions(&self) -> Result<u16, PersistError> {
        Ok(Broker::partitions(self))
    }

    fn fetch(&self, group: &str, partition: u16, from: u64, max: usize) -> Result<Vec<QueueRecord>, PersistError> {
        Broker::fetch(self, group, partition, from, max).map_err(|e| PersistError::Source(e.to_string()))
    }

    fn commit(&self, group: &str, partition: u16, offset: u64) -> Result<(), PersistError> {
        Broker::commit(self, group, partition, offset).map_err(|e| PersistError::Source(e.to_string()))
    }

    fn committed(&self, group: &str, partition: u16) -> Result<u64, PersistError> {
        Broker::committed(self, group, partition).map_err(|e| PersistError::Source(e.to_string()))
    }

    fn wait_for_data(&self, timeout: Duration) {
        Broker::wait_for_data(self, timeout)
    }
}

/// Where entity metadata goes: the primary store in-process or over its write port.
pub trait MetadataSink: Send + Sync {
    fn insert(&self, doc: &EntityDocument) -> Result<InsertOutcome, SinkError>;

    /// Sampling rate recorded on a stored Data entity, if the sink can tell.
    fn sampling_rate(&self, _stream: &EntityId) -> Option<f64> {
        None
    }
}

impl From<StoreError> for SinkError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::DanglingReference(m) => SinkError::Dangling(m),
            StoreError::StoreClosed | StoreError::Io(_) => SinkError::Unavailable(e.to_string()),
            other => SinkError::Rejected {
                code: other.code().to_string(),
                message: other.to_string(),
            },
        }
    }
}

impl MetadataSink for Store {
    fn insert(&self, doc: &EntityDocument) -> Result<InsertOutcome, SinkError> {
        Ok(self.insert_entity(doc)?)
    }

    fn sampling_rate(&self, stream: &EntityId) -> Option<f64> {
        self.snapshot().entity(stream).and_then(eeg_rate)
    }
}

fn eeg_rate(e: &crate::domain::TopicEntity) -> Option<f64> {
    e.attribute("EEG", "sampling_rate").and_then(|v| v.as_f64())
}

#[derive(Debug, Clone)]
pub struct PersistOptions {
    pub data_dir: PathBuf,
    pub workers: usize,
    pub reorder_window: usize,
    pub group: String,
    pub fetch_batch: usize,
    pub pad_last_record: bool,
    pub export_on_finalize: bool,
    /// How long a record referencing a missing entity is retried before quarantine.
    pub dangling_timeout: Duration,
    pub idle_wait: Duration,
}

impl PersistOptions {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        PersistOptions {
            data_dir: data_dir.into(),
            workers: 4,
            reorder_window: 64,
            group: "persist".to_string(),
            fetch_batch: 256,
            pad_last_record: true,
            export_on_finalize: true,
            dangling_timeout: Duration::from_secs(30),
            idle_wait: Duration::from_millis(50),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PersistOutcome {
    MetadataInserted(EntityId),
    SamplesAppended(EntityId, u64),
    Duplicate,
    Buffered,
    StreamFinalized(EntityId),
    Quarantined(String),
}

pub fn quarantine_dir(data_dir: &Path) -> PathBuf {
    data_dir.join("quarantine")
}

struct Pending {
    record: QueueRecord,
    header: ChunkHeader,
}

struct StreamSlot {
    log: SignalLog,
    pending: BTreeMap<u64, Pending>,
}

/// Sequential record handler for one partition. Owns the streams keyed there.
pub struct PartitionProcessor {
    partition: u16,
    opts: PersistOptions,
    streams: HashMap<EntityId, StreamSlot>,
    rates: HashMap<EntityId, f64>,
}

impl PartitionProcessor {
    pub fn new(partition: u16, opts: PersistOptions) -> Self {
        PartitionProcessor {
            partition,
            opts,
            streams: HashMap::new(),
            rates: HashMap::new(),
        }
    }

    /// Processes one record. `Err` means nothing changed and the record should be retried.
    pub fn handle_record(
        &mut self,
        record: &QueueRecord,
        sink: &dyn MetadataSink,
    ) -> Result<PersistOutcome, PersistError> {
        let result = match record.frame.frame_type {
            FrameType::Entity => self.on_entity(record, sink),
            FrameType::StreamChunk => self.on_chunk(record, sink),
            FrameType::Control => self.on_control(record, sink),
        };
        match result {
            Err(e) if !e.is_transient() => self.quarantine(record, &e.to_string()),
            other => other,
        }
    }

    fn on_entity(&mut self, record: &QueueRecord, sink: &dyn MetadataSink) -> Result<PersistOutcome, PersistError> {
        let doc =
            EntityDocument::from_slice(&record.frame.payload).map_err(|e| PersistError::Malformed(e.to_string()))?;
        let outcome = sink.insert(&doc)?;
        if doc.entity.topic == TopicKind::Data {
            if let Some(hz) = eeg_rate(&doc.entity) {
                let id = doc.entity.id;
                if let Some(slot) = self.streams.get_mut(&id) {
                    slot.log.set_sampling_rate(hz)?;
                } else if signal_log::log_path(&self.opts.data_dir, &id).exists() {
                    SignalLog::open(&self.opts.data_dir, id)?.set_sampling_rate(hz)?;
                } else {
                    self.rates.insert(id, hz);
                }
            }
        }
        Ok(match outcome {
            InsertOutcome::Inserted { .. } => PersistOutcome::MetadataInserted(doc.entity.id),
            InsertOutcome::Duplicate => PersistOutcome::Duplicate,
        })
    }

    fn slot(&mut self, id: EntityId, sink: &dyn MetadataSink) -> Result<&mut StreamSlot, PersistError> {
        if !self.streams.contains_key(&id) {
            let mut log = SignalLog::open(&self.opts.data_dir, id)?;
            let rate = self.rates.remove(&id).or_else(|| sink.sampling_rate(&id));
            if let Some(hz) = rate {
                log.set_sampling_rate(hz)?;
            }
            self.streams.insert(
                id,
                StreamSlot {
                    log,
                    pending: BTreeMap::new(),
                },
            );
        }
        Ok(self.streams.get_mut(&id).unwrap())
    }

    fn on_chunk(&mut self, record: &QueueRecord, sink: &dyn MetadataSink) -> Result<PersistOutcome, PersistError> {
        let header = ChunkHeader::parse(&record.frame.payload).map_err(|e| PersistError::Malformed(e.to_string()))?;
        let eos = record.frame.end_of_stream();
        let window = self.opts.reorder_window as u64;
        let slot = self.slot(header.stream_id, sink)?;
        let next = slot.log.next_expected_sequence;
        let seq = header.sequence;
        let empty = header.samples_per_channel == 0;
        if slot.log.state == LogState::Finalized {
            return if seq < next || (empty && eos && seq == next) {
                Ok(PersistOutcome::Duplicate)
            } else {
                Err(PersistError::StreamClosed(header.stream_id))
            };
        }
        if seq < next {
            return Ok(PersistOutcome::Duplicate);
        }
        if empty && !eos {
            return Err(PersistError::Malformed(format!(
                "stream {} chunk {seq} is empty without end-of-stream",
                header.stream_id
            )));
        }
        if seq > next {
            if seq - next > window {
                return Err(PersistError::Malformed(format!(
                    "stream {} chunk {seq} beyond reorder window (next expected {next})",
                    header.stream_id
                )));
            }
            if slot.pending.contains_key(&seq) {
                return Ok(PersistOutcome::Duplicate);
            }
            slot.pending.insert(
                seq,
                Pending {
                    record: record.clone(),
                    header,
                },
            );
            return Ok(PersistOutcome::Buffered);
        }
        let mut frames = Self::apply(slot, &header, &record.frame.payload, eos)?;
        let stream = header.stream_id;
        // Drain buffered successors; a bad one is quarantined on its own.
        loop {
            let slot = self.streams.get_mut(&stream).unwrap();
            let Some(p) = slot.pending.remove(&slot.log.next_expected_sequence) else {
                break;
            };
            let eos = p.record.frame.end_of_stream();
            match Self::apply(slot, &p.header, &p.record.frame.payload, eos) {
                Ok(n) => frames += n,
                Err(e) if e.is_transient() => {
                    slot.pending.insert(p.header.sequence, p);
                    return Err(e);
                }
                Err(e) => {
                    self.quarantine(&p.record, &e.to_string())?;
                }
            }
        }
        let slot = self.streams.get_mut(&stream).unwrap();
        if slot.log.state == LogState::Finalized || slot.log.finalize_if_complete()? {
            return self.finish(stream);
        }
        Ok(PersistOutcome::SamplesAppended(stream, frames))
    }

    fn apply(slot: &mut StreamSlot, header: &ChunkHeader, payload: &[u8], eos: bool) -> Result<u64, PersistError> {
        let mut frames = 0;
        if header.samples_per_channel > 0 {
            frames = slot.log.append_samples(header, payload)?;
        }
        if eos {
            slot.log
                .end_at(header.sequence + u64::from(header.samples_per_channel > 0))?;
        }
        Ok(frames)
    }

    fn on_control(&mut self, record: &QueueRecord, sink: &dyn MetadataSink) -> Result<PersistOutcome, PersistError> {
        let msg = ControlMessage::from_frame(&record.frame).map_err(|e| PersistError::Malformed(e.to_string()))?;
        let ControlMessage::EndStream { stream_id, chunk_count } = msg else {
            return Err(PersistError::Malformed(format!(
                "unexpected control message in queue: {msg:?}"
            )));
        };
        let slot = self.slot(stream_id, sink)?;
        if slot.log.state == LogState::Finalized {
            return Ok(PersistOutcome::Duplicate);
        }
        if slot.log.end_at(chunk_count)? {
            return self.finish(stream_id);
        }
        Ok(PersistOutcome::Buffered)
    }

    fn finish(&mut self, stream: EntityId) -> Result<PersistOutcome, PersistError> {
        let slot = self.streams.remove(&stream).unwrap();
        tracing::info!(
            stream = %stream,
            chunks = slot.log.next_expected_sequence,
            bytes = slot.log.bytes_written,
            "stream finalized"
        );
        for p in slot.pending.into_values() {
            self.quarantine(&p.record, "chunk beyond final chunk count")?;
        }
        if self.opts.export_on_finalize {
            let out = bdf::bdf_dir(&self.opts.data_dir).join(format!("{stream}.bdf"));
            let opts = bdf::BdfOptions {
                pad_last_record: self.opts.pad_last_record,
            };
            if let Err(e) = bdf::export_stream(&self.opts.data_dir, stream, &out, &opts) {
                tracing::warn!(stream = %stream, error = %e, "bdf export failed");
            }
        }
        Ok(PersistOutcome::StreamFinalized(stream))
    }

    /// Moves a record to the dead-letter directory.
    pub fn quarantine(&mut self, record: &QueueRecord, reason: &str) -> Result<PersistOutcome, PersistError> {
        let dir = quarantine_dir(&self.opts.data_dir);
        fs::create_dir_all(&dir)?;
        let bytes = record.frame.encode().unwrap_or_else(|_| record.frame.payload.clone());
        fs::write(dir.join(format!("{}-{}.bin", record.partition, record.offset)), bytes)?;
        tracing::warn!(
            partition = record.partition,
            offset = record.offset,
            reason,
            "record quarantined"
        );
        Ok(PersistOutcome::Quarantined(reason.to_string()))
    }

    /// Lowest offset still needed: buffered chunks are not yet safe to commit past.
    pub fn commit_floor(&self, next_unprocessed: u64) -> u64 {
        self.streams
            .values()
            .flat_map(|s| s.pending.values().map(|p| p.record.offset))
            .fold(next_unprocessed, u64::min)
    }

    pub fn sync(&mut self) -> io::Result<()> {
        for slot in self.streams.values_mut() {
            slot.log.sync()?;
        }
        Ok(())
    }

    pub fn partition(&self) -> u16 {
        self.partition
    }
}

#[derive(Debug, Default)]
pub struct PersistStats {
    pub records: AtomicU64,
    pub quarantined: AtomicU64,
    pub finalized: AtomicU64,
}

pub struct Workers {
    stop: Arc<AtomicBool>,
    handles: Vec<JoinHandle<Result<(), PersistError>>>,
    pub stats: Arc<PersistStats>,
}

impl Workers {
    /// Stops fetching, finishes in-flight records, syncs and commits, then joins.
    pub fn shutdown(mut self) -> Result<(), PersistError> {
        self.stop.store(true, Ordering::SeqCst);
        self.join_all()
    }

    fn join_all(&mut self) -> Result<(), PersistError> {
        let mut first = Ok(());
        for h in self.handles.drain(..) {
            let r = h
                .join()
                .unwrap_or_else(|_| Err(PersistError::Malformed("worker panicked".into())));
            if first.is_ok() {
                first = r;
            }
        }
        first
    }

    pub fn is_finished(&self) -> bool {
        self.handles.iter().all(|h| h.is_finished())
    }
}

impl Drop for Workers {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = self.join_all();
    }
}

/// Starts `opts.workers` threads; worker `i` owns partitions `p` with `p % workers == i`.
pub fn run_workers(
    source: Arc<dyn RecordSource>,
    sink: Arc<dyn MetadataSink>,
    opts: PersistOptions,
) -> Result<Workers, PersistError> {
    let partitions = source.partitions()?;
    if opts.workers == 0 || opts.workers > partitions as usize {
        return Err(PersistError::NoPartitionsAvailable {
            workers: opts.workers,
            partitions,
        });
    }
    fs::create_dir_all(&opts.data_dir)?;
    let stop = Arc::new(AtomicBool::new(false));
    let stats = Arc::new(PersistStats::default());
    let mut handles = Vec::new();
    for w in 0..opts.workers {
        let owned: Vec<u16> = (0..partitions).filter(|p| *p as usize % opts.workers == w).collect();
        let (source, sink, opts, stop, stats) =
            (source.clone(), sink.clone(), opts.clone(), stop.clone(), stats.clone());
        handles.push(
            std::thread::Builder::new()
                .name(format!("persist-{w}"))
                .spawn(move || worker_loop(&*source, &*sink, &opts, &owned, &stop, &stats))?,
        );
    }
    Ok(Workers { stop, handles, stats })
}

struct Lane {
    proc: PartitionProcessor,
    next_fetch: u64,
    queue: std::collections::VecDeque<QueueRecord>,
    committed: u64,
    blocked_since: Option<Instant>,
}

fn worker_loop(
    source: &dyn RecordSource,
    sink: &dyn MetadataSink,
    opts: &PersistOptions,
    owned: &[u16],
    stop: &AtomicBool,
    stats: &PersistStats,
) -> Result<(), PersistError> {
    let mut lanes = Vec::new();
    for &p in owned {
        let committed = retry(stop, || source.committed(&opts.group, p))?;
        lanes.push(Lane {
            proc: PartitionProcessor::new(p, opts.clone()),
            next_fetch: committed,
            queue: Default::default(),
            committed,
            blocked_since: None,
        });
    }
    let mut backoff = Duration::from_millis(10);
    loop {
        let stopping = stop.load(Ordering::SeqCst);
        let mut progressed = false;
        let mut transient = false;
        for lane in lanes.iter_mut() {
            if lane.queue.is_empty() && !stopping {
                match source.fetch(&opts.group, lane.proc.partition, lane.next_fetch, opts.fetch_batch) {
                    Ok(records) => {
                        if let Some(last) = records.last() {
                            lane.next_fetch = last.offset + 1;
                        }
                        lane.queue.extend(records);
                    }
                    Err(e) => {
                        tracing::warn!(partition = lane.proc.partition, error = %e, "fetch failed");
                        transient = true;
                        continue;
                    }
                }
            }
            let mut handled = 0;
            while let Some(rec) = lane.queue.front() {
                match lane.proc.handle_record(rec, sink) {
                    Ok(outcome) => {
                        if matches!(outcome, PersistOutcome::Quarantined(_)) {
                            stats.quarantined.fetch_add(1, Ordering::Relaxed);
                        }
                        if matches!(outcome, PersistOutcome::StreamFinalized(_)) {
                            stats.finalized.fetch_add(1, Ordering::Relaxed);
                        }
                        stats.records.fetch_add(1, Ordering::Relaxed);
                        lane.blocked_since = None;
                        lane.queue.pop_front();
                        handled += 1;
                    }
                    Err(PersistError::Sink(SinkError::Dangling(m))) => {
                        let since = *lane.blocked_since.get_or_insert_with(Instant::now);
                        if since.elapsed() >= opts.dangling_timeout {
                            let rec = lane.queue.pop_front().unwrap();
                            lane.proc.quarantine(&rec, &m)?;
                            stats.quarantined.fetch_add(1, Ordering::Relaxed);
                            lane.blocked_since = None;
                            handled += 1;
                            continue;
                        }
                        transient = true;
                        break;
                    }
                    Err(e) => {
                        tracing::warn!(partition = lane.proc.partition, offset = rec.offset, error = %e, "record deferred");
                        transient = true;
                        break;
                    }
                }
            }
            if handled > 0 {
                progressed = true;
                lane.proc.sync()?;
                let next = lane.queue.front().map_or(lane.next_fetch, |r| r.offset);
                let floor = lane.proc.commit_floor(next);
                if floor > lane.committed {
                    match source.commit(&opts.group, lane.proc.partition, floor) {
                        Ok(()) => lane.committed = floor,
                        Err(e) => tracing::warn!(partition = lane.proc.partition, error = %e, "commit failed"),
                    }
                }
            }
        }
        if stopping && (lanes.iter().all(|l| l.queue.is_empty()) || !progressed) {
            for lane in lanes.iter_mut() {
                lane.proc.sync()?;
            }
            return Ok(());
        }
        if transient && !progressed {
            std::thread::sleep(backoff);
            backoff = (backoff * 2).min(Duration::from_secs(1));
        } else {
            backoff = Duration::from_millis(10);
            if !progressed {
                source.wait_for_data(opts.idle_wait);
            }
        }
    }
}

fn retry<T>(stop: &AtomicBool, mut f: impl FnMut() -> Result<T, PersistError>) -> Result<T, PersistError> {
    let mut backoff = Duration::from_millis(10);
    loop {
        match f() {
            Ok(v) => return Ok(v),
            Err(e) if e.is_transient() && !stop.load(Ordering::SeqCst) => {
                tracing::warn!(error = %e, "retrying");
                std::thread::sleep(backoff);
                backoff = (backoff * 2).min(Duration::from_secs(1));
            }
            Err(e) => return Err(e),
        }
    }
}
