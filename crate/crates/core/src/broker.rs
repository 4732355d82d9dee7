//! Durable partitioned queue between producers and persistence workers.
//!
//! Each partition is a directory of segment files `<base_offset>.seg`. A record
//! on disk is
//!
//! ```text
//! [u32 len][u32 crc32c(rest)][rest: u64 offset | i64 enqueued_us | 16 key | frame]
//! ```
//!
//! Appends are written immediately and made durable by a background syncer
//! (every `fsync_interval` or `fsync_bytes`, whichever comes first). Only
//! durable records are visible to consumers.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::domain::{EntityId, Timestamp};
use crate::wire::{decode_frame, Frame, WireError};

const RECORD_PREFIX: usize = 8;
const RECORD_FIXED: usize = 8 + 8 + 16;

#[derive(Debug, Error)]
pub enum BrokerError {
    #[error("queue full: disk budget of {0} bytes exhausted")]
    QueueFull(u64),
    #[error("broker is shut down")]
    Shutdown,
    #[error("unknown partition {0}")]
    UnknownPartition(u16),
    #[error("offset {offset} beyond head {head}")]
    OffsetBeyondHead { offset: u64, head: u64 },
    #[error("corrupt segment {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl BrokerError {
    pub fn code(&self) -> &'static str {
        match self {
            BrokerError::QueueFull(_) => "QueueFull",
            BrokerError::Shutdown => "Shutdown",
            BrokerError::UnknownPartition(_) => "UnknownPartition",
            BrokerError::OffsetBeyondHead { .. } => "OffsetBeyondHead",
            BrokerError::Corrupt { .. } => "Corrupt",
            BrokerError::Wire(_) => "MalformedFrame",
            BrokerError::Io(_) => "IoFailure",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BrokerOptions {
    pub partitions: u16,
    pub segment_bytes: u64,
    pub disk_budget_bytes: u64,
    pub fsync_interval: Duration,
    pub fsync_bytes: u64,
}

impl Default for BrokerOptions {
    fn default() -> Self {
        BrokerOptions {
            partitions: 8,
            segment_bytes: 128 * 1024 * 1024,
            disk_budget_bytes: 8 * 1024 * 1024 * 1024,
            fsync_interval: Duration::from_millis(50),
            fsync_bytes: 8 * 1024 * 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueueRecord {
    pub offset: u64,
    pub partition: u16,
    pub key: EntityId,
    pub frame: Frame,
    pub enqueued_at: Timestamp,
}

/// Stable key-to-partition mapping.
pub fn partition_for(key: &EntityId, partitions: u16) -> u16 {
    (crc32c::crc32c(key.as_bytes()) % partitions as u32) as u16
}

struct Segment {
    base_offset: u64,
    path: PathBuf,
    file: Arc<File>,
    len: u64,
    /// File position of each record, indexed by `offset - base_offset`.
    positions: Vec<u64>,
}

struct PartitionState {
    segments: Vec<Segment>,
    next_offset: u64,
    durable_offset: u64,
    unsynced_bytes: u64,
}

struct Partition {
    id: u16,
    dir: PathBuf,
    state: Mutex<PartitionState>,
    durable_cv: Condvar,
}

struct Inner {
    dir: PathBuf,
    options: BrokerOptions,
    partitions: Vec<Partition>,
    cursors: Mutex<BTreeMap<String, Vec<u64>>>,
    disk_used: AtomicU64,
    shutdown: AtomicBool,
    sync_request: (Mutex<bool>, Condvar),
    /// Bumped whenever new records become durable.
    data_epoch: (Mutex<u64>, Condvar),
}

pub struct Broker {
    inner: Arc<Inner>,
    syncer: Mutex<Option<JoinHandle<()>>>,
}

fn segment_name(base: u64) -> String {
    format!("{base:020}.seg")
}

fn encode_record(offset: u64, enqueued_us: i64, key: &EntityId, frame: &[u8]) -> Vec<u8> {
    let rest_len = RECORD_FIXED + frame.len();
    let mut out = Vec::with_capacity(RECORD_PREFIX + rest_len);
    out.extend_from_slice(&(rest_len as u32).to_le_bytes());
    out.extend_from_slice(&[0; 4]);
    out.extend_from_slice(&offset.to_le_bytes());
    out.extend_from_slice(&enqueued_us.to_le_bytes());
    out.extend_from_slice(key.as_bytes());
    out.extend_from_slice(frame);
    let crc = crc32c::crc32c(&out[RECORD_PREFIX..]);
    out[4..8].copy_from_slice(&crc.to_le_bytes());
    out
}

/// Scans a segment, returning record positions and the valid length.
fn scan_segment(bytes: &[u8], base: u64) -> (Vec<u64>, u64) {
    let mut pos = 0usize;
    let mut positions = Vec::new();
    while bytes.len() - pos >= RECORD_PREFIX {
        let len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        let crc = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap());
        let end = pos + RECORD_PREFIX + len;
        if len < RECORD_FIXED || end > bytes.len() {
            break;
        }
        let rest = &bytes[pos + RECORD_PREFIX..end];
        if crc32c::crc32c(rest) != crc {
            break;
        }
        let offset = u64::from_le_bytes(rest[..8].try_into().unwrap());
        if offset != base + positions.len() as u64 {
            break;
        }
        positions.push(pos as u64);
        pos = end;
    }
    (positions, pos as u64)
}

/// Per-partition result of an offline log check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionCheck {
    pub partition: u16,
    pub first_offset: u64,
    pub next_offset: u64,
    pub torn_bytes: u64,
}

/// Scans every partition under `dir` without modifying anything. Only the
/// newest segment of a partition may end in a torn record.
pub fn verify(dir: &Path) -> Result<Vec<PartitionCheck>, BrokerError> {
    let mut parts: Vec<u16> = match fs::read_dir(dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().to_str()?.strip_prefix('p')?.parse().ok())
            .collect(),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    parts.sort_unstable();
    let mut out = Vec::new();
    for p in parts {
        let pdir = dir.join(format!("p{p}"));
        let mut bases: Vec<u64> = fs::read_dir(&pdir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().to_str()?.strip_suffix(".seg")?.parse().ok())
            .collect();
        bases.sort_unstable();
        let first = bases.first().copied().unwrap_or(0);
        let mut next = first;
        let mut torn = 0;
        for (i, base) in bases.iter().enumerate() {
            let path = pdir.join(segment_name(*base));
            if *base != next {
                return Err(BrokerError::Corrupt {
                    path,
                    reason: format!("segment starts at {base}, expected {next}"),
                });
            }
            let bytes = fs::read(&path)?;
            let (positions, valid) = scan_segment(&bytes, *base);
            if valid < bytes.len() as u64 {
                if i + 1 != bases.len() {
                    return Err(BrokerError::Corrupt {
                        path,
                        reason: format!("invalid record at byte {valid} in a sealed segment"),
                    });
                }
                torn = bytes.len() as u64 - valid;
            }
            next = base + positions.len() as u64;
        }
        out.push(PartitionCheck {
            partition: p,
            first_offset: first,
            next_offset: next,
            torn_bytes: torn,
        });
    }
    Ok(out)
}

fn open_segment(path: &Path) -> io::Result<File> {
    OpenOptions::new().read(true).append(true).create(true).open(path)
}

impl Partition {
    fn recover(id: u16, dir: PathBuf) -> Result<Partition, BrokerError> {
        fs::create_dir_all(&dir)?;
        let mut bases: Vec<u64> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name();
                name.to_str()?.strip_suffix(".seg")?.parse().ok()
            })
            .collect();
        bases.sort_unstable();
        if bases.is_empty() {
            bases.push(0);
        }
        let mut segments = Vec::with_capacity(bases.len());
        let mut next_offset = bases[0];
        let last = bases.len() - 1;
        for (i, base) in bases.into_iter().enumerate() {
            let path = dir.join(segment_name(base));
            if base != next_offset {
                return Err(BrokerError::Corrupt {
                    path,
                    reason: format!("segment starts at {base}, expected {next_offset}"),
                });
            }
            let bytes = fs::read(&path).unwrap_or_default();
            let (positions, valid) = scan_segment(&bytes, base);
            let file = open_segment(&path)?;
            if valid < bytes.len() as u64 {
                if i != last {
                    return Err(BrokerError::Corrupt {
                        path,
                        reason: format!("invalid record at byte {valid} in a sealed segment"),
                    });
                }
                tracing::warn!(
                    partition = id,
                    path = %path.display(),
                    dropped = bytes.len() as u64 - valid,
                    "truncating torn segment tail"
                );
                file.set_len(valid)?;
                file.sync_all()?;
            }
            next_offset = base + positions.len() as u64;
            segments.push(Segment {
                base_offset: base,
                path,
                file: Arc::new(file),
                len: valid,
                positions,
            });
        }
        Ok(Partition {
            id,
            dir,
            state: Mutex::new(PartitionState {
                segments,
                next_offset,
                durable_offset: next_offset,
                unsynced_bytes: 0,
            }),
            durable_cv: Condvar::new(),
        })
    }

    fn disk_bytes(&self) -> u64 {
        self.state.lock().unwrap().segments.iter().map(|s| s.len).sum()
    }
}

impl Broker {
    /// Opens or recovers the broker log under `dir`.
    pub fn open(dir: &Path, options: BrokerOptions) -> Result<Broker, BrokerError> {
        if options.partitions == 0 {
            return Err(BrokerError::UnknownPartition(0));
        }
        fs::create_dir_all(dir.join("cursors"))?;
        let partitions = (0..options.partitions)
            .map(|p| Partition::recover(p, dir.join(format!("p{p}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let used = partitions.iter().map(Partition::disk_bytes).sum();
        let cursors = load_cursors(&dir.join("cursors"), options.partitions)?;
        let inner = Arc::new(Inner {
            dir: dir.to_path_buf(),
            options,
            partitions,
            cursors: Mutex::new(cursors),
            disk_used: AtomicU64::new(used),
            shutdown: AtomicBool::new(false),
            sync_request: (Mutex::new(false), Condvar::new()),
            data_epoch: (Mutex::new(0), Condvar::new()),
        });
        let syncer_inner = inner.clone();
        let syncer = std::thread::Builder::new()
            .name("broker-syncer".into())
            .spawn(move || syncer_loop(&syncer_inner))?;
        tracing::info!(dir = %dir.display(), partitions = inner.options.partitions, "broker opened");
        Ok(Broker {
            inner,
            syncer: Mutex::new(Some(syncer)),
        })
    }

    pub fn partitions(&self) -> u16 {
        self.inner.options.partitions
    }

    fn partition(&self, p: u16) -> Result<&Partition, BrokerError> {
        self.inner
            .partitions
            .get(p as usize)
            .ok_or(BrokerError::UnknownPartition(p))
    }

    /// Writes the record without waiting for durability.
    pub fn append(&self, key: EntityId, frame: &Frame) -> Result<(u16, u64), BrokerError> {
        let bytes = frame.encode()?;
        self.append_encoded(key, &bytes)
    }

    /// Like [`Broker::append`] for an already encoded frame.
    pub fn append_encoded(&self, key: EntityId, frame_bytes: &[u8]) -> Result<(u16, u64), BrokerError> {
        let inner = &self.inner;
        if inner.shutdown.load(Ordering::SeqCst) {
            return Err(BrokerError::Shutdown);
        }
        let p = partition_for(&key, inner.options.partitions);
        let part = &inner.partitions[p as usize];
        let mut st = part.state.lock().unwrap();
        let offset = st.next_offset;
        let record = encode_record(offset, Timestamp::now().micros(), &key, frame_bytes);
        let size = record.len() as u64;
        if inner.disk_used.load(Ordering::SeqCst) + size > inner.options.disk_budget_bytes {
            return Err(BrokerError::QueueFull(inner.options.disk_budget_bytes));
        }
        let needs_roll = {
            let active = st.segments.last().unwrap();
            active.len > 0 && active.len + size > inner.options.segment_bytes
        };
        if needs_roll {
            self.roll(part, &mut st)?;
        }
        let active = st.segments.last_mut().unwrap();
        (&*active.file).write_all(&record)?;
        active.positions.push(active.len);
        active.len += size;
        st.next_offset += 1;
        st.unsynced_bytes += size;
        let wake_syncer = st.unsynced_bytes >= inner.options.fsync_bytes;
        drop(st);
        inner.disk_used.fetch_add(size, Ordering::SeqCst);
        if wake_syncer {
            let (lock, cv) = &inner.sync_request;
            *lock.lock().unwrap() = true;
            cv.notify_one();
        }
        Ok((p, offset))
    }

    fn roll(&self, part: &Partition, st: &mut PartitionState) -> Result<(), BrokerError> {
        // Seal the active segment durably, then start a new one.
        st.segments.last().unwrap().file.sync_data()?;
        st.durable_offset = st.next_offset;
        st.unsynced_bytes = 0;
        part.durable_cv.notify_all();
        let base = st.next_offset;
        let path = part.dir.join(segment_name(base));
        let file = open_segment(&path)?;
        File::open(&part.dir)?.sync_all()?;
        st.segments.push(Segment {
            base_offset: base,
            path,
            file: Arc::new(file),
            len: 0,
            positions: Vec::new(),
        });
        Ok(())
    }

    /// Blocks until `offset` of `partition` is durable.
    pub fn wait_durable(&self, partition: u16, offset: u64) -> Result<(), BrokerError> {
        let part = self.partition(partition)?;
        let mut st = part.state.lock().unwrap();
        while st.durable_offset <= offset {
            if self.inner.shutdown.load(Ordering::SeqCst) && st.durable_offset <= offset {
                // The final sync at shutdown makes everything durable; anything
                // still missing here was never written.
                if st.next_offset <= offset {
                    return Err(BrokerError::Shutdown);
                }
            }
            let (next, _) = part.durable_cv.wait_timeout(st, Duration::from_millis(100)).unwrap();
            st = next;
        }
        Ok(())
    }

    /// Appends and returns once the record is durable.
    pub fn publish(&self, key: EntityId, frame: &Frame) -> Result<(u16, u64), BrokerError> {
        let (p, o) = self.append(key, frame)?;
        self.wait_durable(p, o)?;
        Ok((p, o))
    }

    /// Durable head: one past the last fetchable offset.
    pub fn head(&self, partition: u16) -> Result<u64, BrokerError> {
        Ok(self.partition(partition)?.state.lock().unwrap().durable_offset)
    }

    pub fn heads(&self) -> Vec<u64> {
        (0..self.partitions()).map(|p| self.head(p).unwrap()).collect()
    }

    /// Records `[from_offset, ...)` up to `max_records`, durable ones only.
    /// Offsets already removed by retention are skipped.
    pub fn fetch(
        &self,
        _group: &str,
        partition: u16,
        from_offset: u64,
        max_records: usize,
    ) -> Result<Vec<QueueRecord>, BrokerError> {
        let part = self.partition(partition)?;
        let mut reads: Vec<(Arc<File>, PathBuf, u64, u64)> = Vec::new();
        {
            let st = part.state.lock().unwrap();
            let mut offset = from_offset.max(st.segments[0].base_offset);
            while offset < st.durable_offset && reads.len() < max_records {
                let idx = st.segments.partition_point(|s| s.base_offset <= offset) - 1;
                let seg = &st.segments[idx];
                let i = (offset - seg.base_offset) as usize;
                let start = seg.positions[i];
                let end = seg.positions.get(i + 1).copied().unwrap_or(seg.len);
                reads.push((seg.file.clone(), seg.path.clone(), start, end));
                offset += 1;
            }
        }
        let mut out = Vec::with_capacity(reads.len());
        for (file, path, start, end) in reads {
            let mut buf = vec![0u8; (end - start) as usize];
            file.read_exact_at(&mut buf, start)?;
            out.push(parse_record(&buf, partition).map_err(|reason| BrokerError::Corrupt {
                path: path.clone(),
                reason,
            })?);
        }
        Ok(out)
    }

    pub fn commit(&self, group: &str, partition: u16, offset: u64) -> Result<(), BrokerError> {
        let head = self.head(partition)?;
        if offset > head {
            return Err(BrokerError::OffsetBeyondHead { offset, head });
        }
        let mut cursors = self.inner.cursors.lock().unwrap();
        let entry = cursors
            .entry(group.to_string())
            .or_insert_with(|| vec![0; self.partitions() as usize]);
        entry[partition as usize] = offset;
        write_cursor(&self.inner.dir.join("cursors"), group, entry)?;
        let floor = cursors.values().map(|c| c[partition as usize]).min().unwrap_or(0);
        drop(cursors);
        self.retain(partition, floor)?;
        Ok(())
    }

    pub fn committed(&self, group: &str, partition: u16) -> Result<u64, BrokerError> {
        self.partition(partition)?;
        Ok(self
            .inner
            .cursors
            .lock()
            .unwrap()
            .get(group)
            .map_or(0, |c| c[partition as usize]))
    }

    /// Deletes sealed segments wholly below `floor`.
    fn retain(&self, partition: u16, floor: u64) -> Result<(), BrokerError> {
        let part = self.partition(partition)?;
        let mut st = part.state.lock().unwrap();
        while st.segments.len() > 1 && st.segments[1].base_offset <= floor {
            let seg = st.segments.remove(0);
            fs::remove_file(&seg.path)?;
            self.inner.disk_used.fetch_sub(seg.len, Ordering::SeqCst);
            tracing::debug!(partition, base = seg.base_offset, "segment retired");
        }
        Ok(())
    }

    pub fn disk_used(&self) -> u64 {
        self.inner.disk_used.load(Ordering::SeqCst)
    }

    /// Waits until new records become durable on any partition, or the timeout.
    pub fn wait_for_data(&self, timeout: Duration) {
        let (lock, cv) = &self.inner.data_epoch;
        let guard = lock.lock().unwrap();
        let seen = *guard;
        let _ = cv
            .wait_timeout_while(guard, timeout, |e| *e == seen && !self.is_shutdown())
            .unwrap();
    }

    pub fn is_shutdown(&self) -> bool {
        self.inner.shutdown.load(Ordering::SeqCst)
    }

    /// Rejects new appends, makes everything written durable and stops the syncer.
    pub fn shutdown(&self) {
        if self.inner.shutdown.swap(true, Ordering::SeqCst) {
            return;
        }
        {
            let (lock, cv) = &self.inner.sync_request;
            *lock.lock().unwrap() = true;
            cv.notify_all();
        }
        if let Some(h) = self.syncer.lock().unwrap().take() {
            let _ = h.join();
        }
        sync_all(&self.inner);
        let (lock, cv) = &self.inner.data_epoch;
        *lock.lock().unwrap() += 1;
        cv.notify_all();
        tracing::info!("broker shut down");
    }
}

impl Drop for Broker {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn parse_record(buf: &[u8], partition: u16) -> Result<QueueRecord, String> {
    if buf.len() < RECORD_PREFIX + RECORD_FIXED {
        return Err("short record".into());
    }
    let crc = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    let rest = &buf[RECORD_PREFIX..];
    if crc32c::crc32c(rest) != crc {
        return Err("record crc mismatch".into());
    }
    let offset = u64::from_le_bytes(rest[..8].try_into().unwrap());
    let enqueued = i64::from_le_bytes(rest[8..16].try_into().unwrap());
    let key = EntityId::from_bytes(rest[16..32].try_into().unwrap());
    let (frame, _) = decode_frame(&rest[32..]).map_err(|e| e.to_string())?;
    Ok(QueueRecord {
        offset,
        partition,
        key,
        frame,
        enqueued_at: Timestamp(enqueued),
    })
}

fn sync_all(inner: &Inner) {
    let mut advanced = false;
    for part in &inner.partitions {
        let (file, upto, bytes) = {
            let st = part.state.lock().unwrap();
            if st.durable_offset == st.next_offset {
                continue;
            }
            (
                st.segments.last().unwrap().file.clone(),
                st.next_offset,
                st.unsynced_bytes,
            )
        };
        if let Err(e) = file.sync_data() {
            tracing::error!(partition = part.id, error = %e, "segment fsync failed");
            continue;
        }
        let mut st = part.state.lock().unwrap();
        // A roll in between already advanced past `upto`.
        if st.durable_offset < upto {
            st.durable_offset = upto;
        }
        st.unsynced_bytes = st.unsynced_bytes.saturating_sub(bytes);
        part.durable_cv.notify_all();
        advanced = true;
    }
    if advanced {
        let (lock, cv) = &inner.data_epoch;
        *lock.lock().unwrap() += 1;
        cv.notify_all();
    }
}

fn syncer_loop(inner: &Inner) {
    let interval = inner.options.fsync_interval;
    let mut last = Instant::now();
    loop {
        {
            let (lock, cv) = &inner.sync_request;
            let mut requested = lock.lock().unwrap();
            let wait = interval.saturating_sub(last.elapsed());
            if !*requested && !wait.is_zero() {
                requested = cv.wait_timeout(requested, wait).unwrap().0;
            }
            *requested = false;
        }
        if inner.shutdown.load(Ordering::SeqCst) {
            return;
        }
        if last.elapsed() >= interval || pending_bytes(inner) >= inner.options.fsync_bytes {
            sync_all(inner);
            last = Instant::now();
        }
    }
}

fn pending_bytes(inner: &Inner) -> u64 {
    inner
        .partitions
        .iter()
        .map(|p| p.state.lock().unwrap().unsynced_bytes)
        .max()
        .unwrap_or(0)
}

fn load_cursors(dir: &Path, partitions: u16) -> Result<BTreeMap<String, Vec<u64>>, BrokerError> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(group) = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_suffix(".json"))
        else {
            continue;
        };
        let mut offsets: Vec<u64> = serde_json::from_slice(&fs::read(&path)?).map_err(|e| BrokerError::Corrupt {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        offsets.resize(partitions as usize, 0);
        out.insert(group.to_string(), offsets);
    }
    Ok(out)
}

fn write_cursor(dir: &Path, group: &str, offsets: &[u64]) -> io::Result<()> {
    let tmp = dir.join(format!(".{group}.tmp"));
    let path = dir.join(format!("{group}.json"));
    let mut f = File::create(&tmp)?;
    f.write_all(&serde_json::to_vec(offsets)?)?;
    f.sync_data()?;
    fs::rename(&tmp, &path)?;
    File::open(dir)?.sync_all()
}
