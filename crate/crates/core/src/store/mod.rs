//! Embedded metadata store: single writer, lock-free-for-readers snapshots,
//! write-ahead log with periodic snapshots, and WAL shipping to replicas.

mod predicate;
mod read;
mod state;
mod wal;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::time::Duration;

use thiserror::Error;

pub use predicate::{compare, Compiled, Field, Op, Operand, Predicate, MAX_DEPTH};
pub use read::{
    browse, check_hop, check_page_size, conditional, filter, hop, joint, paginate, Direction, Page, MAX_PAGE_SIZE,
};
pub use state::State;
pub use wal::{WalEntry, WalOp};

use crate::domain::{DocumentError, EntityDocument, EntityId, RelationKind, Timestamp};
use wal::WalFile;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("integrity violation: {0}")]
    IntegrityViolation(String),
    #[error("integrity violation: dangling reference: {0}")]
    DanglingReference(String),
    #[error("cycle violation: {0}")]
    CycleViolation(String),
    #[error("batch mixes new entities with existing entity {0}")]
    PartialDuplicate(EntityId),
    #[error("entity {0} not found")]
    NotFound(EntityId),
    #[error("entity {0} still has relations")]
    HasRelations(EntityId),
    #[error("store is closed")]
    StoreClosed,
    #[error("store is a read-only replica")]
    ReadOnly,
    #[error("page_size {0} outside 1..=1000")]
    PageSizeOutOfRange(usize),
    #[error("unknown field {0:?}")]
    UnknownField(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("predicate depth {0} exceeds 16")]
    PredicateTooDeep(usize),
    #[error("relation topic mismatch: {0}")]
    RelationTopicMismatch(String),
    #[error("lsn gap: expected {expected}, found {found}")]
    LsnGap { expected: u64, found: u64 },
    #[error("crc mismatch in wal entry {0}")]
    CrcMismatch(u64),
    #[error("recovery failed: {0}")]
    RecoveryFailure(String),
    #[error(transparent)]
    Document(#[from] DocumentError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl StoreError {
    /// Stable machine-readable code used in error responses.
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::IntegrityViolation(_) | StoreError::DanglingReference(_) => "IntegrityViolation",
            StoreError::CycleViolation(_) => "CycleViolation",
            StoreError::PartialDuplicate(_) => "PartialDuplicate",
            StoreError::NotFound(_) => "NotFound",
            StoreError::HasRelations(_) => "HasRelations",
            StoreError::StoreClosed => "StoreClosed",
            StoreError::ReadOnly => "ReadOnly",
            StoreError::PageSizeOutOfRange(_) => "PageSizeOutOfRange",
            StoreError::UnknownField(_) => "UnknownField",
            StoreError::TypeMismatch(_) => "TypeMismatch",
            StoreError::PredicateTooDeep(_) => "PredicateTooDeep",
            StoreError::RelationTopicMismatch(_) => "RelationTopicMismatch",
            StoreError::LsnGap { .. } => "LsnGap",
            StoreError::CrcMismatch(_) => "CrcMismatch",
            StoreError::RecoveryFailure(_) => "RecoveryFailure",
            StoreError::Document(_) => "MalformedPayload",
            StoreError::Io(_) => "IoFailure",
        }
    }
}

#[derive(Debug, Clone)]
pub struct StoreOptions {
    pub snapshot_every_n_entries: u64,
}

impl Default for StoreOptions {
    fn default() -> Self {
        StoreOptions {
            snapshot_every_n_entries: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted { lsn: u64 },
    Duplicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Primary,
    Replica,
}

struct Batch {
    first_lsn: u64,
    entries: Arc<Vec<WalEntry>>,
}

struct Writer {
    wal: Option<WalFile>,
    meta_dir: Option<PathBuf>,
    history: Vec<Batch>,
    since_snapshot: u64,
    options: StoreOptions,
}

struct Inner {
    role: Role,
    state: RwLock<Arc<State>>,
    writer: Mutex<Writer>,
    committed: Mutex<u64>,
    committed_cv: Condvar,
    closed: AtomicBool,
}

#[derive(Clone)]
pub struct Store {
    inner: Arc<Inner>,
}

const SNAPSHOT_PREFIX: &str = "snapshot-";

impl Store {
    fn build(role: Role, state: State, writer: Writer) -> Store {
        let lsn = state.lsn();
        Store {
            inner: Arc::new(Inner {
                role,
                state: RwLock::new(Arc::new(state)),
                writer: Mutex::new(writer),
                committed: Mutex::new(lsn),
                committed_cv: Condvar::new(),
                closed: AtomicBool::new(false),
            }),
        }
    }

    /// Volatile primary, for tests and tools.
    pub fn memory() -> Store {
        Self::build(
            Role::Primary,
            State::default(),
            Writer {
                wal: None,
                meta_dir: None,
                history: Vec::new(),
                since_snapshot: 0,
                options: StoreOptions::default(),
            },
        )
    }

    /// Volatile replica; it catches up by applying shipped WAL entries.
    pub fn replica() -> Store {
        let mut s = Self::memory();
        Arc::get_mut(&mut s.inner).unwrap().role = Role::Replica;
        s
    }

    /// Opens the durable primary under `<data_dir>/meta`, recovering from the
    /// newest valid snapshot plus the WAL.
    pub fn open(data_dir: &Path, options: StoreOptions) -> Result<Store, StoreError> {
        let meta_dir = data_dir.join("meta");
        fs::create_dir_all(&meta_dir)?;
        let (wal, scan) = WalFile::open(&meta_dir.join("wal.log"))?;
        let wal_last = scan.batches.last().and_then(|b| b.last()).map_or(0, |e| e.lsn);
        let mut state = match load_snapshot(&meta_dir, wal_last)? {
            Some(s) => s,
            None => State::default(),
        };
        let mut history = Vec::with_capacity(scan.batches.len());
        for batch in scan.batches {
            let Some(first) = batch.first() else { continue };
            let first_lsn = first.lsn;
            if first_lsn > state.lsn() {
                state
                    .apply_entries(&batch)
                    .map_err(|e| StoreError::RecoveryFailure(format!("replaying wal at lsn {first_lsn}: {e}")))?;
            }
            history.push(Batch {
                first_lsn,
                entries: Arc::new(batch),
            });
        }
        tracing::info!(
            lsn = state.lsn(),
            entities = state.entity_count(),
            "metadata store recovered"
        );
        Ok(Self::build(
            Role::Primary,
            state,
            Writer {
                wal: Some(wal),
                meta_dir: Some(meta_dir),
                history,
                since_snapshot: 0,
                options,
            },
        ))
    }

    pub fn is_replica(&self) -> bool {
        self.inner.role == Role::Replica
    }

    /// The current committed state. Readers never block the writer.
    pub fn snapshot(&self) -> Arc<State> {
        self.inner.state.read().unwrap().clone()
    }

    pub fn lsn(&self) -> u64 {
        self.snapshot().lsn()
    }

    pub fn close(&self) {
        self.inner.closed.store(true, Ordering::SeqCst);
        self.inner.committed_cv.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.inner.closed.load(Ordering::SeqCst)
    }

    pub fn insert_entity(&self, doc: &EntityDocument) -> Result<InsertOutcome, StoreError> {
        self.insert_batch(std::slice::from_ref(doc))
    }

    /// Commits entities, their attribute blocks and relations atomically.
    /// Relations may reference entities of the same batch. Replaying a batch
    /// whose entities all exist is a no-op reported as `Duplicate`.
    pub fn insert_batch(&self, docs: &[EntityDocument]) -> Result<InsertOutcome, StoreError> {
        if self.inner.role == Role::Replica {
            return Err(StoreError::ReadOnly);
        }
        if docs.is_empty() {
            return Ok(InsertOutcome::Duplicate);
        }
        for d in docs {
            d.validate()?;
        }
        let mut writer = self.inner.writer.lock().unwrap();
        if self.is_closed() {
            return Err(StoreError::StoreClosed);
        }
        let current = self.snapshot();
        let existing: Vec<EntityId> = docs
            .iter()
            .map(|d| d.entity.id)
            .filter(|id| current.contains(id))
            .collect();
        if existing.len() == docs.len() {
            return Ok(InsertOutcome::Duplicate);
        }
        if let Some(id) = existing.first() {
            return Err(StoreError::PartialDuplicate(*id));
        }
        let mut ids = std::collections::HashSet::new();
        for d in docs {
            if !ids.insert(d.entity.id) {
                return Err(StoreError::IntegrityViolation(format!(
                    "entity {} appears twice in one batch",
                    d.entity.id
                )));
            }
        }
        // Relations already stored (listed again from the other end) are skipped.
        let trimmed: Vec<EntityDocument> = docs
            .iter()
            .map(|d| EntityDocument {
                entity: d.entity.clone(),
                relations: d
                    .relations
                    .iter()
                    .filter(|r| !current.relations_of(&r.from_id).contains(r))
                    .copied()
                    .collect(),
            })
            .collect();
        let entries = state::batch_entries(
            &trimmed,
            current.lsn() + 1,
            current.next_relation_id(),
            Timestamp::now(),
        );
        let lsn = self.commit(&mut writer, &current, entries)?;
        Ok(InsertOutcome::Inserted { lsn })
    }

    /// Adds one relation between existing entities.
    pub fn insert_relation(&self, kind: RelationKind, from_id: EntityId, to_id: EntityId) -> Result<u64, StoreError> {
        if self.inner.role == Role::Replica {
            return Err(StoreError::ReadOnly);
        }
        let mut writer = self.inner.writer.lock().unwrap();
        if self.is_closed() {
            return Err(StoreError::StoreClosed);
        }
        let current = self.snapshot();
        let entry = state::relation_entry(current.lsn() + 1, current.next_relation_id(), kind, from_id, to_id);
        self.commit(&mut writer, &current, vec![entry])
    }

    /// Deletes a leaf entity that has no relations.
    pub fn delete_entity(&self, id: EntityId) -> Result<u64, StoreError> {
        if self.inner.role == Role::Replica {
            return Err(StoreError::ReadOnly);
        }
        let mut writer = self.inner.writer.lock().unwrap();
        if self.is_closed() {
            return Err(StoreError::StoreClosed);
        }
        let current = self.snapshot();
        let entries = vec![state::delete_entry(current.lsn() + 1, id)];
        self.commit(&mut writer, &current, entries)
    }

    /// Applies shipped entries as one atomic step. Entries must continue at
    /// `lsn + 1`.
    pub fn apply_wal(&self, entries: &[WalEntry]) -> Result<u64, StoreError> {
        let mut writer = self.inner.writer.lock().unwrap();
        if self.is_closed() {
            return Err(StoreError::StoreClosed);
        }
        let current = self.snapshot();
        if entries.is_empty() {
            return Ok(current.lsn());
        }
        self.commit(&mut writer, &current, entries.to_vec())
    }

    fn commit(&self, writer: &mut Writer, current: &State, entries: Vec<WalEntry>) -> Result<u64, StoreError> {
        let mut next = current.clone();
        next.apply_entries(&entries)?;
        if let Some(wal) = writer.wal.as_mut() {
            wal.append(&entries)?;
        }
        let lsn = next.lsn();
        let n = entries.len() as u64;
        writer.history.push(Batch {
            first_lsn: entries[0].lsn,
            entries: Arc::new(entries),
        });
        let next = Arc::new(next);
        *self.inner.state.write().unwrap() = next.clone();
        *self.inner.committed.lock().unwrap() = lsn;
        self.inner.committed_cv.notify_all();
        writer.since_snapshot += n;
        if writer.since_snapshot >= writer.options.snapshot_every_n_entries {
            if let Some(dir) = writer.meta_dir.clone() {
                writer.since_snapshot = 0;
                if let Err(e) = write_snapshot(&dir, &next) {
                    tracing::warn!(error = %e, "snapshot failed; wal remains authoritative");
                }
            }
        }
        Ok(lsn)
    }

    /// Whole committed batches with entries after `after_lsn`, at least one
    /// batch and then up to roughly `max_entries` entries.
    pub fn wal_since(&self, after_lsn: u64, max_entries: usize) -> Vec<WalEntry> {
        let writer = self.inner.writer.lock().unwrap();
        let h = &writer.history;
        // First batch whose last entry is beyond `after_lsn`.
        let start = h.partition_point(|b| b.first_lsn + b.entries.len() as u64 - 1 <= after_lsn);
        let mut out = Vec::new();
        for b in &h[start..] {
            if !out.is_empty() && out.len() + b.entries.len() > max_entries {
                break;
            }
            out.extend(b.entries.iter().filter(|e| e.lsn > after_lsn).cloned());
        }
        out
    }

    /// Blocks until the committed LSN exceeds `lsn`, the timeout passes, or
    /// the store closes. Returns the committed LSN.
    pub fn wait_beyond(&self, lsn: u64, timeout: Duration) -> u64 {
        let guard = self.inner.committed.lock().unwrap();
        let (guard, _) = self
            .inner
            .committed_cv
            .wait_timeout_while(guard, timeout, |c| *c <= lsn && !self.is_closed())
            .unwrap();
        *guard
    }
}

/// Outcome of an offline WAL audit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreCheck {
    pub lsn: u64,
    pub entities: usize,
    pub relations: usize,
    pub torn_bytes: u64,
    pub problems: Vec<String>,
}

/// Replays `<data_dir>/meta/wal.log` from scratch without modifying anything
/// and audits the resulting state. A torn tail is reported, not an error.
pub fn verify(data_dir: &Path) -> Result<StoreCheck, StoreError> {
    let path = data_dir.join("meta").join("wal.log");
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let scan = wal::scan(&bytes)?;
    let mut state = State::default();
    for batch in &scan.batches {
        state
            .apply_entries(batch)
            .map_err(|e| StoreError::RecoveryFailure(format!("replaying wal: {e}")))?;
    }
    let mut problems = state.audit();
    let meta = data_dir.join("meta");
    if meta.exists() {
        if let Some(snap) = load_snapshot(&meta, state.lsn())? {
            let mut replay = State::default();
            for batch in scan
                .batches
                .iter()
                .take_while(|b| b.last().is_some_and(|e| e.lsn <= snap.lsn()))
            {
                replay.apply_entries(batch)?;
            }
            if replay.lsn() == snap.lsn() && replay.to_snapshot() != snap.to_snapshot() {
                problems.push(format!("snapshot at lsn {} disagrees with wal replay", snap.lsn()));
            }
        }
    }
    Ok(StoreCheck {
        lsn: state.lsn(),
        entities: state.entity_count(),
        relations: state.relation_count(),
        torn_bytes: scan.torn_bytes,
        problems,
    })
}

fn snapshot_lsn(name: &str) -> Option<u64> {
    name.strip_prefix(SNAPSHOT_PREFIX)?.parse().ok()
}

fn write_snapshot(dir: &Path, state: &State) -> io::Result<()> {
    let body = serde_json::to_vec(&state.to_snapshot()).map_err(io::Error::other)?;
    let final_path = dir.join(format!("{SNAPSHOT_PREFIX}{}", state.lsn()));
    let tmp = dir.join(format!(".{SNAPSHOT_PREFIX}{}.tmp", state.lsn()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&crc32c::crc32c(&body).to_le_bytes())?;
        f.write_all(&body)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, &final_path)?;
    fs::File::open(dir)?.sync_all()?;
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name();
        if let Some(l) = name.to_str().and_then(snapshot_lsn) {
            if l < state.lsn() {
                let _ = fs::remove_file(entry.path());
            }
        }
    }
    tracing::info!(lsn = state.lsn(), "snapshot written");
    Ok(())
}

/// Newest snapshot that verifies and does not run ahead of the WAL.
fn load_snapshot(dir: &Path, wal_last: u64) -> Result<Option<State>, StoreError> {
    let mut candidates: Vec<(u64, PathBuf)> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let l = e.file_name().to_str().and_then(snapshot_lsn)?;
            Some((l, e.path()))
        })
        .filter(|(l, _)| *l <= wal_last)
        .collect();
    candidates.sort_by(|a, b| b.0.cmp(&a.0));
    for (lsn, path) in candidates {
        let bytes = fs::read(&path)?;
        if bytes.len() < 4 || crc32c::crc32c(&bytes[4..]).to_le_bytes() != bytes[..4] {
            tracing::warn!(path = %path.display(), "ignoring corrupt snapshot");
            continue;
        }
        let snap: state::Snapshot = match serde_json::from_slice(&bytes[4..]) {
            Ok(s) => s,
            Err(e) => {
                tracing::warn!(path = %path.display(), error = %e, "ignoring unreadable snapshot");
                continue;
            }
        };
        if snap.lsn != lsn {
            continue;
        }
        return State::from_snapshot(snap).map(Some);
    }
    Ok(None)
}
