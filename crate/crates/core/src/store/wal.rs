//! Write-ahead log: one record per committed batch.
//!
//! ```text
//! [u32 body_len LE][u32 crc32c(body) LE][body: JSON array of WalEntry]
//! ```
//!
//! Each entry additionally carries its own CRC so that entries shipped to a
//! replica can be verified one by one.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::StoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WalOp {
    InsertEntity,
    InsertAttribute,
    InsertRelation,
    DeleteEntity,
}

impl WalOp {
    fn code(self) -> u8 {
        match self {
            WalOp::InsertEntity => 1,
            WalOp::InsertAttribute => 2,
            WalOp::InsertRelation => 3,
            WalOp::DeleteEntity => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalEntry {
    pub lsn: u64,
    pub op: WalOp,
    /// Canonical JSON of the affected row.
    pub payload: String,
    pub crc: u32,
}

impl WalEntry {
    pub fn new(lsn: u64, op: WalOp, payload: String) -> Self {
        let crc = entry_crc(lsn, op, &payload);
        WalEntry { lsn, op, payload, crc }
    }

    pub fn verify(&self) -> bool {
        entry_crc(self.lsn, self.op, &self.payload) == self.crc
    }
}

fn entry_crc(lsn: u64, op: WalOp, payload: &str) -> u32 {
    let crc = crc32c::crc32c(&lsn.to_le_bytes());
    let crc = crc32c::crc32c_append(crc, &[op.code()]);
    crc32c::crc32c_append(crc, payload.as_bytes())
}

pub(crate) fn encode_batch(entries: &[WalEntry]) -> Vec<u8> {
    let body = serde_json::to_vec(entries).expect("wal entries serialize");
    let mut out = Vec::with_capacity(body.len() + 8);
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(&crc32c::crc32c(&body).to_le_bytes());
    out.extend_from_slice(&body);
    out
}

/// Result of scanning a WAL file.
pub(crate) struct WalScan {
    pub batches: Vec<Vec<WalEntry>>,
    /// Length of the valid prefix.
    pub valid_len: u64,
    /// Bytes past the valid prefix that were discarded as a torn tail.
    pub torn_bytes: u64,
}

/// Scans `bytes` batch by batch. An incomplete or corrupt final record is a
/// torn write; a corrupt record followed by more data is unrecoverable.
pub(crate) fn scan(bytes: &[u8]) -> Result<WalScan, StoreError> {
    let mut pos = 0usize;
    let mut batches = Vec::new();
    let mut expected_lsn: Option<u64> = None;
    while pos < bytes.len() {
        let rest = &bytes[pos..];
        if rest.len() < 8 {
            break;
        }
        let len = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
        let crc = u32::from_le_bytes(rest[4..8].try_into().unwrap());
        if rest.len() < 8 + len {
            break;
        }
        let body = &rest[8..8 + len];
        let end = pos + 8 + len;
        if crc32c::crc32c(body) != crc {
            if end == bytes.len() {
                break;
            }
            return Err(StoreError::RecoveryFailure(format!(
                "wal record at byte {pos} fails its checksum and is followed by more data"
            )));
        }
        let entries: Vec<WalEntry> = serde_json::from_slice(body)
            .map_err(|e| StoreError::RecoveryFailure(format!("wal record at byte {pos} does not parse: {e}")))?;
        for e in &entries {
            if !e.verify() {
                return Err(StoreError::RecoveryFailure(format!("entry {} crc mismatch", e.lsn)));
            }
            if let Some(want) = expected_lsn {
                if e.lsn != want {
                    return Err(StoreError::RecoveryFailure(format!(
                        "wal lsn {} follows {}",
                        e.lsn,
                        want - 1
                    )));
                }
            }
            expected_lsn = Some(e.lsn + 1);
        }
        batches.push(entries);
        pos = end;
    }
    Ok(WalScan {
        batches,
        valid_len: pos as u64,
        torn_bytes: (bytes.len() - pos) as u64,
    })
}

pub(crate) struct WalFile {
    file: File,
}

impl WalFile {
    /// Opens (creating if needed), scans, and truncates any torn tail.
    pub fn open(path: &Path) -> Result<(WalFile, WalScan), StoreError> {
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let scan = scan(&bytes)?;
        if scan.torn_bytes > 0 {
            tracing::warn!(
                path = %path.display(),
                torn_bytes = scan.torn_bytes,
                "truncating torn wal tail"
            );
            file.set_len(scan.valid_len)?;
            file.sync_all()?;
        }
        file.seek(SeekFrom::End(0))?;
        Ok((WalFile { file }, scan))
    }

    pub fn append(&mut self, entries: &[WalEntry]) -> io::Result<()> {
        self.file.write_all(&encode_batch(entries))?;
        self.file.sync_data()
    }
}
