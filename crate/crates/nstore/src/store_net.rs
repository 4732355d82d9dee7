//! Metadata store over the network: the primary's write port, WAL shipping
//! to replicas, and the replica-side follower.

use std::net::TcpStream;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use nstore_core::domain::EntityDocument;
use nstore_core::persist::{MetadataSink, SinkError};
use nstore_core::store::{InsertOutcome, Store, StoreError};
use nstore_core::wire::{ControlMessage, Frame, FrameType, WireError};

use crate::net::{self, Conn, Pool, Server};

const DANGLING: &str = "DanglingReference";
const SHIP_BATCH: usize = 1000;
const HEARTBEAT: Duration = Duration::from_secs(1);

pub fn serve_writes(listen: &str, store: Store) -> std::io::Result<Server> {
    let listener = net::bind(listen)?;
    Server::spawn("store-write", listener, move |stream| handle_writes(stream, &store))
}

fn handle_writes(stream: TcpStream, store: &Store) {
    let Ok(mut conn) = Conn::new(stream) else { return };
    loop {
        let frame = match conn.recv() {
            Ok(Some(f)) => f,
            Ok(None) | Err(WireError::Io(_)) => return,
            Err(e) => {
                let _ = conn.send_msg(&ControlMessage::error("MalformedFrame", e.to_string()));
                let _ = conn.flush();
                return;
            }
        };
        let reply = insert_reply(store, &frame);
        if conn.send_msg(&reply).is_err() || conn.flush().is_err() {
            return;
        }
    }
}

fn insert_reply(store: &Store, frame: &Frame) -> ControlMessage {
    if frame.frame_type != FrameType::Entity {
        return ControlMessage::error(
            "UnsupportedFrame",
            format!("{:?} frames are not accepted", frame.frame_type),
        );
    }
    let doc = match EntityDocument::from_slice(&frame.payload) {
        Ok(d) => d,
        Err(e) => return ControlMessage::error("MalformedPayload", e.to_string()),
    };
    let id = doc.entity.id;
    match store.insert_entity(&doc) {
        Ok(InsertOutcome::Inserted { lsn }) => ControlMessage::Inserted { id, lsn },
        Ok(InsertOutcome::Duplicate) => ControlMessage::Duplicate { id },
        Err(e @ StoreError::DanglingReference(_)) => ControlMessage::error(DANGLING, e.to_string()),
        Err(e) => ControlMessage::error(e.code(), e.to_string()),
    }
}

/// `MetadataSink` that writes to a remote primary.
pub struct RemoteSink {
    pool: Pool,
}

impl RemoteSink {
    pub fn new(addr: &str) -> RemoteSink {
        RemoteSink {
            pool: Pool::new(addr, Duration::from_secs(5)),
        }
    }
}

impl MetadataSink for RemoteSink {
    fn insert(&self, doc: &EntityDocument) -> Result<InsertOutcome, SinkError> {
        let frame = Frame::new(FrameType::Entity, 0, doc.to_bytes());
        let reply = self
            .pool
            .with(|c| {
                c.send(&frame)?;
                c.flush()?;
                c.recv_msg()
            })
            .map_err(|e| SinkError::Unavailable(e.to_string()))?;
        match reply {
            ControlMessage::Inserted { lsn, .. } => Ok(InsertOutcome::Inserted { lsn }),
            ControlMessage::Duplicate { .. } => Ok(InsertOutcome::Duplicate),
            ControlMessage::Error { code, message } => Err(match code.as_str() {
                DANGLING => SinkError::Dangling(message),
                "StoreClosed" | "IoFailure" => SinkError::Unavailable(message),
                _ => SinkError::Rejected { code, message },
            }),
            other => Err(SinkError::Unavailable(format!("unexpected reply {other:?}"))),
        }
    }
}

pub fn serve_replication(listen: &str, store: Store) -> std::io::Result<Server> {
    let listener = net::bind(listen)?;
    Server::spawn("store-replication", listener, move |stream| ship(stream, &store))
}

fn ship(stream: TcpStream, store: &Store) {
    let Ok(mut conn) = Conn::new(stream) else { return };
    let from = match conn.recv_msg() {
        Ok(ControlMessage::Subscribe { from_lsn }) => from_lsn,
        Ok(other) => {
            let _ = conn.send_msg(&ControlMessage::error(
                "UnsupportedControl",
                format!("expected subscribe, got {other:?}"),
            ));
            let _ = conn.flush();
            return;
        }
        Err(_) => return,
    };
    if from > store.lsn() {
        let msg = format!("replica at lsn {from} is ahead of primary at {}", store.lsn());
        let _ = conn.send_msg(&ControlMessage::error("LsnGap", msg));
        let _ = conn.flush();
        return;
    }
    tracing::info!(from_lsn = from, "replica subscribed");
    let mut cursor = from;
    while !store.is_closed() {
        let entries = store.wal_since(cursor, SHIP_BATCH);
        let msg = match entries.last() {
            Some(last) => {
                cursor = last.lsn;
                ControlMessage::Wal { entries }
            }
            None => {
                if store.wait_beyond(cursor, HEARTBEAT) > cursor {
                    continue;
                }
                ControlMessage::Heartbeat { lsn: store.lsn() }
            }
        };
        if conn.send_msg(&msg).is_err() || conn.flush().is_err() {
            return;
        }
    }
}

/// Progress of a replica relative to its upstream.
#[derive(Debug, Default)]
pub struct ReplicaStatus {
    pub connected: AtomicBool,
    pub upstream_lsn: AtomicU64,
    /// The most recent replication failure, cleared by the next applied batch.
    pub last_error: Mutex<Option<String>>,
}

/// Keeps a replica store in step with a primary, reconnecting as needed.
pub struct Follower {
    pub status: Arc<ReplicaStatus>,
    stop: Arc<AtomicBool>,
    live: Arc<Mutex<Option<TcpStream>>>,
    handle: Option<JoinHandle<()>>,
}

impl Follower {
    /// Follows a primary's replication port.
    pub fn remote(primary: String, replica: Store) -> Follower {
        let status = Arc::new(ReplicaStatus::default());
        let stop = Arc::new(AtomicBool::new(false));
        let live: Arc<Mutex<Option<TcpStream>>> = Arc::default();
        let (st, sp, lv) = (status.clone(), stop.clone(), live.clone());
        let handle = std::thread::Builder::new()
            .name("replica-follow".into())
            .spawn(move || {
                while !sp.load(Ordering::SeqCst) {
                    if let Err(e) = follow_once(&primary, &replica, &st, &lv) {
                        if !sp.load(Ordering::SeqCst) {
                            tracing::warn!(error = %e, primary = %primary, "replication interrupted; reconnecting");
                            *st.last_error.lock().unwrap() = Some(e.describe());
                        }
                    }
                    st.connected.store(false, Ordering::SeqCst);
                    *lv.lock().unwrap() = None;
                    sleep_unless(&sp, Duration::from_millis(250));
                }
            })
            .expect("spawn follower");
        Follower {
            status,
            stop,
            live,
            handle: Some(handle),
        }
    }

    /// Follows a primary in the same process.
    pub fn local(primary: Store, replica: Store) -> Follower {
        let status = Arc::new(ReplicaStatus::default());
        status.connected.store(true, Ordering::SeqCst);
        let stop = Arc::new(AtomicBool::new(false));
        let (st, sp) = (status.clone(), stop.clone());
        let handle = std::thread::Builder::new()
            .name("replica-local".into())
            .spawn(move || {
                while !sp.load(Ordering::SeqCst) && !primary.is_closed() {
                    let cursor = replica.lsn();
                    let entries = primary.wal_since(cursor, SHIP_BATCH);
                    st.upstream_lsn.store(primary.lsn(), Ordering::SeqCst);
                    if entries.is_empty() {
                        primary.wait_beyond(cursor, Duration::from_millis(200));
                        continue;
                    }
                    if let Err(e) = replica.apply_wal(&entries) {
                        tracing::error!(error = %e, "local replica apply failed");
                        sleep_unless(&sp, Duration::from_millis(250));
                    }
                }
            })
            .expect("spawn follower");
        Follower {
            status,
            stop,
            live: Arc::default(),
            handle: Some(handle),
        }
    }

    pub fn stop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(s) = self.live.lock().unwrap().take() {
            let _ = s.shutdown(std::net::Shutdown::Both);
        }
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for Follower {
    fn drop(&mut self) {
        self.stop();
    }
}

fn sleep_unless(stop: &AtomicBool, d: Duration) {
    let step = Duration::from_millis(25);
    let mut left = d;
    while !stop.load(Ordering::SeqCst) && !left.is_zero() {
        let s = left.min(step);
        std::thread::sleep(s);
        left -= s;
    }
}

#[derive(Debug, thiserror::Error)]
enum FollowError {
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("primary refused: {0}: {1}")]
    Refused(String, String),
    #[error("unexpected message {0:?}")]
    Unexpected(ControlMessage),
}

impl FollowError {
    /// Error code first, for store and refusal errors.
    fn describe(&self) -> String {
        match self {
            FollowError::Store(e) => format!("{}: {e}", e.code()),
            FollowError::Refused(code, message) => format!("{code}: {message}"),
            other => other.to_string(),
        }
    }
}

fn follow_once(
    primary: &str,
    replica: &Store,
    status: &ReplicaStatus,
    live: &Mutex<Option<TcpStream>>,
) -> Result<(), FollowError> {
    let mut conn = Conn::connect(primary, Duration::from_secs(2))?;
    conn.set_read_timeout(Some(HEARTBEAT * 5))?;
    *live.lock().unwrap() = Some(conn.try_clone_stream()?);
    conn.send_msg(&ControlMessage::Subscribe {
        from_lsn: replica.lsn(),
    })?;
    conn.flush()?;
    status.connected.store(true, Ordering::SeqCst);
    loop {
        match conn.recv_msg()? {
            ControlMessage::Wal { entries } => {
                if let Some(last) = entries.last() {
                    status.upstream_lsn.fetch_max(last.lsn, Ordering::SeqCst);
                }
                // A gap or a bad checksum fails here; the resubscribe starts
                // again from the replica's own lsn.
                replica.apply_wal(&entries)?;
                *status.last_error.lock().unwrap() = None;
            }
            ControlMessage::Heartbeat { lsn } => status.upstream_lsn.store(lsn, Ordering::SeqCst),
            ControlMessage::Error { code, message } => return Err(FollowError::Refused(code, message)),
            other => return Err(FollowError::Unexpected(other)),
        }
    }
}
