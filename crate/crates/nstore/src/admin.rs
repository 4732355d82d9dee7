//! Broker admin port: partition info, fetch, commit, positions.
//!
//! A fetch reply is a `Records` control frame followed by the raw record
//! frames in offset order.

use std::net::TcpStream;
use std::sync::Arc;
use std::time::Duration;

use nstore_core::broker::{Broker, QueueRecord};
use nstore_core::domain::Timestamp;
use nstore_core::persist::{PersistError, RecordSource};
use nstore_core::wire::{ControlMessage, RecordMeta, WireError};

use crate::net::{self, Conn, Pool, Server};

pub const MAX_FETCH: usize = 1024;

pub fn serve(listen: &str, broker: Arc<Broker>) -> std::io::Result<Server> {
    let listener = net::bind(listen)?;
    Server::spawn("broker-admin", listener, move |stream| handle(stream, &broker))
}

fn handle(stream: TcpStream, broker: &Broker) {
    let Ok(mut conn) = Conn::new(stream) else { return };
    loop {
        let msg = match conn.recv_msg() {
            Ok(m) => m,
            Err(WireError::Io(_)) => return,
            Err(e) => {
                let _ = conn.send_msg(&ControlMessage::error("MalformedFrame", e.to_string()));
                let _ = conn.flush();
                return;
            }
        };
        if reply(&mut conn, broker, msg).and_then(|_| Ok(conn.flush()?)).is_err() {
            return;
        }
    }
}

fn reply(conn: &mut Conn, broker: &Broker, msg: ControlMessage) -> Result<(), WireError> {
    let out = match msg {
        ControlMessage::Partitions => ControlMessage::PartitionInfo {
            partitions: broker.partitions(),
            heads: broker.heads(),
        },
        ControlMessage::Fetch {
            group,
            partition,
            from_offset,
            max_records,
        } => {
            let max = (max_records as usize).clamp(1, MAX_FETCH);
            match broker.fetch(&group, partition, from_offset, max) {
                Ok(records) => {
                    conn.send_msg(&ControlMessage::Records {
                        partition,
                        records: records
                            .iter()
                            .map(|r| RecordMeta {
                                offset: r.offset,
                                key: r.key,
                                enqueued_at_us: r.enqueued_at.micros(),
                            })
                            .collect(),
                    })?;
                    for r in &records {
                        conn.send(&r.frame)?;
                    }
                    return Ok(());
                }
                Err(e) => ControlMessage::error(e.code(), e.to_string()),
            }
        }
        ControlMessage::Commit {
            group,
            partition,
            offset,
        } => match broker.commit(&group, partition, offset) {
            Ok(()) => ControlMessage::Committed {
                group,
                partition,
                offset,
            },
            Err(e) => ControlMessage::error(e.code(), e.to_string()),
        },
        ControlMessage::Position { group, partition } => match broker.committed(&group, partition) {
            Ok(offset) => ControlMessage::Committed {
                group,
                partition,
                offset,
            },
            Err(e) => ControlMessage::error(e.code(), e.to_string()),
        },
        other => ControlMessage::error("UnsupportedControl", format!("{other:?} is not an admin request")),
    };
    conn.send_msg(&out)
}

/// `RecordSource` backed by a remote broker's admin port.
pub struct RemoteSource {
    pool: Pool,
}

impl RemoteSource {
    pub fn new(addr: &str) -> RemoteSource {
        RemoteSource {
            pool: Pool::new(addr, Duration::from_secs(5)),
        }
    }

    fn call(&self, msg: &ControlMessage) -> Result<ControlMessage, PersistError> {
        let reply = self.pool.with(|c| c.call(msg)).map_err(source_err)?;
        match reply {
            ControlMessage::Error { code, message } => Err(PersistError::Source(format!("{code}: {message}"))),
            other => Ok(other),
        }
    }
}

fn source_err(e: WireError) -> PersistError {
    PersistError::Source(e.to_string())
}

fn unexpected(m: ControlMessage) -> PersistError {
    PersistError::Source(format!("unexpected reply {m:?}"))
}

impl RecordSource for RemoteSource {
    fn partitions(&self) -> Result<u16, PersistError> {
        match self.call(&ControlMessage::Partitions)? {
            ControlMessage::PartitionInfo { partitions, .. } => Ok(partitions),
            m => Err(unexpected(m)),
        }
    }

    fn fetch(&self, group: &str, partition: u16, from: u64, max: usize) -> Result<Vec<QueueRecord>, PersistError> {
        let req = ControlMessage::Fetch {
            group: group.to_string(),
            partition,
            from_offset: from,
            max_records: max.min(MAX_FETCH) as u32,
        };
        let reply = self.pool.with(|c| {
            let head = c.call(&req)?;
            let ControlMessage::Records { records, .. } = head else {
                return Ok(Err(head));
            };
            let mut out = Vec::with_capacity(records.len());
            for meta in records {
                let frame = c.recv()?.ok_or_else(|| {
                    WireError::Io(std::io::Error::new(
                        std::io::ErrorKind::UnexpectedEof,
                        "fetch truncated",
                    ))
                })?;
                out.push(QueueRecord {
                    offset: meta.offset,
                    partition,
                    key: meta.key,
                    frame,
                    enqueued_at: Timestamp(meta.enqueued_at_us),
                });
            }
            Ok(Ok(out))
        });
        match reply.map_err(source_err)? {
            Ok(records) => Ok(records),
            Err(ControlMessage::Error { code, message }) => Err(PersistError::Source(format!("{code}: {message}"))),
            Err(m) => Err(unexpected(m)),
        }
    }

    fn commit(&self, group: &str, partition: u16, offset: u64) -> Result<(), PersistError> {
        match self.call(&ControlMessage::Commit {
            group: group.to_string(),
            partition,
            offset,
        })? {
            ControlMessage::Committed { .. } => Ok(()),
            m => Err(unexpected(m)),
        }
    }

    fn committed(&self, group: &str, partition: u16) -> Result<u64, PersistError> {
        match self.call(&ControlMessage::Position {
            group: group.to_string(),
            partition,
        })? {
            ControlMessage::Committed { offset, .. } => Ok(offset),
            m => Err(unexpected(m)),
        }
    }

    fn wait_for_data(&self, timeout: Duration) {
        std::thread::sleep(timeout.min(Duration::from_millis(50)));
    }
}
