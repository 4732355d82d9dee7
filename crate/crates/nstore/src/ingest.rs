//! Producer-facing ingest: frames in, durable acks out, in order.
//!
//! A connection is pipelined. The reader appends each frame to the broker as
//! it arrives; a second thread waits for each record to become durable and
//! writes the ack. Acks therefore come back in frame order.

use std::net::TcpStream;
use std::sync::mpsc;
use std::sync::Arc;
use std::time::Duration;

use nstore_core::broker::{Broker, BrokerError};
use nstore_core::domain::EntityId;
use nstore_core::wire::{ControlMessage, Frame, FrameType, WireError};
use thiserror::Error;

use crate::net::{self, Conn, Server};

enum Pending {
    Appended(u16, u64),
    Rejected(&'static str, String),
}

pub fn serve(listen: &str, broker: Arc<Broker>) -> std::io::Result<Server> {
    let listener = net::bind(listen)?;
    Server::spawn("ingest", listener, move |stream| handle(stream, &broker))
}

fn route(broker: &Broker, frame: &Frame) -> Result<(u16, u64), (&'static str, String)> {
    let key = match frame.frame_type {
        FrameType::Control => match ControlMessage::from_frame(frame) {
            Ok(ControlMessage::EndStream { stream_id, .. }) => stream_id,
            Ok(other) => return Err(("UnsupportedControl", format!("{other:?} is not accepted on ingest"))),
            Err(e) => return Err(("MalformedPayload", e.to_string())),
        },
        _ => frame.routing_key().map_err(|e| ("MalformedPayload", e.to_string()))?,
    };
    broker.append(key, frame).map_err(|e| (e.code(), e.to_string()))
}

fn handle(stream: TcpStream, broker: &Arc<Broker>) {
    let peer = stream.peer_addr().ok();
    let Ok(mut conn) = Conn::new(stream) else { return };
    let Ok(write_half) = conn.try_clone_stream().and_then(Conn::new) else {
        return;
    };
    let (tx, rx) = mpsc::sync_channel::<Pending>(4096);
    let acker = {
        let broker = broker.clone();
        std::thread::spawn(move || ack_loop(write_half, rx, &broker))
    };
    loop {
        match conn.recv() {
            Ok(Some(frame)) => {
                let p = match route(broker, &frame) {
                    Ok((part, off)) => Pending::Appended(part, off),
                    Err((code, msg)) => Pending::Rejected(code, msg),
                };
                if tx.send(p).is_err() {
                    break;
                }
            }
            Ok(None) => break,
            Err(e) => {
                // Framing is lost; report and drop the connection.
                let _ = tx.send(Pending::Rejected("MalformedFrame", e.to_string()));
                break;
            }
        }
    }
    drop(tx);
    let _ = acker.join();
    tracing::debug!(peer = ?peer, "ingest connection closed");
}

fn ack_loop(mut out: Conn, rx: mpsc::Receiver<Pending>, broker: &Broker) {
    while let Ok(first) = rx.recv() {
        let mut next = Some(first);
        while let Some(p) = next.take() {
            let msg = match p {
                Pending::Appended(part, off) => match broker.wait_durable(part, off) {
                    Ok(()) => ControlMessage::Ack {
                        partition: part,
                        offset: off,
                    },
                    Err(e) => ControlMessage::error(e.code(), e.to_string()),
                },
                Pending::Rejected(code, msg) => ControlMessage::error(code, msg),
            };
            if out.send_msg(&msg).is_err() {
                return;
            }
            next = rx.try_recv().ok();
        }
        if out.flush().is_err() {
            return;
        }
    }
}

#[derive(Debug, Error)]
pub enum ProducerError {
    #[error("broker rejected frame: {code}: {message}")]
    Rejected { code: String, message: String },
    #[error("broker unavailable: {0}")]
    Unavailable(String),
    #[error("unexpected reply: {0:?}")]
    Protocol(ControlMessage),
}

impl ProducerError {
    pub fn code(&self) -> &str {
        match self {
            ProducerError::Rejected { code, .. } => code,
            ProducerError::Unavailable(_) => "BrokerUnavailable",
            ProducerError::Protocol(_) => "ProtocolError",
        }
    }
}

impl From<WireError> for ProducerError {
    fn from(e: WireError) -> Self {
        ProducerError::Unavailable(e.to_string())
    }
}

impl From<std::io::Error> for ProducerError {
    fn from(e: std::io::Error) -> Self {
        ProducerError::Unavailable(e.to_string())
    }
}

pub type Ack = (u16, u64);

/// Ingest client. `send` and `recv_ack` may be interleaved freely as long as
/// every sent frame's ack is eventually read.
pub struct Producer {
    conn: Conn,
    in_flight: usize,
}

impl Producer {
    pub fn connect(addr: &str) -> Result<Producer, ProducerError> {
        let conn = Conn::connect(addr, Duration::from_secs(5))?;
        conn.set_read_timeout(Some(Duration::from_secs(120)))?;
        Ok(Producer { conn, in_flight: 0 })
    }

    pub fn send(&mut self, frame: &Frame) -> Result<(), ProducerError> {
        self.conn.send(frame)?;
        self.in_flight += 1;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), ProducerError> {
        Ok(self.conn.flush()?)
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight
    }

    pub fn recv_ack(&mut self) -> Result<Ack, ProducerError> {
        self.flush()?;
        let msg = self.conn.recv_msg()?;
        self.in_flight -= 1;
        match msg {
            ControlMessage::Ack { partition, offset } => Ok((partition, offset)),
            ControlMessage::Error { code, message } => Err(ProducerError::Rejected { code, message }),
            other => Err(ProducerError::Protocol(other)),
        }
    }

    /// Sends one frame and waits for its ack.
    pub fn publish(&mut self, frame: &Frame) -> Result<Ack, ProducerError> {
        self.send(frame)?;
        self.recv_ack()
    }

    /// Pipelines `frames`, keeping at most `window` unacknowledged.
    pub fn publish_all<'a>(
        &mut self,
        frames: impl IntoIterator<Item = &'a Frame>,
        window: usize,
    ) -> Result<Vec<Ack>, ProducerError> {
        let mut acks = Vec::new();
        for f in frames {
            if self.in_flight >= window.max(1) {
                acks.push(self.recv_ack()?);
            }
            self.send(f)?;
        }
        while self.in_flight > 0 {
            acks.push(self.recv_ack()?);
        }
        Ok(acks)
    }

    pub fn end_stream(&mut self, stream_id: EntityId, chunk_count: u64) -> Result<Ack, ProducerError> {
        self.publish(&Frame::control(&ControlMessage::EndStream { stream_id, chunk_count }))
    }
}

impl From<BrokerError> for ProducerError {
    fn from(e: BrokerError) -> Self {
        ProducerError::Rejected {
            code: e.code().to_string(),
            message: e.to_string(),
        }
    }
}
