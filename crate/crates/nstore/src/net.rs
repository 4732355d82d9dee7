//! Blocking TCP plumbing shared by the frame-speaking servers and clients.

use std::io::{self, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use nstore_core::wire::{read_frame, write_frame, ControlMessage, Frame, WireError};

pub fn bind(addr: &str) -> io::Result<TcpListener> {
    TcpListener::bind(addr).map_err(|e| io::Error::new(e.kind(), format!("binding {addr}: {e}")))
}

/// Accept loop that hands each connection to `handler` on its own thread.
pub struct Server {
    name: &'static str,
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    conns: Arc<Mutex<Vec<TcpStream>>>,
    accept: Option<JoinHandle<()>>,
}

impl Server {
    pub fn spawn<F>(name: &'static str, listener: TcpListener, handler: F) -> io::Result<Server>
    where
        F: Fn(TcpStream) + Send + Sync + 'static,
    {
        let addr = listener.local_addr()?;
        listener.set_nonblocking(true)?;
        let stop = Arc::new(AtomicBool::new(false));
        let conns: Arc<Mutex<Vec<TcpStream>>> = Arc::default();
        let handler = Arc::new(handler);
        let (stop2, conns2) = (stop.clone(), conns.clone());
        let accept = std::thread::Builder::new()
            .name(format!("{name}-accept"))
            .spawn(move || {
                while !stop2.load(Ordering::SeqCst) {
                    match listener.accept() {
                        Ok((stream, peer)) => {
                            let _ = stream.set_nonblocking(false);
                            let _ = stream.set_nodelay(true);
                            if let Ok(c) = stream.try_clone() {
                                let mut list = conns2.lock().unwrap();
                                list.retain(|s| s.peer_addr().is_ok());
                                list.push(c);
                            }
                            tracing::debug!(server = name, %peer, "connection accepted");
                            let h = handler.clone();
                            let _ = std::thread::Builder::new()
                                .name(format!("{name}-conn"))
                                .spawn(move || h(stream));
                        }
                        Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                            std::thread::sleep(Duration::from_millis(20));
                        }
                        Err(e) => {
                            tracing::warn!(server = name, error = %e, "accept failed");
                            std::thread::sleep(Duration::from_millis(50));
                        }
                    }
                }
            })?;
        tracing::info!(server = name, %addr, "listening");
        Ok(Server {
            name,
            addr,
            stop,
            conns,
            accept: Some(accept),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting and closes every open connection.
    pub fn stop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
        for c in self.conns.lock().unwrap().drain(..) {
            let _ = c.shutdown(std::net::Shutdown::Both);
        }
        tracing::info!(server = self.name, "stopped");
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if self.accept.is_some() {
            self.stop();
        }
    }
}

/// A framed, buffered duplex connection.
pub struct Conn {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl Conn {
    pub fn new(stream: TcpStream) -> io::Result<Conn> {
        let _ = stream.set_nodelay(true);
        Ok(Conn {
            reader: BufReader::with_capacity(256 * 1024, stream.try_clone()?),
            writer: BufWriter::with_capacity(256 * 1024, stream),
        })
    }

    pub fn connect(addr: &str, timeout: Duration) -> io::Result<Conn> {
        let mut last = io::Error::new(io::ErrorKind::NotFound, format!("{addr} did not resolve"));
        for a in addr.to_socket_addrs()? {
            match TcpStream::connect_timeout(&a, timeout) {
                Ok(s) => return Conn::new(s),
                Err(e) => last = e,
            }
        }
        Err(last)
    }

    pub fn set_read_timeout(&self, t: Option<Duration>) -> io::Result<()> {
        self.reader.get_ref().set_read_timeout(t)
    }

    pub fn send(&mut self, frame: &Frame) -> Result<(), WireError> {
        write_frame(&mut self.writer, frame)
    }

    pub fn send_msg(&mut self, msg: &ControlMessage) -> Result<(), WireError> {
        self.send(&Frame::control(msg))
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.writer.flush()
    }

    /// Next frame, or `None` on a clean close.
    pub fn recv(&mut self) -> Result<Option<Frame>, WireError> {
        read_frame(&mut self.reader)
    }

    pub fn recv_msg(&mut self) -> Result<ControlMessage, WireError> {
        match self.recv()? {
            Some(f) => ControlMessage::from_frame(&f),
            None => Err(WireError::Io(io::Error::new(
                io::ErrorKind::UnexpectedEof,
                "connection closed",
            ))),
        }
    }

    /// Sends one control request and reads one control reply.
    pub fn call(&mut self, msg: &ControlMessage) -> Result<ControlMessage, WireError> {
        self.send_msg(msg)?;
        self.flush()?;
        self.recv_msg()
    }

    /// Another handle on the same socket.
    pub fn try_clone_stream(&self) -> io::Result<TcpStream> {
        self.writer.get_ref().try_clone()
    }

    pub fn shutdown(&self) {
        let _ = self.writer.get_ref().shutdown(std::net::Shutdown::Both);
    }
}

/// Reusable connections to one address.
pub struct Pool {
    addr: String,
    timeout: Duration,
    idle: Mutex<Vec<Conn>>,
}

impl Pool {
    pub fn new(addr: impl Into<String>, timeout: Duration) -> Pool {
        Pool {
            addr: addr.into(),
            timeout,
            idle: Mutex::new(Vec::new()),
        }
    }

    pub fn addr(&self) -> &str {
        &self.addr
    }

    /// Runs `f` on a pooled connection. A connection that errors is dropped.
    pub fn with<T>(&self, f: impl FnOnce(&mut Conn) -> Result<T, WireError>) -> Result<T, WireError> {
        let pooled = self.idle.lock().unwrap().pop();
        let mut conn = match pooled {
            Some(c) => c,
            None => {
                let c = Conn::connect(&self.addr, self.timeout)?;
                c.set_read_timeout(Some(Duration::from_secs(60)))?;
                c
            }
        };
        let out = f(&mut conn)?;
        self.idle.lock().unwrap().push(conn);
        Ok(out)
    }
}
