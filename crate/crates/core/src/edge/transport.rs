use std::io::Write;
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clinical::{serialize_bundle, ObservationBundle};
use crate::protocol::{read_frame, Ack, Envelope, FrameDecoder, FrameKind, Hello, HelloOk};

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("not connected")]
    NotConnected,
    #[error("connection: {0}")]
    Io(#[from] std::io::Error),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("injected fault: {0:?}")]
    Injected(Fault),
}

/// Link to the cloud. `send_bundle` returns only once the matching ack (or
/// nack) frame has been read.
pub trait Transport: Send {
    fn connect(&mut self, hello: &Hello) -> Result<HelloOk, TransportError>;
    fn send_bundle(&mut self, bundle: &ObservationBundle) -> Result<Ack, TransportError>;
    fn is_connected(&self) -> bool;
    fn disconnect(&mut self);
}

pub struct TcpTransport {
    addr: String,
    timeout: Duration,
    conn: Option<(TcpStream, FrameDecoder)>,
}

impl TcpTransport {
    pub fn new(addr: impl Into<String>) -> Self {
        TcpTransport {
            addr: addr.into(),
            timeout: Duration::from_secs(5),
            conn: None,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn exchange(&mut self, env: &Envelope, expect: FrameKind) -> Result<Envelope, TransportError> {
        let (stream, dec) = self.conn.as_mut().ok_or(TransportError::NotConnected)?;
        stream.write_all(&env.encode())?;
        let reply = read_frame(stream, dec)?.ok_or_else(|| {
            TransportError::Io(std::io::Error::from(std::io::ErrorKind::UnexpectedEof))
        })?;
        if reply.kind != expect {
            return Err(TransportError::Protocol(format!(
                "expected {expect:?}, got {:?}",
                reply.kind
            )));
        }
        Ok(reply)
    }

    /// Writes raw bytes on the open connection, for fault injection.
    fn write_raw(&mut self, bytes: &[u8]) -> Result<(), TransportError> {
        let (stream, _) = self.conn.as_mut().ok_or(TransportError::NotConnected)?;
        stream.write_all(bytes)?;
        stream.flush()?;
        Ok(())
    }
}

impl Transport for TcpTransport {
    fn connect(&mut self, hello: &Hello) -> Result<HelloOk, TransportError> {
        self.disconnect();
        let addr = self
            .addr
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| TransportError::Protocol(format!("cannot resolve {}", self.addr)))?;
        let stream = TcpStream::connect_timeout(&addr, self.timeout)?;
        stream.set_read_timeout(Some(self.timeout))?;
        stream.set_write_timeout(Some(self.timeout))?;
        let _ = stream.set_nodelay(true);
        self.conn = Some((stream, FrameDecoder::new()));
        let result = self
            .exchange(&Envelope::json(FrameKind::Hello, hello), FrameKind::HelloOk)
            .and_then(|r| {
                r.parse::<HelloOk>()
                    .map_err(|e| TransportError::Protocol(e.to_string()))
            });
        if result.is_err() {
            self.disconnect();
        }
        result
    }

    fn send_bundle(&mut self, bundle: &ObservationBundle) -> Result<Ack, TransportError> {
        let env = Envelope::new(FrameKind::Bundle, serialize_bundle(bundle));
        let result = self.exchange(&env, FrameKind::Ack).and_then(|r| {
            r.parse::<Ack>()
                .map_err(|e| TransportError::Protocol(e.to_string()))
        });
        if result.is_err() {
            self.disconnect();
        }
        result
    }

    fn is_connected(&self) -> bool {
        self.conn.is_some()
    }

    fn disconnect(&mut self) {
        if let Some((stream, _)) = self.conn.take() {
            let _ = stream.shutdown(std::net::Shutdown::Both);
        }
    }
}

/// Ways a send can fail, each ending in a dropped connection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Connection drops before anything is written.
    DropBeforeSend,
    /// The bundle reaches the server but the ack never comes back.
    LoseAck,
    /// Only part of the frame is written.
    TruncatedFrame,
}

impl Fault {
    pub const ALL: [Fault; 3] = [Fault::DropBeforeSend, Fault::LoseAck, Fault::TruncatedFrame];
}

/// Wraps a TCP transport and injects faults on chosen send attempts.
pub struct FaultyTransport {
    inner: TcpTransport,
    plan: Box<dyn FnMut(u64) -> Option<Fault> + Send>,
    attempts: u64,
    injected: Vec<(u64, Fault)>,
}

impl FaultyTransport {
    /// `plan` is asked on every send attempt (numbered from 0).
    pub fn new(
        inner: TcpTransport,
        plan: impl FnMut(u64) -> Option<Fault> + Send + 'static,
    ) -> Self {
        FaultyTransport {
            inner,
            plan: Box::new(plan),
            attempts: 0,
            injected: Vec::new(),
        }
    }

    /// Faults on `count` distinct attempts drawn from `0..horizon`.
    pub fn seeded(inner: TcpTransport, seed: u64, count: usize, horizon: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut at = std::collections::BTreeMap::new();
        while at.len() < count.min(horizon as usize) {
            at.insert(
                rng.random_range(0..horizon),
                Fault::ALL[rng.random_range(0..Fault::ALL.len())],
            );
        }
        FaultyTransport::new(inner, move |n| at.get(&n).copied())
    }

    pub fn injected(&self) -> &[(u64, Fault)] {
        &self.injected
    }
}

impl Transport for FaultyTransport {
    fn connect(&mut self, hello: &Hello) -> Result<HelloOk, TransportError> {
        self.inner.connect(hello)
    }

    fn send_bundle(&mut self, bundle: &ObservationBundle) -> Result<Ack, TransportError> {
        let n = self.attempts;
        self.attempts += 1;
        let Some(fault) = (self.plan)(n) else {
            return self.inner.send_bundle(bundle);
        };
        if !self.inner.is_connected() {
            return Err(TransportError::NotConnected);
        }
        self.injected.push((n, fault));
        let bytes = Envelope::new(FrameKind::Bundle, serialize_bundle(bundle)).encode();
        match fault {
            Fault::DropBeforeSend => {}
            Fault::LoseAck => {
                self.inner.write_raw(&bytes)?;
                // Wait for the ack to be produced, then throw the link away
                // without reading it.
                if let Some((stream, dec)) = self.inner.conn.as_mut() {
                    let _ = read_frame(stream, dec);
                }
            }
            Fault::TruncatedFrame => {
                self.inner.write_raw(&bytes[..bytes.len() / 2])?;
            }
        }
        self.inner.disconnect();
        Err(TransportError::Injected(fault))
    }

    fn is_connected(&self) -> bool {
        self.inner.is_connected()
    }

    fn disconnect(&mut self) {
        self.inner.disconnect()
    }
}
