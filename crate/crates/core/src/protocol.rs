//! Length-prefixed envelopes carrying JSON payloads between edge and cloud.
//!
//! Layout: magic `ICUS`, version byte, kind byte, big-endian `u32` payload
//! length, payload.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

pub const MAGIC: [u8; 4] = *b"ICUS";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 10;
/// Upper bound on a single payload; larger lengths mean a corrupt stream.
pub const MAX_PAYLOAD: u32 = 16 * 1024 * 1024;
pub const DEFAULT_PORT: u16 = 7071;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum FrameKind {
    Bundle = 1,
    Ack = 2,
    Hello = 3,
    HelloOk = 4,
}

impl FrameKind {
    pub fn from_byte(b: u8) -> Option<FrameKind> {
        Some(match b {
            1 => FrameKind::Bundle,
            2 => FrameKind::Ack,
            3 => FrameKind::Hello,
            4 => FrameKind::HelloOk,
            _ => return None,
        })
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown frame kind {0}")]
    UnknownKind(u8),
    #[error("payload length {0} exceeds limit")]
    TooLarge(u32),
    #[error("unexpected {0:?} frame")]
    Unexpected(FrameKind),
    #[error("malformed {kind:?} payload: {message}")]
    Payload { kind: FrameKind, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub kind: FrameKind,
    pub payload: Vec<u8>,
}

impl Envelope {
    pub fn new(kind: FrameKind, payload: Vec<u8>) -> Self {
        Envelope { kind, payload }
    }

    pub fn json<T: Serialize>(kind: FrameKind, body: &T) -> Self {
        Envelope {
            kind,
            payload: serde_json::to_vec(body).expect("payload serializes"),
        }
    }

    pub fn parse<T: for<'de> Deserialize<'de>>(&self) -> Result<T, ProtocolError> {
        serde_json::from_slice(&self.payload).map_err(|e| ProtocolError::Payload {
            kind: self.kind,
            message: e.to_string(),
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.kind as u8);
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }
}

/// Incremental decoder; feed it bytes in any chunking.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        FrameDecoder::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Bytes received but not yet consumed by a complete frame.
    pub fn pending(&self) -> usize {
        self.buf.len()
    }

    /// Next complete frame, or `None` when more bytes are needed. Header
    /// errors are reported as soon as the offending byte arrives.
    pub fn next_frame(&mut self) -> Result<Option<Envelope>, ProtocolError> {
        let have = self.buf.len();
        let magic_seen = have.min(4);
        if self.buf[..magic_seen] != MAGIC[..magic_seen] {
            let mut m = [0u8; 4];
            m[..magic_seen].copy_from_slice(&self.buf[..magic_seen]);
            return Err(ProtocolError::BadMagic(m));
        }
        if have > 4 && self.buf[4] != VERSION {
            return Err(ProtocolError::BadVersion(self.buf[4]));
        }
        if have > 5 && FrameKind::from_byte(self.buf[5]).is_none() {
            return Err(ProtocolError::UnknownKind(self.buf[5]));
        }
        if have < HEADER_LEN {
            return Ok(None);
        }
        let len = u32::from_be_bytes(self.buf[6..10].try_into().expect("4 bytes"));
        if len > MAX_PAYLOAD {
            return Err(ProtocolError::TooLarge(len));
        }
        let total = HEADER_LEN + len as usize;
        if have < total {
            return Ok(None);
        }
        let kind = FrameKind::from_byte(self.buf[5]).expect("checked above");
        let payload = self.buf[HEADER_LEN..total].to_vec();
        self.buf.drain(..total);
        Ok(Some(Envelope { kind, payload }))
    }
}

pub fn write_frame<W: Write>(w: &mut W, env: &Envelope) -> io::Result<()> {
    w.write_all(&env.encode())?;
    w.flush()
}

/// Blocking read of one frame. A clean end of stream between frames is
/// `Ok(None)`; one inside a frame is `UnexpectedEof`.
pub fn read_frame<R: Read>(r: &mut R, dec: &mut FrameDecoder) -> io::Result<Option<Envelope>> {
    let mut chunk = [0u8; 4096];
    loop {
        if let Some(env) = dec
            .next_frame()
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?
        {
            return Ok(Some(env));
        }
        let n = r.read(&mut chunk)?;
        if n == 0 {
            return if dec.pending() == 0 {
                Ok(None)
            } else {
                Err(io::Error::new(
                    io::ErrorKind::UnexpectedEof,
                    "stream ended inside a frame",
                ))
            };
        }
        dec.push(&chunk[..n]);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hello {
    pub agent_id: String,
    pub last_acked_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HelloOk {
    pub resume_from_seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NackReason {
    Gap,
    Malformed,
}

/// Acknowledgement of one bundle; `nack` is set when it was refused.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub agent_id: String,
    pub seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nack: Option<NackReason>,
}

impl Ack {
    pub fn ok(agent_id: &str, seq: u64) -> Ack {
        Ack {
            agent_id: agent_id.to_string(),
            seq,
            nack: None,
        }
    }

    pub fn refuse(agent_id: &str, seq: u64, reason: NackReason) -> Ack {
        Ack {
            agent_id: agent_id.to_string(),
            seq,
            nack: Some(reason),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.nack.is_none()
    }
}
