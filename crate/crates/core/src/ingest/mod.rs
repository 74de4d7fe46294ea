//! Cloud side: protocol sessions, the wire listener and the HTTP API.

pub mod http;
mod server;
mod session;
mod wire;

pub use server::{
    start, CloudConfig, CloudError, CloudHandle, DEFAULT_HTTP_ADDR, DEFAULT_WIRE_ADDR,
    SESSIONS_FILE, STORE_FILE,
};
pub use session::{AgentSession, IngestCore, IngestError, IngestStats};
pub use wire::serve_wire;

pub(crate) use session::write_atomic;
