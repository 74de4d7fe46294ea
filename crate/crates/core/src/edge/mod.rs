//! Bedside agent: capture, extract, structure, buffer, transmit.

mod agent;
mod buffer;
mod source;
mod transport;

pub use agent::{
    AgentConfig, AgentError, AgentState, AgentStats, CycleOutcome, EdgeAgent, FlushReport, Flusher,
    Pacing, RunningAgent, SkipReason,
};
pub use buffer::{EdgeBuffer, SeqMismatch};
pub use source::{FrameSource, PgmDirSource, SimSource, SourceError};
pub use transport::{Fault, FaultyTransport, TcpTransport, Transport, TransportError};
