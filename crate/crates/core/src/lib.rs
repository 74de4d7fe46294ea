//! Bedside-monitor digitization and ICU telemetry.
//!
//! Simulated monitors ([`sim`]) are read by a vision pipeline ([`vision`]),
//! normalized into observations ([`clinical`]), shipped from edge agents
//! ([`edge`]) to a cloud ingest service ([`ingest`]) that keeps per-patient
//! time series ([`store`]), and queried in natural language ([`query`]).

pub mod clinical;
pub mod edge;
pub mod fixtures;
pub mod frame;
pub mod ingest;
pub mod protocol;
pub mod query;
pub mod sim;
pub mod store;
pub mod time;
pub mod vision;
