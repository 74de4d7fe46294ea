use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::clinical::parse_bundle;
use crate::protocol::{Ack, Hello, HelloOk, NackReason};
use crate::store::{Store, StoreError};
use crate::time::{self, EpochSeconds};

/// Per-agent delivery state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSession {
    pub agent_id: String,
    pub highest_acked_seq: u64,
    #[serde(default)]
    pub connected_at: Option<EpochSeconds>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    pub stored_bundles: u64,
    pub duplicate_bundles: u64,
    pub gap_nacks: u64,
    pub malformed_nacks: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("session state {path}: {message}")]
    State { path: PathBuf, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Default)]
struct Inner {
    sessions: BTreeMap<String, AgentSession>,
    stats: IngestStats,
}

/// Protocol state machine shared by all connections. Bundle handling is
/// serialized, which keeps each agent's sequence strictly ordered.
#[derive(Debug)]
pub struct IngestCore {
    store: Arc<Store>,
    inner: Mutex<Inner>,
    state_path: Option<PathBuf>,
}

impl IngestCore {
    pub fn new(store: Arc<Store>) -> Self {
        IngestCore {
            store,
            inner: Mutex::new(Inner::default()),
            state_path: None,
        }
    }

    /// Loads (or starts) the session file that keeps acked sequence numbers
    /// across restarts.
    pub fn with_state_file(store: Arc<Store>, path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let path = path.as_ref().to_path_buf();
        let mut inner = Inner::default();
        match std::fs::read_to_string(&path) {
            Ok(text) => {
                let sessions: Vec<AgentSession> =
                    serde_json::from_str(&text).map_err(|e| IngestError::State {
                        path: path.clone(),
                        message: e.to_string(),
                    })?;
                inner.sessions = sessions
                    .into_iter()
                    .map(|s| (s.agent_id.clone(), s))
                    .collect();
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        Ok(IngestCore {
            store,
            inner: Mutex::new(inner),
            state_path: Some(path),
        })
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn stats(&self) -> IngestStats {
        self.inner.lock().expect("ingest lock").stats
    }

    pub fn session(&self, agent_id: &str) -> Option<AgentSession> {
        self.inner
            .lock()
            .expect("ingest lock")
            .sessions
            .get(agent_id)
            .cloned()
    }

    pub fn sessions(&self) -> Vec<AgentSession> {
        self.inner
            .lock()
            .expect("ingest lock")
            .sessions
            .values()
            .cloned()
            .collect()
    }

    /// The agent's claim can only move the acked position forward: a claim
    /// above the server's position means the bundles in between were
    /// dropped at the edge and will never arrive.
    pub fn handshake(&self, hello: &Hello) -> Result<HelloOk, IngestError> {
        let mut inner = self.inner.lock().expect("ingest lock");
        let s = inner
            .sessions
            .entry(hello.agent_id.clone())
            .or_insert_with(|| AgentSession {
                agent_id: hello.agent_id.clone(),
                highest_acked_seq: 0,
                connected_at: None,
            });
        let before = s.highest_acked_seq;
        s.highest_acked_seq = s.highest_acked_seq.max(hello.last_acked_seq);
        s.connected_at = Some(time::now_epoch());
        let resume = s.highest_acked_seq + 1;
        if s.highest_acked_seq != before {
            tracing::info!(agent = %hello.agent_id, from = before, to = s.highest_acked_seq, "agent skipped ahead");
            self.persist(&inner)?;
        }
        Ok(HelloOk {
            resume_from_seq: resume,
        })
    }

    /// Applies one bundle payload from a session opened by `agent_id`.
    pub fn handle_bundle(&self, agent_id: &str, payload: &[u8]) -> Result<Ack, IngestError> {
        let mut inner = self.inner.lock().expect("ingest lock");
        let bundle = match parse_bundle(payload) {
            Ok(b) if b.agent_id() == agent_id => b,
            Ok(b) => {
                inner.stats.malformed_nacks += 1;
                return Ok(Ack::refuse(agent_id, b.seq(), NackReason::Malformed));
            }
            Err(e) => {
                tracing::warn!(agent = %agent_id, error = %e, "malformed bundle");
                inner.stats.malformed_nacks += 1;
                return Ok(Ack::refuse(agent_id, 0, NackReason::Malformed));
            }
        };
        let seq = bundle.seq();
        let highest = inner
            .sessions
            .get(agent_id)
            .map_or(0, |s| s.highest_acked_seq);
        if seq <= highest {
            inner.stats.duplicate_bundles += 1;
            return Ok(Ack::ok(agent_id, seq));
        }
        if seq > highest + 1 {
            inner.stats.gap_nacks += 1;
            return Ok(Ack::refuse(agent_id, seq, NackReason::Gap));
        }
        match self.store.append_all(bundle.observations()) {
            Ok(_) => {}
            Err(StoreError::Rejected(reason)) => {
                tracing::warn!(agent = %agent_id, seq, %reason, "bundle rejected");
                inner.stats.malformed_nacks += 1;
                return Ok(Ack::refuse(agent_id, seq, NackReason::Malformed));
            }
            Err(e) => return Err(e.into()),
        }
        let s = inner
            .sessions
            .entry(agent_id.to_string())
            .or_insert_with(|| AgentSession {
                agent_id: agent_id.to_string(),
                highest_acked_seq: 0,
                connected_at: None,
            });
        s.highest_acked_seq = seq;
        inner.stats.stored_bundles += 1;
        self.persist(&inner)?;
        Ok(Ack::ok(agent_id, seq))
    }

    fn persist(&self, inner: &Inner) -> Result<(), IngestError> {
        let Some(path) = &self.state_path else {
            return Ok(());
        };
        let sessions: Vec<&AgentSession> = inner.sessions.values().collect();
        let text = serde_json::to_string_pretty(&sessions).expect("sessions serialize");
        write_atomic(path, text.as_bytes())?;
        Ok(())
    }
}

/// Writes via a sibling temp file and rename so readers never see a torn file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}
