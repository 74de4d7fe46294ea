use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::buffer::EdgeBuffer;
use super::source::{FrameSource, SourceError};
use super::transport::Transport;
use crate::clinical::{
    build_bundle_with, BundleIdentity, ClinicalError, ObservationBundle, PlausibilityBounds,
    SynonymTable,
};
use crate::ingest::write_atomic;
use crate::protocol::{Hello, NackReason};
use crate::vision::{Extractor, GlyphLibrary, DEFAULT_THETA};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub agent_id: String,
    pub patient_id: String,
    pub bed_id: String,
    #[serde(default = "default_period")]
    pub capture_period: f64,
    #[serde(default = "default_capacity")]
    pub buffer_capacity: usize,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_cloud")]
    pub cloud_address: String,
    /// Where the last acknowledged sequence number is kept.
    #[serde(default)]
    pub state_file: Option<PathBuf>,
}

fn default_period() -> f64 {
    1.0
}

fn default_capacity() -> usize {
    3600
}

fn default_theta() -> f64 {
    DEFAULT_THETA
}

fn default_cloud() -> String {
    format!("127.0.0.1:{}", crate::protocol::DEFAULT_PORT)
}

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("invalid agent config: {0}")]
    Config(String),
    #[error("agent state {path}: {message}")]
    State { path: PathBuf, message: String },
}

impl AgentConfig {
    pub fn new(agent_id: &str, patient_id: &str, bed_id: &str) -> Self {
        AgentConfig {
            agent_id: agent_id.into(),
            patient_id: patient_id.into(),
            bed_id: bed_id.into(),
            capture_period: default_period(),
            buffer_capacity: default_capacity(),
            theta: default_theta(),
            cloud_address: default_cloud(),
            state_file: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, AgentError> {
        let c: AgentConfig =
            serde_json::from_str(text).map_err(|e| AgentError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let fail = |m: &str| Err(AgentError::Config(m.into()));
        if self.agent_id.trim().is_empty() || self.patient_id.trim().is_empty() {
            return fail("agent_id and patient_id must be non-empty");
        }
        if self.capture_period.is_nan() || self.capture_period <= 0.0 {
            return fail("capture_period must be positive");
        }
        if self.buffer_capacity < 1 {
            return fail("buffer_capacity must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return fail("theta must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Persisted delivery position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentState {
    pub agent_id: String,
    pub last_acked_seq: u64,
}

impl AgentState {
    pub fn load(path: &Path, agent_id: &str) -> Result<AgentState, AgentError> {
        let err = |m: String| AgentError::State {
            path: path.to_path_buf(),
            message: m,
        };
        match std::fs::read_to_string(path) {
            Ok(text) => {
                let s: AgentState = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
                if s.agent_id != agent_id {
                    return Err(err(format!("belongs to agent {:?}", s.agent_id)));
                }
                Ok(s)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(AgentState {
                agent_id: agent_id.into(),
                last_acked_seq: 0,
            }),
            Err(e) => Err(err(e.to_string())),
        }
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        write_atomic(
            path,
            serde_json::to_string(self)
                .expect("state serializes")
                .as_bytes(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SkipReason {
    NoScreen,
    EmptyBundle,
    SourceFailure(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CycleOutcome {
    Bundle(ObservationBundle),
    Skip(SkipReason),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AgentStats {
    pub cycles: u64,
    pub bundles: u64,
    pub skipped_no_screen: u64,
    pub skipped_empty: u64,
    pub skipped_source: u64,
    /// Label/value pairs lost in extraction or structuring.
    pub dropped_fields: u64,
}

/// Capture side of an agent: frame in, sequenced bundle out.
pub struct EdgeAgent {
    config: AgentConfig,
    extractor: Extractor,
    synonyms: SynonymTable,
    bounds: PlausibilityBounds,
    buffer: Arc<EdgeBuffer>,
    stats: AgentStats,
}

impl EdgeAgent {
    /// Builds an agent whose sequence continues after the persisted state.
    pub fn new(config: AgentConfig) -> Result<Self, AgentError> {
        config.validate()?;
        let last = match &config.state_file {
            Some(p) => AgentState::load(p, &config.agent_id)?.last_acked_seq,
            None => 0,
        };
        let buffer = Arc::new(EdgeBuffer::new(config.buffer_capacity, last + 1));
        Ok(EdgeAgent {
            extractor: Extractor::with_library(GlyphLibrary::builtin(), config.theta),
            synonyms: SynonymTable::default(),
            bounds: PlausibilityBounds::default(),
            config,
            buffer,
            stats: AgentStats::default(),
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn buffer(&self) -> Arc<EdgeBuffer> {
        self.buffer.clone()
    }

    pub fn stats(&self) -> AgentStats {
        self.stats
    }

    /// One capture: frame, extraction, structuring. Never fabricates a
    /// bundle; anything unusable is a counted skip.
    pub fn run_cycle(&mut self, source: &mut dyn FrameSource) -> CycleOutcome {
        self.stats.cycles += 1;
        let frame = match source.next_frame() {
            Ok(f) => f,
            Err(e) => {
                self.stats.skipped_source += 1;
                return CycleOutcome::Skip(SkipReason::SourceFailure(e.to_string()));
            }
        };
        let ex = self.extractor.extract(&frame);
        self.stats.dropped_fields += ex.dropped as u64;
        if ex.no_screen {
            self.stats.skipped_no_screen += 1;
            return CycleOutcome::Skip(SkipReason::NoScreen);
        }
        let identity = BundleIdentity {
            patient_id: self.config.patient_id.clone(),
            bed_id: self.config.bed_id.clone(),
            agent_id: self.config.agent_id.clone(),
        };
        let t = frame.capture_time.round() as i64;
        let seq = self.buffer.next_seq();
        match build_bundle_with(
            &ex.readings,
            &identity,
            seq,
            t,
            &self.synonyms,
            &self.bounds,
        ) {
            Ok((bundle, drops)) => {
                self.stats.dropped_fields += drops.total() as u64;
                self.stats.bundles += 1;
                CycleOutcome::Bundle(bundle)
            }
            Err(ClinicalError::EmptyBundle(drops)) => {
                self.stats.dropped_fields += drops.total() as u64;
                self.stats.skipped_empty += 1;
                CycleOutcome::Skip(SkipReason::EmptyBundle)
            }
            Err(e) => {
                self.stats.skipped_source += 1;
                CycleOutcome::Skip(SkipReason::SourceFailure(e.to_string()))
            }
        }
    }

    /// Runs a cycle and buffers its bundle. Returns the outcome and any
    /// bundle evicted to make room.
    pub fn capture(
        &mut self,
        source: &mut dyn FrameSource,
    ) -> (CycleOutcome, Option<ObservationBundle>) {
        loop {
            let outcome = self.run_cycle(source);
            let CycleOutcome::Bundle(b) = &outcome else {
                return (outcome, None);
            };
            match self.buffer.enqueue(b.clone()) {
                Ok(evicted) => return (outcome, evicted),
                // The flush side moved the counter after a resume; renumber.
                Err(_) => {
                    let renumbered = ObservationBundle::new(
                        b.agent_id(),
                        self.buffer.next_seq(),
                        b.bundle_time(),
                        b.observations().to_vec(),
                    )
                    .expect("renumbering keeps a valid bundle");
                    if let Ok(evicted) = self.buffer.enqueue(renumbered.clone()) {
                        return (CycleOutcome::Bundle(renumbered), evicted);
                    }
                }
            }
        }
    }
}

/// Result of one flush call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlushReport {
    pub sent: usize,
    pub rejected: usize,
    pub stopped_on_error: bool,
}

/// Delivery side of an agent: owns the transport and drains the buffer.
pub struct Flusher {
    agent_id: String,
    buffer: Arc<EdgeBuffer>,
    transport: Box<dyn Transport>,
    state_file: Option<PathBuf>,
    last_acked: u64,
    rejected: u64,
}

impl Flusher {
    pub fn new(agent: &EdgeAgent, transport: Box<dyn Transport>) -> Self {
        Flusher {
            agent_id: agent.config.agent_id.clone(),
            buffer: agent.buffer(),
            transport,
            state_file: agent.config.state_file.clone(),
            last_acked: agent.buffer.delivered_floor(),
            rejected: 0,
        }
    }

    pub fn is_connected(&self) -> bool {
        self.transport.is_connected()
    }

    pub fn last_acked(&self) -> u64 {
        self.last_acked
    }

    /// Bundles the server refused as malformed and that were discarded.
    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    /// Handshakes and applies the server's resume point.
    pub fn connect(&mut self) -> Result<u64, super::TransportError> {
        let hello = Hello {
            agent_id: self.agent_id.clone(),
            last_acked_seq: self.buffer.delivered_floor(),
        };
        let ok = self.transport.connect(&hello)?;
        self.buffer.resume_from(ok.resume_from_seq);
        self.record_acked(ok.resume_from_seq - 1);
        Ok(ok.resume_from_seq)
    }

    pub fn disconnect(&mut self) {
        self.transport.disconnect();
    }

    /// Sends from the head until the buffer is empty or a send fails. A
    /// bundle leaves the buffer only once acknowledged.
    pub fn flush(&mut self) -> FlushReport {
        let mut report = FlushReport::default();
        if !self.transport.is_connected() {
            return report;
        }
        while let Some(head) = self.buffer.front() {
            match self.transport.send_bundle(&head) {
                Ok(ack) if ack.is_ok() && ack.seq == head.seq() => {
                    self.buffer.pop_acked(head.seq());
                    self.record_acked(head.seq());
                    report.sent += 1;
                }
                Ok(ack) if ack.nack == Some(NackReason::Malformed) => {
                    tracing::warn!(seq = head.seq(), "server refused bundle; discarding");
                    self.buffer.pop_acked(head.seq());
                    self.rejected += 1;
                    report.rejected += 1;
                    // Reconnecting announces the skip so the server moves on.
                    self.transport.disconnect();
                    report.stopped_on_error = true;
                    break;
                }
                Ok(_) | Err(_) => {
                    // Gap nacks and link failures both resync via a fresh handshake.
                    self.transport.disconnect();
                    report.stopped_on_error = true;
                    break;
                }
            }
        }
        report
    }

    fn record_acked(&mut self, seq: u64) {
        if seq <= self.last_acked {
            return;
        }
        self.last_acked = seq;
        if let Some(path) = &self.state_file {
            let state = AgentState {
                agent_id: self.agent_id.clone(),
                last_acked_seq: seq,
            };
            if let Err(e) = state.save(path) {
                tracing::warn!(path = %path.display(), error = %e, "could not persist agent state");
            }
        }
    }
}

/// Handle to an agent running its capture and flush loops on two threads.
pub struct RunningAgent {
    stop: Arc<AtomicBool>,
    buffer: Arc<EdgeBuffer>,
    capture: Option<std::thread::JoinHandle<(EdgeAgent, u64)>>,
    flush: Option<std::thread::JoinHandle<Flusher>>,
}

/// Pacing of the capture loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pacing {
    /// Sleep `capture_period` between cycles.
    RealTime,
    /// Sleep this long between cycles regardless of the period.
    Fixed(Duration),
}

impl RunningAgent {
    /// Starts both loops. Capture stops after `max_cycles` (if given) or
    /// when the source is exhausted; flushing continues until [`stop`].
    pub fn spawn(
        mut agent: EdgeAgent,
        mut source: Box<dyn FrameSource>,
        transport: Box<dyn Transport>,
        pacing: Pacing,
        max_cycles: Option<u64>,
    ) -> RunningAgent {
        let stop = Arc::new(AtomicBool::new(false));
        let buffer = agent.buffer();
        let mut flusher = Flusher::new(&agent, transport);
        let period = match pacing {
            Pacing::RealTime => Duration::from_secs_f64(agent.config.capture_period),
            Pacing::Fixed(d) => d,
        };

        let stop_c = stop.clone();
        let capture = std::thread::spawn(move || {
            let mut evicted = 0u64;
            let mut next = Instant::now();
            while !stop_c.load(Ordering::Relaxed)
                && max_cycles.is_none_or(|m| agent.stats.cycles < m)
            {
                let (outcome, ev) = agent.capture(source.as_mut());
                evicted += ev.is_some() as u64;
                if let CycleOutcome::Skip(SkipReason::SourceFailure(m)) = &outcome {
                    if m == &SourceError::Exhausted.to_string() {
                        break;
                    }
                }
                next += period;
                if let Some(wait) = next.checked_duration_since(Instant::now()) {
                    std::thread::sleep(wait);
                }
            }
            (agent, evicted)
        });

        let stop_f = stop.clone();
        let buf_f = buffer.clone();
        let flush = std::thread::spawn(move || {
            let mut backoff = Duration::from_millis(50);
            while !stop_f.load(Ordering::Relaxed) {
                if !flusher.is_connected() {
                    match flusher.connect() {
                        Ok(_) => backoff = Duration::from_millis(50),
                        Err(e) => {
                            tracing::debug!(error = %e, "cloud unreachable; buffering");
                            std::thread::sleep(backoff);
                            backoff = (backoff * 2).min(Duration::from_secs(2));
                            continue;
                        }
                    }
                }
                flusher.flush();
                buf_f.wait_nonempty(Duration::from_millis(100));
            }
            flusher.disconnect();
            flusher
        });

        RunningAgent {
            stop,
            buffer,
            capture: Some(capture),
            flush: Some(flush),
        }
    }

    pub fn buffer(&self) -> &Arc<EdgeBuffer> {
        &self.buffer
    }

    /// True once the capture loop has ended.
    pub fn capture_finished(&self) -> bool {
        self.capture.as_ref().is_none_or(|h| h.is_finished())
    }

    /// Stops both loops and returns the agent, its flusher and the number of
    /// evicted bundles.
    pub fn stop(mut self) -> (EdgeAgent, Flusher, u64) {
        self.stop.store(true, Ordering::Relaxed);
        self.buffer.close();
        let (agent, evicted) = self
            .capture
            .take()
            .expect("joined once")
            .join()
            .expect("capture thread");
        let flusher = self
            .flush
            .take()
            .expect("joined once")
            .join()
            .expect("flush thread");
        (agent, flusher, evicted)
    }
}
