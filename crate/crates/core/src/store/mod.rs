//! Per-patient, per-concept time series with an append-only JSON-lines log.

pub mod analytics;
mod series;

pub use analytics::{
    aggregate, excursions, fluctuation, trend, trend_with, AggOp, Direction, Episode, Swing, Trend,
    TrendDirection, TREND_EPSILON,
};
pub use series::{Inserted, Sample, Series};

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::Serialize;

use crate::clinical::{
    parse_observation_line, serialize_observation, Concept, Observation, PlausibilityBounds,
    Validity,
};
use crate::time::EpochSeconds;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("no data for {patient_id} {concept}")]
    NoData {
        patient_id: String,
        concept: Concept,
    },
    #[error("observation rejected: {0}")]
    Rejected(String),
    #[error("log {path}: line {line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("store I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// Outcome of an append batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AppendSummary {
    pub inserted: usize,
    pub replaced: usize,
    pub ignored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatientEntry {
    pub patient_id: String,
    pub bed_id: String,
    pub last_time: Option<EpochSeconds>,
}

#[derive(Debug, Default)]
struct State {
    series: BTreeMap<(String, Concept), Series>,
    beds: BTreeMap<String, String>,
}

impl State {
    fn apply(&mut self, obs: &Observation) -> Inserted {
        self.beds
            .insert(obs.patient_id().to_string(), obs.bed_id().to_string());
        self.series
            .entry((obs.patient_id().to_string(), obs.concept()))
            .or_insert_with(|| Series::new(obs.patient_id(), obs.concept()))
            .insert(Sample::from(obs))
    }
}

/// Shared store: one writer at a time, any number of readers.
#[derive(Debug)]
pub struct Store {
    state: RwLock<State>,
    log: Option<Mutex<(File, PathBuf)>>,
    bounds: PlausibilityBounds,
}

impl Default for Store {
    fn default() -> Self {
        Store::in_memory()
    }
}

impl Store {
    pub fn in_memory() -> Store {
        Store {
            state: RwLock::new(State::default()),
            log: None,
            bounds: PlausibilityBounds::default(),
        }
    }

    /// Opens (or creates) a log file and replays it. A trailing line without
    /// a newline is a torn write; it is discarded and the file truncated.
    pub fn open(path: impl AsRef<Path>) -> Result<Store, StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)?;
        let mut state = State::default();
        let mut good_len = 0u64;
        {
            let mut reader = BufReader::new(&mut file);
            let mut line = String::new();
            let mut number = 0;
            loop {
                line.clear();
                let n = reader.read_line(&mut line)?;
                if n == 0 {
                    break;
                }
                number += 1;
                if !line.ends_with('\n') {
                    tracing::warn!(path = %path.display(), line = number, "discarding partial trailing log line");
                    break;
                }
                let obs =
                    parse_observation_line(line.trim_end()).map_err(|e| StoreError::Corrupt {
                        path: path.clone(),
                        line: number,
                        message: e.to_string(),
                    })?;
                state.apply(&obs);
                good_len += n as u64;
            }
        }
        if file.metadata()?.len() != good_len {
            file.set_len(good_len)?;
            file.seek(SeekFrom::End(0))?;
        }
        Ok(Store {
            state: RwLock::new(state),
            log: Some(Mutex::new((file, path))),
            bounds: PlausibilityBounds::default(),
        })
    }

    pub fn log_path(&self) -> Option<PathBuf> {
        self.log
            .as_ref()
            .map(|l| l.lock().expect("log lock").1.clone())
    }

    pub fn append(&self, obs: &Observation) -> Result<Inserted, StoreError> {
        let s = self.append_all(std::slice::from_ref(obs))?;
        Ok(if s.inserted > 0 {
            Inserted::New
        } else if s.replaced > 0 {
            Inserted::Replaced
        } else {
            Inserted::Ignored
        })
    }

    /// Validates every observation first, then logs and applies the effective
    /// ones under a single write lock, so readers see all or none of them.
    pub fn append_all(&self, batch: &[Observation]) -> Result<AppendSummary, StoreError> {
        for obs in batch {
            if self.bounds.check(obs.concept(), obs.value()) == Validity::Implausible {
                return Err(StoreError::Rejected(format!(
                    "{} value {} is implausible",
                    obs.concept(),
                    obs.value()
                )));
            }
        }
        let mut state = self.state.write().expect("store lock");
        // Effects within the batch depend on earlier batch members, so
        // classify against a scratch copy of the touched series.
        let mut scratch = State::default();
        let mut effective = Vec::new();
        let mut summary = AppendSummary::default();
        for obs in batch {
            let key = (obs.patient_id().to_string(), obs.concept());
            if !scratch.series.contains_key(&key) {
                if let Some(existing) = state.series.get(&key) {
                    let mut copy = Series::new(obs.patient_id(), obs.concept());
                    if let Some(s) = existing
                        .window(obs.effective_time(), obs.effective_time())
                        .first()
                    {
                        copy.insert(*s);
                    }
                    scratch.series.insert(key.clone(), copy);
                }
            }
            match scratch.apply(obs) {
                Inserted::New => summary.inserted += 1,
                Inserted::Replaced => summary.replaced += 1,
                Inserted::Ignored => {
                    summary.ignored += 1;
                    continue;
                }
            }
            effective.push(obs);
        }
        if effective.is_empty() {
            return Ok(summary);
        }
        if let Some(log) = &self.log {
            let mut buf = String::new();
            for obs in &effective {
                buf.push_str(&serialize_observation(obs));
                buf.push('\n');
            }
            let mut guard = log.lock().expect("log lock");
            guard.0.write_all(buf.as_bytes())?;
            guard.0.sync_data()?;
        }
        for obs in effective {
            state.apply(obs);
        }
        Ok(summary)
    }

    pub fn latest(&self, patient_id: &str, concept: Concept) -> Result<Sample, StoreError> {
        self.with_series(patient_id, concept, |s| s.latest().copied())
    }

    /// Latest sample at or before `t`.
    pub fn latest_at(
        &self,
        patient_id: &str,
        concept: Concept,
        t: EpochSeconds,
    ) -> Result<Sample, StoreError> {
        self.with_series(patient_id, concept, |s| s.latest_at(t).copied())
    }

    /// Closed-interval window; empty when nothing matches.
    pub fn window(
        &self,
        patient_id: &str,
        concept: Concept,
        t0: EpochSeconds,
        t1: EpochSeconds,
    ) -> Vec<Sample> {
        let state = self.state.read().expect("store lock");
        state
            .series
            .get(&(patient_id.to_string(), concept))
            .map(|s| s.window(t0, t1).to_vec())
            .unwrap_or_default()
    }

    pub fn series_len(&self, patient_id: &str, concept: Concept) -> usize {
        let state = self.state.read().expect("store lock");
        state
            .series
            .get(&(patient_id.to_string(), concept))
            .map_or(0, Series::len)
    }

    pub fn patients(&self) -> Vec<PatientEntry> {
        let state = self.state.read().expect("store lock");
        state
            .beds
            .iter()
            .map(|(p, bed)| PatientEntry {
                patient_id: p.clone(),
                bed_id: bed.clone(),
                last_time: state
                    .series
                    .range((p.clone(), Concept::ALL[0])..=(p.clone(), Concept::ALL[4]))
                    .filter_map(|(_, s)| s.latest().map(|x| x.time))
                    .max(),
            })
            .collect()
    }

    pub fn bed_of(&self, patient_id: &str) -> Option<String> {
        self.state
            .read()
            .expect("store lock")
            .beds
            .get(patient_id)
            .cloned()
    }

    /// Patient currently registered at `bed_id`. Bed labels compare with
    /// leading zeros ignored, so "3" finds bed "03".
    pub fn patient_at_bed(&self, bed_id: &str) -> Option<String> {
        let norm = |b: &str| b.trim_start_matches('0').to_string();
        let want = norm(bed_id);
        let state = self.state.read().expect("store lock");
        state
            .beds
            .iter()
            .find(|(_, b)| norm(b) == want)
            .map(|(p, _)| p.clone())
    }

    pub fn has_patient(&self, patient_id: &str) -> bool {
        self.state
            .read()
            .expect("store lock")
            .beds
            .contains_key(patient_id)
    }

    /// Latest sample time across all series.
    pub fn latest_time(&self) -> Option<EpochSeconds> {
        let state = self.state.read().expect("store lock");
        state
            .series
            .values()
            .filter_map(|s| s.latest().map(|x| x.time))
            .max()
    }

    pub fn total_samples(&self) -> usize {
        self.state
            .read()
            .expect("store lock")
            .series
            .values()
            .map(Series::len)
            .sum()
    }

    /// Every stored observation, in (patient, concept, time) order.
    pub fn snapshot(&self) -> Vec<(String, Concept, Sample)> {
        let state = self.state.read().expect("store lock");
        state
            .series
            .iter()
            .flat_map(|((p, c), s)| s.samples().iter().map(move |x| (p.clone(), *c, *x)))
            .collect()
    }

    fn with_series<T>(
        &self,
        patient_id: &str,
        concept: Concept,
        f: impl FnOnce(&Series) -> Option<T>,
    ) -> Result<T, StoreError> {
        let state = self.state.read().expect("store lock");
        state
            .series
            .get(&(patient_id.to_string(), concept))
            .and_then(f)
            .ok_or_else(|| StoreError::NoData {
                patient_id: patient_id.to_string(),
                concept,
            })
    }
}
