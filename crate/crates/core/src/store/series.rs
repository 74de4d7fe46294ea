use serde::{Deserialize, Serialize};

use crate::clinical::{Concept, Observation, Source};
use crate::time::EpochSeconds;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub time: EpochSeconds,
    pub value: f64,
    pub confidence: f64,
    pub source: Source,
}

impl From<&Observation> for Sample {
    fn from(o: &Observation) -> Self {
        Sample {
            time: o.effective_time(),
            value: o.value(),
            confidence: o.confidence(),
            source: o.source(),
        }
    }
}

/// Effect of inserting one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inserted {
    New,
    Replaced,
    Ignored,
}

/// Samples of one concept for one patient, strictly increasing in time.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub patient_id: String,
    pub concept: Concept,
    samples: Vec<Sample>,
}

impl Series {
    pub fn new(patient_id: impl Into<String>, concept: Concept) -> Self {
        Series {
            patient_id: patient_id.into(),
            concept,
            samples: Vec::new(),
        }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Inserts in time order. At an occupied timestamp the new sample wins
    /// only with strictly higher source priority.
    pub fn insert(&mut self, s: Sample) -> Inserted {
        match self.samples.binary_search_by_key(&s.time, |x| x.time) {
            Ok(i) => {
                if s.source.priority() > self.samples[i].source.priority() {
                    self.samples[i] = s;
                    Inserted::Replaced
                } else {
                    Inserted::Ignored
                }
            }
            Err(i) => {
                self.samples.insert(i, s);
                Inserted::New
            }
        }
    }

    pub fn latest(&self) -> Option<&Sample> {
        self.samples.last()
    }

    /// Most recent sample at or before `t`.
    pub fn latest_at(&self, t: EpochSeconds) -> Option<&Sample> {
        let n = self.samples.partition_point(|s| s.time <= t);
        n.checked_sub(1).map(|i| &self.samples[i])
    }

    /// Samples with `t0 <= time <= t1`.
    pub fn window(&self, t0: EpochSeconds, t1: EpochSeconds) -> &[Sample] {
        if t0 > t1 {
            return &[];
        }
        let a = self.samples.partition_point(|s| s.time < t0);
        let b = self.samples.partition_point(|s| s.time <= t1);
        &self.samples[a..b]
    }
}
