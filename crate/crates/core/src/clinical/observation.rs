use serde::{Deserialize, Serialize};

use super::{json_error, quantize, serialize_fixed2, ClinicalError, Concept};
use crate::time::{self, EpochSeconds};

/// Where an observation came from. When two observations collide on the same
/// timestamp the higher priority one wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Vision,
    Fixture,
    Manual,
}

impl Source {
    pub fn priority(self) -> u8 {
        match self {
            Source::Vision => 0,
            Source::Fixture => 1,
            Source::Manual => 2,
        }
    }
}

/// One normalized measurement. Values and confidences are held at two
/// fraction digits, the precision of the wire format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WireObservation", into = "WireObservation")]
pub struct Observation {
    patient_id: String,
    bed_id: String,
    concept: Concept,
    value: f64,
    effective_time: EpochSeconds,
    confidence: f64,
    source: Source,
}

impl Observation {
    pub fn new(
        patient_id: impl Into<String>,
        bed_id: impl Into<String>,
        concept: Concept,
        value: f64,
        effective_time: EpochSeconds,
        confidence: f64,
        source: Source,
    ) -> Result<Self, ClinicalError> {
        let patient_id = patient_id.into();
        if patient_id.trim().is_empty() {
            return Err(ClinicalError::InvalidObservation("empty patient_id".into()));
        }
        if !value.is_finite() {
            return Err(ClinicalError::InvalidObservation(format!(
                "non-finite value for {concept}"
            )));
        }
        if effective_time <= 0 {
            return Err(ClinicalError::InvalidObservation(format!(
                "effective time {effective_time} is not positive"
            )));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(ClinicalError::InvalidObservation(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(Observation {
            patient_id,
            bed_id: bed_id.into(),
            concept,
            value: quantize(value),
            effective_time,
            confidence: quantize(confidence),
            source,
        })
    }

    pub fn patient_id(&self) -> &str {
        &self.patient_id
    }

    pub fn bed_id(&self) -> &str {
        &self.bed_id
    }

    pub fn concept(&self) -> Concept {
        self.concept
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn unit(&self) -> &'static str {
        self.concept.canonical_unit()
    }

    pub fn effective_time(&self) -> EpochSeconds {
        self.effective_time
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    pub fn source(&self) -> Source {
        self.source
    }
}

/// Flat JSON profile of an observation. Fields are declared in key order so
/// the derived serializer emits canonical (sorted) JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct WireObservation {
    bed_id: String,
    code: Concept,
    #[serde(serialize_with = "serialize_fixed2")]
    confidence: f64,
    patient_id: String,
    source: Source,
    #[serde(with = "time::iso")]
    time: EpochSeconds,
    unit: String,
    #[serde(serialize_with = "serialize_fixed2")]
    value: f64,
}

impl TryFrom<WireObservation> for Observation {
    type Error = ClinicalError;

    fn try_from(w: WireObservation) -> Result<Self, Self::Error> {
        if w.unit != w.code.canonical_unit() {
            return Err(ClinicalError::InvalidObservation(format!(
                "unit {:?} is not the canonical unit {:?} of {}",
                w.unit,
                w.code.canonical_unit(),
                w.code
            )));
        }
        Observation::new(
            w.patient_id,
            w.bed_id,
            w.code,
            w.value,
            w.time,
            w.confidence,
            w.source,
        )
    }
}

impl From<Observation> for WireObservation {
    fn from(o: Observation) -> Self {
        WireObservation {
            bed_id: o.bed_id,
            code: o.concept,
            confidence: o.confidence,
            patient_id: o.patient_id,
            source: o.source,
            time: o.effective_time,
            unit: o.concept.canonical_unit().to_string(),
            value: o.value,
        }
    }
}

/// Canonical single-line JSON of one observation (the store's log format).
pub fn serialize_observation(obs: &Observation) -> String {
    serde_json::to_string(obs).expect("observation serialization is infallible")
}

pub fn parse_observation_line(line: &str) -> Result<Observation, ClinicalError> {
    serde_json::from_str(line).map_err(|e| json_error(line.as_bytes(), &e))
}
