//! Normalization of recognized monitor text into clinical concepts and the
//! FHIR-lite observation bundles shipped from the bedside to the cloud.

mod bundle;
mod concept;
mod observation;

pub use bundle::{
    build_bundle, build_bundle_with, parse_bundle, serialize_bundle, BundleIdentity, DropCounts,
    ObservationBundle,
};
pub use concept::{
    map_concept, validate_range, Concept, PlausibilityBounds, SynonymTable, Validity,
};
pub use observation::{parse_observation_line, serialize_observation, Observation, Source};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClinicalError {
    #[error("unmapped label {0:?}")]
    UnmappedLabel(String),
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
    #[error("invalid bundle: {0}")]
    InvalidBundle(String),
    #[error("no usable readings (unmapped {}, unparseable {}, implausible {})", .0.unmapped, .0.unparseable, .0.implausible)]
    EmptyBundle(DropCounts),
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("invalid synonym table: {0}")]
    SynonymTable(String),
}

/// Maps a serde_json error position (line, bytes consumed on that line) to a
/// byte offset into `input`.
pub(crate) fn json_error(input: &[u8], err: &serde_json::Error) -> ClinicalError {
    let mut offset = 0usize;
    let mut line = 1usize;
    for &b in input {
        if line == err.line() {
            break;
        }
        offset += 1;
        if b == b'\n' {
            line += 1;
        }
    }
    offset = (offset + err.column()).min(input.len());
    ClinicalError::Parse {
        offset,
        message: err.to_string(),
    }
}

/// Rounds to two fraction digits, the precision carried on the wire.
pub(crate) fn quantize(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Serializes a quantized number as an integer when it has no fraction.
pub(crate) fn serialize_fixed2<S: serde::Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    let q = quantize(*v);
    if q.fract() == 0.0 && q.abs() < 9.0e15 {
        s.serialize_i64(q as i64)
    } else {
        s.serialize_f64(q)
    }
}
