//! Physician questions: parsing into typed intents, deterministic answers
//! from the store, bilingual rendering, prompt assembly and LLM adapters.

mod adapter;
mod answer;
mod check;
mod context;
mod engine;
mod parse;
mod prompt;
mod status;
mod text;

pub use adapter::{Completion, LlmAdapter, OfflineAdapter, RemoteAdapter, REMOTE_ENDPOINT_ENV};
pub use answer::{answer, Answer, Finding, Provenance, Role};
pub use check::{check_language_parity, check_provenance, numeric_tokens};
pub use context::{ContextRegistry, PatientContext};
pub use engine::{QueryEngine, QueryResponse};
pub use parse::{canonical_text, parse_query, SUPPORTED_FORMS};
pub use prompt::{build_prompt, prompt_rows, PromptRow, PromptText};
pub use status::{patient_status, PatientStatus};
pub use text::{format_value, Lang};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clinical::Concept;
use crate::store::Direction;
use crate::time::{self, EpochSeconds, MINUTE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IntentKind {
    Current,
    Excursion,
    Compare,
    Fluctuation,
    TrendSummary,
    AvgThreshold,
}

impl IntentKind {
    pub const ALL: [IntentKind; 6] = [
        IntentKind::Current,
        IntentKind::Excursion,
        IntentKind::Compare,
        IntentKind::Fluctuation,
        IntentKind::TrendSummary,
        IntentKind::AvgThreshold,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IntentKind::Current => "CURRENT",
            IntentKind::Excursion => "EXCURSION",
            IntentKind::Compare => "COMPARE",
            IntentKind::Fluctuation => "FLUCTUATION",
            IntentKind::TrendSummary => "TREND_SUMMARY",
            IntentKind::AvgThreshold => "AVG_THRESHOLD",
        }
    }
}

impl fmt::Display for IntentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How the question names its patient.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatientSelector {
    Bed(String),
    Id(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub value: f64,
    pub direction: Direction,
}

/// A parsed question. The window is `[now - lookback, now]`; for COMPARE the
/// anchor is `now - lookback`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryIntent {
    pub kind: IntentKind,
    pub concepts: Vec<Concept>,
    pub patient: PatientSelector,
    #[serde(with = "time::iso")]
    pub now: EpochSeconds,
    /// Seconds.
    pub lookback: Option<EpochSeconds>,
    pub threshold: Option<Threshold>,
}

impl QueryIntent {
    pub fn window(&self) -> (EpochSeconds, EpochSeconds) {
        (self.now - self.lookback.unwrap_or(0), self.now)
    }

    pub fn anchor(&self) -> Option<EpochSeconds> {
        match self.kind {
            IntentKind::Compare => self.lookback.map(|d| self.now - d),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), QueryError> {
        if self.concepts.is_empty() {
            return Err(QueryError::MissingConcept(self.kind));
        }
        match self.kind {
            IntentKind::Excursion | IntentKind::AvgThreshold if self.threshold.is_none() => {
                Err(QueryError::MissingThreshold(self.kind))
            }
            IntentKind::AvgThreshold if self.concepts.len() != 1 => {
                Err(QueryError::MissingConcept(self.kind))
            }
            IntentKind::Compare if self.lookback.is_none() => Err(QueryError::MissingAnchor),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueryError {
    #[error("unparseable query; supported forms: {}", SUPPORTED_FORMS.join(" | "))]
    Unparseable,
    #[error("no patient named in the query and no default patient given")]
    MissingPatient,
    #[error("{0} query needs exactly one recognizable vital sign")]
    MissingConcept(IntentKind),
    #[error("{0} query needs a threshold such as \"below 90%\" or \"exceed 100 bpm\"")]
    MissingThreshold(IntentKind),
    #[error("COMPARE query needs a reference time such as \"two hours ago\"")]
    MissingAnchor,
    #[error("unknown patient {0:?}")]
    UnknownPatient(String),
    #[error("prompt build failed: {0}")]
    PromptBuild(String),
}

impl QueryError {
    /// Errors caused by the question itself rather than the service.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, QueryError::PromptBuild(_))
    }
}

/// Per-concept swing thresholds for FLUCTUATION.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwingRule {
    pub delta: f64,
    /// Seconds.
    pub span: EpochSeconds,
}

/// Tunables for answering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueryConfig {
    pub swing_bp: SwingRule,
    pub swing_hr: SwingRule,
    pub swing_rr: SwingRule,
    pub swing_spo2: SwingRule,
    /// Relative change band, as fractions, called "moderate" by COMPARE.
    pub moderate_band: (f64, f64),
    /// Trend slopes within this many units per hour of zero read as stable.
    pub trend_flat: f64,
    /// Narrower flat band for SpO2, whose clinically relevant moves are a
    /// few percentage points.
    pub trend_flat_spo2: f64,
}

impl Default for QueryConfig {
    fn default() -> Self {
        let rule = |delta| SwingRule {
            delta,
            span: 15 * MINUTE,
        };
        QueryConfig {
            swing_bp: rule(25.0),
            swing_hr: rule(20.0),
            swing_rr: rule(8.0),
            swing_spo2: rule(4.0),
            moderate_band: (0.10, 0.50),
            trend_flat: crate::store::TREND_EPSILON,
            trend_flat_spo2: 0.2,
        }
    }
}

impl QueryConfig {
    pub fn swing_rule(&self, concept: Concept) -> SwingRule {
        match concept {
            Concept::SystolicBp | Concept::DiastolicBp => self.swing_bp,
            Concept::HeartRate => self.swing_hr,
            Concept::RespiratoryRate => self.swing_rr,
            Concept::OxygenSaturation => self.swing_spo2,
        }
    }

    pub fn trend_flat(&self, concept: Concept) -> f64 {
        match concept {
            Concept::OxygenSaturation => self.trend_flat_spo2,
            _ => self.trend_flat,
        }
    }
}
