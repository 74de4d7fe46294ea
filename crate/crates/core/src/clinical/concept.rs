use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ClinicalError;

/// The vital-sign concepts the pipeline knows how to extract and store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Concept {
    HeartRate,
    RespiratoryRate,
    OxygenSaturation,
    SystolicBp,
    DiastolicBp,
}

impl Concept {
    pub const ALL: [Concept; 5] = [
        Concept::HeartRate,
        Concept::RespiratoryRate,
        Concept::OxygenSaturation,
        Concept::SystolicBp,
        Concept::DiastolicBp,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Concept::HeartRate => "heart-rate",
            Concept::RespiratoryRate => "respiratory-rate",
            Concept::OxygenSaturation => "oxygen-saturation",
            Concept::SystolicBp => "systolic-bp",
            Concept::DiastolicBp => "diastolic-bp",
        }
    }

    pub fn from_code(code: &str) -> Option<Concept> {
        Concept::ALL.into_iter().find(|c| c.code() == code)
    }

    pub fn canonical_unit(self) -> &'static str {
        match self {
            Concept::HeartRate => "beats/min",
            Concept::RespiratoryRate => "breaths/min",
            Concept::OxygenSaturation => "percent",
            Concept::SystolicBp | Concept::DiastolicBp => "mmHg",
        }
    }

    /// Unit as written next to a number in answer text.
    pub fn display_unit(self) -> &'static str {
        match self {
            Concept::HeartRate | Concept::RespiratoryRate => " bpm",
            Concept::OxygenSaturation => "%",
            Concept::SystolicBp | Concept::DiastolicBp => " mmHg",
        }
    }

    pub fn display_en(self) -> &'static str {
        match self {
            Concept::HeartRate => "heart rate",
            Concept::RespiratoryRate => "respiratory rate",
            Concept::OxygenSaturation => "SpO2",
            Concept::SystolicBp => "systolic blood pressure",
            Concept::DiastolicBp => "diastolic blood pressure",
        }
    }

    pub fn display_zh(self) -> &'static str {
        match self {
            Concept::HeartRate => "心率",
            Concept::RespiratoryRate => "呼吸频率",
            Concept::OxygenSaturation => "血氧饱和度",
            Concept::SystolicBp => "收缩压",
            Concept::DiastolicBp => "舒张压",
        }
    }

    /// Abbreviation used in prompt vitals lists.
    pub fn short_label(self) -> &'static str {
        match self {
            Concept::HeartRate => "HR",
            Concept::RespiratoryRate => "RR",
            Concept::OxygenSaturation => "SpO2",
            Concept::SystolicBp => "SYS",
            Concept::DiastolicBp => "DIA",
        }
    }
}

impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Case-insensitive label → concept lookup shared by structuring and the
/// query parser.
#[derive(Debug, Clone)]
pub struct SynonymTable {
    entries: BTreeMap<String, Concept>,
}

const DEFAULT_SYNONYMS: &str = include_str!("../../assets/synonyms.json");

impl Default for SynonymTable {
    fn default() -> Self {
        SynonymTable::from_json(DEFAULT_SYNONYMS).expect("bundled synonym table is valid")
    }
}

impl SynonymTable {
    pub fn from_json(text: &str) -> Result<Self, ClinicalError> {
        let raw: BTreeMap<String, String> =
            serde_json::from_str(text).map_err(|e| ClinicalError::SynonymTable(e.to_string()))?;
        let mut entries = BTreeMap::new();
        for (label, code) in raw {
            let concept = Concept::from_code(&code).ok_or_else(|| {
                ClinicalError::SynonymTable(format!("unknown code {code:?} for {label:?}"))
            })?;
            let key = normalize_label(&label);
            if key.is_empty() {
                return Err(ClinicalError::SynonymTable("empty label".into()));
            }
            if let Some(prev) = entries.insert(key.clone(), concept) {
                if prev != concept {
                    return Err(ClinicalError::SynonymTable(format!(
                        "label {key:?} maps to two concepts"
                    )));
                }
            }
        }
        Ok(SynonymTable { entries })
    }

    pub fn lookup(&self, label: &str) -> Option<Concept> {
        self.entries.get(&normalize_label(label)).copied()
    }

    pub fn map(&self, label: &str) -> Result<(Concept, &'static str), ClinicalError> {
        self.lookup(label)
            .map(|c| (c, c.canonical_unit()))
            .ok_or_else(|| ClinicalError::UnmappedLabel(label.to_string()))
    }

    /// Normalized (uppercase) labels with their concepts.
    pub fn entries(&self) -> impl Iterator<Item = (&str, Concept)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

fn normalize_label(label: &str) -> String {
    label
        .trim()
        .trim_end_matches(|c: char| c.is_ascii_punctuation() && c != '%' || c.is_whitespace())
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_uppercase()
}

/// Looks a label up in the bundled synonym table.
pub fn map_concept(label_text: &str) -> Result<(Concept, &'static str), ClinicalError> {
    static TABLE: std::sync::OnceLock<SynonymTable> = std::sync::OnceLock::new();
    TABLE.get_or_init(SynonymTable::default).map(label_text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Validity {
    Plausible,
    Implausible,
}

/// Inclusive physiologic limits per concept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlausibilityBounds {
    pub bounds: BTreeMap<Concept, (f64, f64)>,
}

impl Default for PlausibilityBounds {
    fn default() -> Self {
        let bounds = BTreeMap::from([
            (Concept::HeartRate, (20.0, 300.0)),
            (Concept::RespiratoryRate, (4.0, 80.0)),
            (Concept::OxygenSaturation, (50.0, 100.0)),
            (Concept::SystolicBp, (50.0, 260.0)),
            (Concept::DiastolicBp, (20.0, 200.0)),
        ]);
        PlausibilityBounds { bounds }
    }
}

impl PlausibilityBounds {
    pub fn check(&self, concept: Concept, value: f64) -> Validity {
        match self.bounds.get(&concept) {
            Some(&(lo, hi)) if value.is_finite() && value >= lo && value <= hi => {
                Validity::Plausible
            }
            _ => Validity::Implausible,
        }
    }
}

pub fn validate_range(concept: Concept, value: f64) -> Validity {
    PlausibilityBounds::default().check(concept, value)
}
