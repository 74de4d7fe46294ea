use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Demographics and history embedded in prompts and used for context notes.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PatientContext {
    pub patient_id: String,
    pub bed_id: String,
    pub age: Option<u32>,
    pub gender: Option<String>,
    pub diagnosis: Option<String>,
    pub history: Vec<String>,
}

impl PatientContext {
    /// A context carrying identifiers only.
    pub fn bare(patient_id: &str, bed_id: &str) -> PatientContext {
        PatientContext {
            patient_id: patient_id.into(),
            bed_id: bed_id.into(),
            ..Default::default()
        }
    }

    /// Diagnosis without its parenthesized expansion: "COPD (Chronic ...)" → "COPD".
    pub fn diagnosis_short(&self) -> Option<&str> {
        let d = self.diagnosis.as_deref()?;
        let short = d.split('(').next().unwrap_or(d).trim();
        (!short.is_empty()).then_some(short)
    }

    /// The single comma-separated line used in prompts.
    pub fn information_line(&self) -> String {
        let mut parts = Vec::new();
        if let Some(age) = self.age {
            parts.push(format!("Age: {age}"));
        }
        if let Some(g) = &self.gender {
            parts.push(format!("Gender: {g}"));
        }
        if let Some(d) = &self.diagnosis {
            parts.push(format!("Diagnosis: {d}"));
        }
        if !self.history.is_empty() {
            parts.push(format!("Past Medical History: {}", self.history.join(", ")));
        }
        if parts.is_empty() {
            parts.push(format!(
                "Patient ID: {}, Bed: {}",
                self.patient_id, self.bed_id
            ));
        }
        parts.join(", ")
    }
}

/// Known patient contexts keyed by patient id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContextRegistry {
    entries: BTreeMap<String, PatientContext>,
}

impl ContextRegistry {
    pub fn new() -> ContextRegistry {
        ContextRegistry::default()
    }

    pub fn from_json(text: &str) -> Result<ContextRegistry, serde_json::Error> {
        let list: Vec<PatientContext> = serde_json::from_str(text)?;
        let mut reg = ContextRegistry::new();
        for ctx in list {
            reg.insert(ctx);
        }
        Ok(reg)
    }

    pub fn insert(&mut self, ctx: PatientContext) {
        self.entries.insert(ctx.patient_id.clone(), ctx);
    }

    pub fn get(&self, patient_id: &str) -> Option<&PatientContext> {
        self.entries.get(patient_id)
    }

    pub fn by_bed(&self, bed_id: &str) -> Option<&PatientContext> {
        let norm = |b: &str| b.trim_start_matches('0').to_string();
        self.entries
            .values()
            .find(|c| norm(&c.bed_id) == norm(bed_id))
    }

    pub fn iter(&self) -> impl Iterator<Item = &PatientContext> {
        self.entries.values()
    }
}
