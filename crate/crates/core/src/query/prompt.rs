//! Prompt assembly for the LLM path: patient information, a bracketed vitals
//! list, the verbatim question and a per-intent instruction.

use serde::{Deserialize, Serialize};

use super::context::PatientContext;
use super::text::{format_value, hhmm, span_parts};
use super::{IntentKind, QueryError, QueryIntent};
use crate::clinical::Concept;
use crate::store::{Direction, Store};
use crate::time::EpochSeconds;

const CLOSING: &str = "Keep the response concise and clinically interpretable.";

/// Number of grid points sampled across a window.
const GRID_POINTS: i64 = 7;

/// Readings at one grid time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRow {
    pub time: EpochSeconds,
    pub values: Vec<(Concept, f64)>,
}

impl PromptRow {
    fn render(&self, index: usize) -> String {
        let get = |c: Concept| self.values.iter().find(|(x, _)| *x == c).map(|(_, v)| *v);
        let mut parts = Vec::new();
        for (c, v) in &self.values {
            match c {
                Concept::SystolicBp => match get(Concept::DiastolicBp) {
                    Some(dia) => parts.push(format!(
                        "BP {}/{} mmHg",
                        format_value(*v),
                        format_value(dia)
                    )),
                    None => parts.push(format!("SYS {} mmHg", format_value(*v))),
                },
                Concept::DiastolicBp if get(Concept::SystolicBp).is_some() => {}
                _ => parts.push(format!(
                    "{} {}{}",
                    c.short_label(),
                    format_value(*v),
                    c.display_unit()
                )),
            }
        }
        format!("[T{index} {}: {}]", hhmm(self.time), parts.join(", "))
    }
}

/// The four prompt sections, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptText {
    pub patient_information: String,
    /// Text after "Input:" on the header line.
    pub input_caption: String,
    pub input_vitals: String,
    pub query: String,
    pub instruction: String,
}

impl PromptText {
    pub fn sections(&self) -> [(&'static str, String); 4] {
        [
            ("Patient Information:", self.patient_information.clone()),
            (
                "Input:",
                format!("{}\n{}", self.input_caption, self.input_vitals),
            ),
            ("Query:", self.query.clone()),
            ("Instruction:", self.instruction.clone()),
        ]
    }

    pub fn render(&self) -> String {
        format!(
            "Patient Information:\n{}\n\nInput: {}\n{}\n\nQuery: {}\n\nInstruction: {}\n",
            self.patient_information,
            self.input_caption,
            self.input_vitals,
            self.query,
            self.instruction
        )
    }
}

/// Concepts listed in prompts: the core vitals plus whatever was asked about.
fn prompt_concepts(intent: &QueryIntent) -> Vec<Concept> {
    Concept::ALL
        .into_iter()
        .filter(|c| {
            matches!(
                c,
                Concept::HeartRate | Concept::RespiratoryRate | Concept::OxygenSaturation
            ) || intent.concepts.contains(c)
        })
        .collect()
}

/// Readings on an even grid across the intent's window (one row for a
/// point-in-time question). A grid point takes each concept's latest reading
/// no older than one grid step; empty rows are skipped.
pub fn prompt_rows(store: &Store, patient_id: &str, intent: &QueryIntent) -> Vec<PromptRow> {
    let concepts = prompt_concepts(intent);
    let (t0, t1) = match intent.anchor() {
        Some(a) => (a, intent.now),
        None => intent.window(),
    };
    let grid: Vec<EpochSeconds> = if t1 > t0 {
        (0..GRID_POINTS)
            .map(|k| t0 + (t1 - t0) * k / (GRID_POINTS - 1))
            .collect()
    } else {
        vec![t1]
    };
    let step = if t1 > t0 {
        (t1 - t0) / (GRID_POINTS - 1)
    } else {
        EpochSeconds::MAX
    };
    grid.into_iter()
        .filter_map(|t| {
            let values: Vec<(Concept, f64)> = concepts
                .iter()
                .filter_map(|&c| {
                    let s = store.latest_at(patient_id, c, t).ok()?;
                    (t - s.time <= step).then_some((c, s.value))
                })
                .collect();
            (!values.is_empty()).then_some(PromptRow { time: t, values })
        })
        .collect()
}

fn caption(intent: &QueryIntent) -> String {
    match intent.lookback {
        None => "Latest ICU vital signs:".to_string(),
        Some(secs) => {
            let (n, hours) = span_parts(secs);
            let unit = match (hours, n == 1.0) {
                (true, true) => "hour",
                (true, false) => "hours",
                (false, true) => "minute",
                (false, false) => "minutes",
            };
            let lead = if intent.kind == IntentKind::Compare {
                "ICU vital signs from"
            } else {
                "ICU vital signs over"
            };
            format!("{lead} the past {} {unit}:", format_value(n))
        }
    }
}

fn instruction(intent: &QueryIntent, ctx: &PatientContext) -> String {
    let names: Vec<&str> = intent.concepts.iter().map(|c| c.display_en()).collect();
    let cs = match names.split_last() {
        Some((last, rest)) if !rest.is_empty() => format!("{} and {last}", rest.join(", ")),
        _ => names.join(""),
    };
    let lead = match ctx.diagnosis_short() {
        Some(dx) => {
            format!("Consider the patient's {dx} history alongside the vital signs provided.")
        }
        None => "Work from the vital signs provided.".to_string(),
    };
    let limit = intent.threshold.map(|t| {
        let unit = intent.concepts.first().map_or("", |c| c.display_unit());
        let op = if t.direction == Direction::Below {
            "below"
        } else {
            "above"
        };
        (op, format!("{}{unit}", format_value(t.value)))
    });
    let task = match intent.kind {
        IntentKind::Current => format!("State the most recent {cs} reading and when it was measured."),
        IntentKind::Excursion => {
            let (op, v) = limit.unwrap_or(("below", String::new()));
            format!(
                "Determine whether the {cs} went {op} {v} in this period. If it did, give the extreme value with its time, how long it stayed {op} {v}, and when it recovered."
            )
        }
        IntentKind::Compare => format!(
            "Compare the present {cs} with the earliest reading listed, state the size of the change, and describe it as slight, moderate or marked."
        ),
        IntentKind::Fluctuation => format!(
            "Assess whether the {cs} has been unstable over this period. Point out large swings and abrupt rises or falls, and give the time of each."
        ),
        IntentKind::TrendSummary => format!(
            "Describe how the {cs} changed over this period, quoting the first and last values with their times."
        ),
        IntentKind::AvgThreshold => {
            let (op, v) = limit.unwrap_or(("above", String::new()));
            format!("Compute the average {cs} over this period and state whether it is {op} {v}, with any clinical significance.")
        }
    };
    format!("{lead} {task} {CLOSING}")
}

/// Assembles the prompt. `question` is embedded verbatim.
pub fn build_prompt(
    intent: &QueryIntent,
    question: &str,
    ctx: &PatientContext,
    rows: &[PromptRow],
) -> Result<PromptText, QueryError> {
    if rows.is_empty() {
        return Err(QueryError::PromptBuild(
            "no vital-sign samples for the prompt".into(),
        ));
    }
    let vitals = rows
        .iter()
        .enumerate()
        .map(|(i, r)| r.render(i))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(PromptText {
        patient_information: ctx.information_line(),
        input_caption: caption(intent),
        input_vitals: vitals,
        query: question.trim().to_string(),
        instruction: instruction(intent, ctx),
    })
}
