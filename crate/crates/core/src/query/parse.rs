//! Keyword-and-pattern grammar for physician questions.

use std::sync::OnceLock;

use regex::Regex;

use super::{IntentKind, PatientSelector, QueryError, QueryIntent, Threshold};
use crate::clinical::{Concept, SynonymTable};
use crate::store::Direction;
use crate::time::{EpochSeconds, HOUR, MINUTE};

use super::text::format_value;

/// Example phrasings, listed in unparseable-query errors.
pub const SUPPORTED_FORMS: &[&str] = &[
    "What is the current <vital> of the patient in Bed <n>?",
    "Has the <vital> dropped below <value> in the past <duration>?",
    "Compare the <vital> now and <duration> ago.",
    "Is there any abnormal fluctuation in <vital> within the last <duration>?",
    "Summarize the trend of the vital signs over the last <duration>.",
    "What is the average <vital> over the past <duration>, and does it exceed <value>?",
];

const VITAL_SIGNS: [Concept; 3] = [
    Concept::HeartRate,
    Concept::RespiratoryRate,
    Concept::OxygenSaturation,
];
const BLOOD_PRESSURE: [Concept; 2] = [Concept::SystolicBp, Concept::DiastolicBp];

/// Phrases naming more than one concept, on top of the shared synonym table.
const GROUPS: &[(&str, &[Concept])] = &[
    ("blood pressure", &BLOOD_PRESSURE),
    ("bp", &BLOOD_PRESSURE),
    ("nibp", &BLOOD_PRESSURE),
    ("abp", &BLOOD_PRESSURE),
    ("vital signs", &VITAL_SIGNS),
    ("vitals", &VITAL_SIGNS),
    ("pulse rate", &[Concept::HeartRate]),
    ("oxygen", &[Concept::OxygenSaturation]),
];

const NUMBER_WORDS: [&str; 12] = [
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven",
    "twelve",
];

struct Grammar {
    concepts: Regex,
    phrases: Vec<(String, Vec<Concept>)>,
    duration: Regex,
    comparator: Regex,
    bed: Regex,
    patient_id: Regex,
    cue_compare: Regex,
    cue_average: Regex,
    cue_fluctuation: Regex,
    cue_trend: Regex,
    cue_current: Regex,
}

fn grammar() -> &'static Grammar {
    static G: OnceLock<Grammar> = OnceLock::new();
    G.get_or_init(|| {
        let mut phrases: Vec<(String, Vec<Concept>)> = SynonymTable::default()
            .entries()
            .map(|(label, c)| (label.to_lowercase(), vec![c]))
            .collect();
        phrases.extend(GROUPS.iter().map(|(p, cs)| (p.to_string(), cs.to_vec())));
        // Longest first so alternation prefers "systolic blood pressure" over
        // "blood pressure" at the same position.
        phrases.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(&b.0)));
        let alternation = phrases.iter().map(|(p, _)| regex::escape(p)).collect::<Vec<_>>().join("|");
        let re = |s: &str| Regex::new(s).expect("grammar regex");
        Grammar {
            concepts: re(&format!(r"\b(?:{alternation})\b")),
            phrases,
            duration: re(&format!(
                r"\b(?:(?P<n>\d+|an?|{words})[\s-]*|(?P<bare>past|last|previous)\s+)(?P<u>hours?|hrs?|minutes?|mins?)\b(?P<ago>\s+ago)?",
                words = NUMBER_WORDS.join("|")
            )),
            comparator: re(
                r"\b(?P<op>below|under|less than|lower than|fewer than|above|over|exceeds?|exceeded|exceeding|greater than|higher than|more than)\s+(?P<v>\d+(?:\.\d+)?)\s*(?P<unit>%|percent\b|bpm\b|mmhg\b|breaths/min|beats/min)?(?P<rest>\s*[a-z]*)",
            ),
            bed: re(r"\bbed\s*(?:no\.?|number|#)?\s*(\d+)\b"),
            patient_id: re(r"(?i)\bpatient\s+(?:id\s+)?([a-z0-9][a-z0-9_-]*\d[a-z0-9_-]*)"),
            cue_compare: re(r"\b(?:compare|compared|versus|vs)\b"),
            cue_average: re(r"\b(?:average|mean)\b"),
            cue_fluctuation: re(r"\b(?:fluctuat\w*|unstable|instability|swings?|variability)\b"),
            cue_trend: re(r"\b(?:trends?|summari[sz]e|summary|overview)\b"),
            cue_current: re(r"\b(?:current|currently|now|latest|present|what is|what's)\b"),
        }
    })
}

struct Duration {
    seconds: EpochSeconds,
    ago: bool,
}

fn durations(g: &Grammar, text: &str) -> Vec<Duration> {
    g.duration
        .captures_iter(text)
        .filter_map(|c| {
            let n = match c.name("n").map(|m| m.as_str()) {
                None => 1,
                Some("a" | "an") => 1,
                Some(w) => match NUMBER_WORDS.iter().position(|x| *x == w) {
                    Some(i) => i as i64 + 1,
                    None => w.parse::<i64>().ok()?,
                },
            };
            let unit = if c["u"].starts_with('h') {
                HOUR
            } else {
                MINUTE
            };
            Some(Duration {
                seconds: n.checked_mul(unit)?,
                ago: c.name("ago").is_some(),
            })
        })
        .filter(|d| d.seconds > 0)
        .collect()
}

fn threshold(g: &Grammar, text: &str) -> Option<Threshold> {
    g.comparator.captures_iter(text).find_map(|c| {
        // "over 6 hours" is a duration, not a comparator.
        let rest = c.name("rest").map_or("", |m| m.as_str().trim());
        if c.name("unit").is_none()
            && [
                "hour", "hours", "hrs", "hr", "minutes", "minute", "mins", "min",
            ]
            .contains(&rest)
        {
            return None;
        }
        let direction = match &c["op"] {
            "below" | "under" | "less than" | "lower than" | "fewer than" => Direction::Below,
            _ => Direction::Above,
        };
        Some(Threshold {
            value: c["v"].parse().ok()?,
            direction,
        })
    })
}

fn concepts(g: &Grammar, text: &str) -> Vec<Concept> {
    let mut out: Vec<Concept> = Vec::new();
    for m in g.concepts.find_iter(text) {
        let phrase = m.as_str();
        if let Some((_, cs)) = g.phrases.iter().find(|(p, _)| p == phrase) {
            for c in cs {
                if !out.contains(c) {
                    out.push(*c);
                }
            }
        }
    }
    out
}

/// Parses `text` into an intent with relative times resolved against `now`.
/// Questions naming no patient fall back to `default_patient`.
pub fn parse_query(
    text: &str,
    now: EpochSeconds,
    default_patient: Option<&str>,
) -> Result<QueryIntent, QueryError> {
    let g = grammar();
    let original = text
        .replace(['\u{2019}', '\u{2018}'], "'")
        .replace('\u{2010}', "-");
    let lower = original.to_lowercase();

    let has_ago = durations(g, &lower).iter().any(|d| d.ago);
    let threshold = threshold(g, &lower);
    let kind = if g.cue_compare.is_match(&lower) || (has_ago && g.cue_current.is_match(&lower)) {
        IntentKind::Compare
    } else if g.cue_average.is_match(&lower) {
        IntentKind::AvgThreshold
    } else if g.cue_fluctuation.is_match(&lower) {
        IntentKind::Fluctuation
    } else if g.cue_trend.is_match(&lower) {
        IntentKind::TrendSummary
    } else if threshold.is_some() {
        IntentKind::Excursion
    } else if g.cue_current.is_match(&lower) {
        IntentKind::Current
    } else {
        return Err(QueryError::Unparseable);
    };

    let patient = if let Some(c) = g.patient_id.captures(&original) {
        PatientSelector::Id(c[1].to_string())
    } else if let Some(c) = g.bed.captures(&lower) {
        PatientSelector::Bed(c[1].to_string())
    } else if let Some(p) = default_patient {
        PatientSelector::Id(p.to_string())
    } else {
        return Err(QueryError::MissingPatient);
    };

    let mut concepts = concepts(g, &lower);
    if concepts.is_empty() && kind == IntentKind::TrendSummary {
        concepts = VITAL_SIGNS.to_vec();
    }

    let spans = durations(g, &lower);
    let lookback = match kind {
        IntentKind::Current => None,
        IntentKind::Compare => spans
            .iter()
            .find(|d| d.ago)
            .or(spans.first())
            .map(|d| d.seconds),
        _ => Some(
            spans
                .iter()
                .find(|d| !d.ago)
                .map_or(default_lookback(kind), |d| d.seconds),
        ),
    };
    let threshold = match kind {
        IntentKind::Excursion | IntentKind::AvgThreshold => threshold,
        _ => None,
    };

    let intent = QueryIntent {
        kind,
        concepts,
        patient,
        now,
        lookback,
        threshold,
    };
    intent.validate()?;
    Ok(intent)
}

fn default_lookback(kind: IntentKind) -> EpochSeconds {
    match kind {
        IntentKind::Fluctuation => 30 * MINUTE,
        IntentKind::TrendSummary => 6 * HOUR,
        _ => HOUR,
    }
}

fn duration_text(seconds: EpochSeconds) -> String {
    if seconds % HOUR == 0 {
        let h = seconds / HOUR;
        format!("{h} hour{}", if h == 1 { "" } else { "s" })
    } else {
        let m = seconds / MINUTE;
        format!("{m} minute{}", if m == 1 { "" } else { "s" })
    }
}

/// Renders an intent as a question in the grammar's canonical English; the
/// result parses back to an equal intent.
pub fn canonical_text(intent: &QueryIntent) -> String {
    let cs = intent
        .concepts
        .iter()
        .map(|c| c.display_en())
        .collect::<Vec<_>>()
        .join(" and ");
    let who = match &intent.patient {
        PatientSelector::Bed(b) => format!("the patient in Bed {b}"),
        PatientSelector::Id(id) => format!("patient {id}"),
    };
    let d = duration_text(intent.lookback.unwrap_or(HOUR));
    let limit = |t: &Threshold| {
        let unit = intent.concepts.first().map_or("", |c| c.display_unit());
        let op = match t.direction {
            Direction::Below => "below",
            Direction::Above => "above",
        };
        format!("{op} {}{unit}", format_value(t.value))
    };
    match intent.kind {
        IntentKind::Current => format!("What is the current {cs} of {who}?"),
        IntentKind::Excursion => {
            let t = intent.threshold.as_ref().map(limit).unwrap_or_default();
            format!("Has the {cs} of {who} been {t} in the past {d}?")
        }
        IntentKind::Compare => format!("Compare the {cs} of {who} now and {d} ago."),
        IntentKind::Fluctuation => {
            format!("Is there any abnormal fluctuation in the {cs} of {who} within the last {d}?")
        }
        IntentKind::TrendSummary => {
            format!("Summarize the trend of the {cs} of {who} over the last {d}.")
        }
        IntentKind::AvgThreshold => {
            let t = intent.threshold.as_ref().map(limit).unwrap_or_default();
            format!("What is the average {cs} of {who} over the past {d}, and is it {t}?")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const NOW: EpochSeconds = 1_741_962_120;

    fn parse(text: &str) -> QueryIntent {
        parse_query(text, NOW, Some("P-1")).unwrap()
    }

    #[test]
    fn current_with_bed() {
        let i = parse("What is the current heart rate of the patient in Bed 03?");
        assert_eq!(i.kind, IntentKind::Current);
        assert_eq!(i.concepts, vec![Concept::HeartRate]);
        assert_eq!(i.patient, PatientSelector::Bed("03".into()));
        assert_eq!(i.lookback, None);
    }

    #[test]
    fn excursion_past_hour() {
        let i = parse("Has the patient\u{2019}s SpO2 dropped below 90% in the past hour?");
        assert_eq!(i.kind, IntentKind::Excursion);
        assert_eq!(i.concepts, vec![Concept::OxygenSaturation]);
        assert_eq!(
            i.threshold,
            Some(Threshold {
                value: 90.0,
                direction: Direction::Below
            })
        );
        assert_eq!(i.window(), (NOW - HOUR, NOW));
        assert_eq!(i.patient, PatientSelector::Id("P-1".into()));
    }

    #[test]
    fn compare_with_number_word() {
        let i = parse("Compare the respiratory rate now and two hours ago. Has it increased?");
        assert_eq!(i.kind, IntentKind::Compare);
        assert_eq!(i.anchor(), Some(NOW - 2 * HOUR));
    }

    #[test]
    fn fluctuation_blood_pressure_group() {
        let i = parse(
            "Is there any abnormal fluctuation in blood pressure within the last 30 minutes?",
        );
        assert_eq!(i.kind, IntentKind::Fluctuation);
        assert_eq!(i.concepts, vec![Concept::SystolicBp, Concept::DiastolicBp]);
        assert_eq!(i.lookback, Some(30 * MINUTE));
    }

    #[test]
    fn trend_and_average() {
        let t = parse("Summarize the trend of the patient's vital signs over the last 6 hours.");
        assert_eq!(t.kind, IntentKind::TrendSummary);
        assert_eq!(t.concepts, VITAL_SIGNS.to_vec());
        assert_eq!(t.lookback, Some(6 * HOUR));
        let a = parse(
            "What is the average heart rate over the past 2 hours, and does it exceed 100 bpm?",
        );
        assert_eq!(a.kind, IntentKind::AvgThreshold);
        assert_eq!(
            a.threshold,
            Some(Threshold {
                value: 100.0,
                direction: Direction::Above
            })
        );
        assert_eq!(a.lookback, Some(2 * HOUR));
    }

    #[test]
    fn unstable_counts_as_fluctuation() {
        let i = parse(
            "Has the patient's respiratory rate become increasingly unstable in the last 2 hours?",
        );
        assert_eq!(i.kind, IntentKind::Fluctuation);
        assert_eq!(i.concepts, vec![Concept::RespiratoryRate]);
        assert_eq!(i.lookback, Some(2 * HOUR));
    }

    #[test]
    fn over_a_duration_is_not_a_threshold() {
        let i = parse("Has the heart rate been above 120 over 3 hours?");
        assert_eq!(i.threshold.unwrap().value, 120.0);
        assert_eq!(i.lookback, Some(3 * HOUR));
        assert!(parse_query("Has the heart rate gone up over 3 hours?", NOW, Some("P")).is_err());
    }

    #[test]
    fn errors() {
        assert_eq!(parse_query("", NOW, None), Err(QueryError::Unparseable));
        assert_eq!(
            parse_query("hello there", NOW, Some("P")),
            Err(QueryError::Unparseable)
        );
        assert_eq!(
            parse_query("What is the current heart rate?", NOW, None),
            Err(QueryError::MissingPatient)
        );
        assert_eq!(
            parse_query("What is the current mood?", NOW, Some("P")),
            Err(QueryError::MissingConcept(IntentKind::Current))
        );
        assert_eq!(
            parse_query("Compare the heart rate.", NOW, Some("P")),
            Err(QueryError::MissingAnchor)
        );
        assert!(QueryError::Unparseable
            .to_string()
            .contains("Summarize the trend"));
    }

    #[test]
    fn explicit_patient_id_beats_default() {
        let i = parse("What is the latest SpO2 for patient P-007?");
        assert_eq!(i.patient, PatientSelector::Id("P-007".into()));
    }

    #[test]
    fn canonical_round_trip() {
        for q in [
            "What is the current heart rate of the patient in Bed 03?",
            "Has the patient's SpO2 dropped below 90% in the past hour?",
            "Compare the respiratory rate now and two hours ago. Has it increased?",
            "Is there any abnormal fluctuation in blood pressure within the last 30 minutes?",
            "Summarize the trend of the patient's vital signs over the last 6 hours.",
            "What is the average heart rate over the past 2 hours, and does it exceed 100 bpm?",
        ] {
            let i = parse(q);
            let again = parse_query(&canonical_text(&i), NOW, None).unwrap();
            assert_eq!(again, i, "{}", canonical_text(&i));
        }
    }
}
