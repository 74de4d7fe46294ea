//! The worked-example fixture: two ICU patients with scripted vitals and six
//! reference questions, each asked at its own clock time.
//!
//! Bed 03 (P-003) covers 12:00 to 14:22 on 2025-03-14 at one sample per
//! minute (blood pressure every five minutes). Bed 07 (P-007) covers 12:00 to
//! 18:00 the same day. All times are UTC.

use crate::clinical::{Concept, Observation, Source};
use crate::query::{
    check_language_parity, check_provenance, numeric_tokens, Answer, ContextRegistry,
    PatientContext,
};
use crate::store::{AppendSummary, Store, StoreError};
use crate::time::{EpochSeconds, MINUTE};

/// 2025-03-14T12:00:00Z.
pub const FIXTURE_T0: EpochSeconds = 1_741_953_600;

pub const BED03_PATIENT: &str = "P-003";
pub const BED07_PATIENT: &str = "P-007";

const fn at(hour: i64, minute: i64) -> EpochSeconds {
    FIXTURE_T0 + (hour - 12) * 3600 + minute * MINUTE
}

/// One reference question with the facts its answer must state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableCase {
    pub question: &'static str,
    /// Patient assumed when the question names none.
    pub default_patient: &'static str,
    pub now: EpochSeconds,
    /// Numeric tokens that must appear, in this order, in the English text.
    pub expect_tokens: &'static [&'static str],
    pub expect_verdict: Option<bool>,
}

pub const TABLE_CASES: [TableCase; 6] = [
    TableCase {
        question: "What is the current heart rate of the patient in Bed 03?",
        default_patient: BED03_PATIENT,
        now: at(14, 22),
        expect_tokens: &["106", "14:22"],
        expect_verdict: None,
    },
    TableCase {
        question: "Has the patient\u{2019}s SpO2 dropped below 90% in the past hour?",
        default_patient: BED03_PATIENT,
        now: at(14, 15),
        expect_tokens: &["88", "13:17", "90", "5", "91", "13:23"],
        expect_verdict: Some(true),
    },
    TableCase {
        question: "Compare the respiratory rate now and two hours ago. Has it increased?",
        default_patient: BED03_PATIENT,
        now: at(14, 22),
        expect_tokens: &["26", "20", "12:22"],
        expect_verdict: None,
    },
    TableCase {
        question: "Is there any abnormal fluctuation in blood pressure within the last 30 minutes?",
        default_patient: BED03_PATIENT,
        now: at(14, 15),
        expect_tokens: &["118", "13:45", "152", "14:00", "110", "14:10"],
        expect_verdict: Some(true),
    },
    TableCase {
        question: "Summarize the trend of the patient\u{2019}s vital signs over the last 6 hours.",
        default_patient: BED07_PATIENT,
        now: at(18, 0),
        expect_tokens: &["6", "92", "12:00", "112", "18:00", "20", "27", "97", "94"],
        expect_verdict: None,
    },
    TableCase {
        question:
            "What is the average heart rate over the past 2 hours, and does it exceed 100 bpm?",
        default_patient: BED07_PATIENT,
        now: at(18, 0),
        expect_tokens: &["16:00", "18:00", "102", "100"],
        expect_verdict: Some(true),
    },
];

/// Words that must appear in each case's English text.
pub const TABLE_PHRASES: [&[&str]; 6] = [
    &["current heart rate", "Bed 03"],
    &["Yes."],
    &["moderate increase"],
    &["Yes.", "hemodynamic instability"],
    &["respiratory decompensation"],
    &["exceeds", "tachycardia", "COPD"],
];

/// Checks an answer against its case: verdict, ordered tokens, phrases,
/// provenance of every number, and language parity.
pub fn check_case(index: usize, answer: &Answer) -> Result<(), String> {
    let case = TABLE_CASES
        .get(index)
        .ok_or_else(|| format!("no case {index}"))?;
    if answer.verdict != case.expect_verdict {
        return Err(format!(
            "verdict {:?}, expected {:?}",
            answer.verdict, case.expect_verdict
        ));
    }
    let tokens = numeric_tokens(&answer.text_en, &answer.identifiers());
    let mut rest = tokens.iter();
    for want in case.expect_tokens {
        if !rest.any(|t| t == want) {
            return Err(format!(
                "token {want} missing or out of order in {tokens:?}"
            ));
        }
    }
    for phrase in TABLE_PHRASES[index] {
        if !answer.text_en.contains(phrase) {
            return Err(format!(
                "phrase {phrase:?} missing from {:?}",
                answer.text_en
            ));
        }
    }
    check_provenance(&answer.text_en, answer).map_err(|bad| format!("unbacked tokens {bad:?}"))?;
    check_language_parity(answer)
        .map_err(|(en, zh)| format!("language parity: {en:?} vs {zh:?}"))?;
    Ok(())
}

pub fn table_contexts() -> ContextRegistry {
    let mut reg = ContextRegistry::new();
    reg.insert(PatientContext {
        patient_id: BED03_PATIENT.into(),
        bed_id: "03".into(),
        age: Some(64),
        gender: Some("Female".into()),
        diagnosis: Some("Community-acquired pneumonia".into()),
        history: vec!["Hypertension".into()],
    });
    reg.insert(PatientContext {
        patient_id: BED07_PATIENT.into(),
        bed_id: "07".into(),
        age: Some(72),
        gender: Some("Male".into()),
        diagnosis: Some("COPD (Chronic Obstructive Pulmonary Disease)".into()),
        history: vec!["Hypertension".into(), "Ex-smoker".into()],
    });
    reg
}

/// Bed 07 heart rate over 16:00–18:00: step k of 120. Rises from 92 to 112
/// and is point-symmetric about k = 60, so the window mean is exactly 102.
pub fn bed07_hr_ramp(k: i64) -> f64 {
    let half = |k: i64| 92 + k / 6;
    (if k < 60 {
        half(k)
    } else if k == 60 {
        102
    } else {
        204 - half(120 - k)
    }) as f64
}

fn bed03_spo2(m: i64) -> f64 {
    match m {
        70..=76 => 93.0,
        77 | 78 | 80 => 88.0,
        79 | 81 | 82 => 89.0,
        83 => 91.0,
        84 => 92.0,
        85..=89 => 94.0,
        _ => 96.0,
    }
}

/// Bed 03 systolic pressure at minute `m` (multiples of five).
fn bed03_sys(m: i64) -> f64 {
    match m {
        105 => 118.0,
        110 => 122.0,
        115 => 130.0,
        120 => 152.0,
        125 => 128.0,
        130 => 110.0,
        135 => 114.0,
        _ => [116.0, 118.0, 115.0, 117.0][(m / 5 % 4) as usize],
    }
}

/// Every fixture observation, tagged `Source::Fixture`.
pub fn table_observations() -> Vec<Observation> {
    let mut out = Vec::new();
    let mut push = |pid: &str, bed: &str, c: Concept, t: EpochSeconds, v: f64| {
        out.push(
            Observation::new(pid, bed, c, v, t, 1.0, Source::Fixture)
                .expect("fixture observation is valid"),
        );
    };
    for m in 0..=142 {
        let t = FIXTURE_T0 + m * MINUTE;
        push(
            BED03_PATIENT,
            "03",
            Concept::HeartRate,
            t,
            (90 + 16 * m / 142) as f64,
        );
        push(
            BED03_PATIENT,
            "03",
            Concept::RespiratoryRate,
            t,
            (20 + (6 * (m - 22)).max(0) / 120) as f64,
        );
        push(
            BED03_PATIENT,
            "03",
            Concept::OxygenSaturation,
            t,
            bed03_spo2(m),
        );
        if m % 5 == 0 {
            push(BED03_PATIENT, "03", Concept::SystolicBp, t, bed03_sys(m));
            push(
                BED03_PATIENT,
                "03",
                Concept::DiastolicBp,
                t,
                [74.0, 76.0, 75.0, 77.0][(m / 5 % 4) as usize],
            );
        }
    }
    for m in 0..=360 {
        let t = FIXTURE_T0 + m * MINUTE;
        let hr = if m < 240 {
            92.0
        } else {
            bed07_hr_ramp(m - 240)
        };
        push(BED07_PATIENT, "07", Concept::HeartRate, t, hr);
        push(
            BED07_PATIENT,
            "07",
            Concept::RespiratoryRate,
            t,
            (20 + 7 * m / 360) as f64,
        );
        push(
            BED07_PATIENT,
            "07",
            Concept::OxygenSaturation,
            t,
            (97 - 3 * (m - 120).max(0) / 240) as f64,
        );
        if m % 5 == 0 {
            push(
                BED07_PATIENT,
                "07",
                Concept::SystolicBp,
                t,
                [128.0, 130.0, 127.0, 129.0][(m / 5 % 4) as usize],
            );
            push(
                BED07_PATIENT,
                "07",
                Concept::DiastolicBp,
                t,
                [78.0, 80.0, 77.0, 79.0][(m / 5 % 4) as usize],
            );
        }
    }
    out
}

pub fn load_table_fixture(store: &Store) -> Result<AppendSummary, StoreError> {
    store.append_all(&table_observations())
}
