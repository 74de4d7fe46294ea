use serde::{Deserialize, Serialize};

use crate::clinical::Concept;
use crate::store::Store;
use crate::time::{EpochSeconds, HOUR};

/// Overview grouping for a patient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatientStatus {
    Critical,
    UnderTreatment,
    Recovering,
    Stable,
}

/// (normal low, normal high, critical low, critical high), inclusive normal.
fn limits(c: Concept) -> (f64, f64, f64, f64) {
    match c {
        Concept::HeartRate => (60.0, 100.0, 40.0, 140.0),
        Concept::RespiratoryRate => (12.0, 20.0, 8.0, 30.0),
        Concept::OxygenSaturation => (94.0, 100.0, 88.0, f64::INFINITY),
        Concept::SystolicBp => (90.0, 140.0, 80.0, 180.0),
        Concept::DiastolicBp => (60.0, 90.0, 40.0, 110.0),
    }
}

fn abnormal(c: Concept, v: f64) -> bool {
    let (lo, hi, _, _) = limits(c);
    v < lo || v > hi
}

fn critical(c: Concept, v: f64) -> bool {
    let (_, _, lo, hi) = limits(c);
    v < lo || v > hi
}

/// Critical if any latest reading is past a critical limit; under treatment
/// if any is outside its normal range; recovering if all are normal now but
/// some reading in the preceding hour was not; stable otherwise.
pub fn patient_status(store: &Store, patient_id: &str, now: EpochSeconds) -> PatientStatus {
    let latest: Vec<(Concept, f64)> = Concept::ALL
        .into_iter()
        .filter_map(|c| {
            store
                .latest_at(patient_id, c, now)
                .ok()
                .map(|s| (c, s.value))
        })
        .collect();
    if latest.iter().any(|&(c, v)| critical(c, v)) {
        return PatientStatus::Critical;
    }
    if latest.iter().any(|&(c, v)| abnormal(c, v)) {
        return PatientStatus::UnderTreatment;
    }
    let recent_abnormal = Concept::ALL.into_iter().any(|c| {
        store
            .window(patient_id, c, now - HOUR, now)
            .iter()
            .any(|s| abnormal(c, s.value))
    });
    if recent_abnormal {
        PatientStatus::Recovering
    } else {
        PatientStatus::Stable
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clinical::{Observation, Source};

    fn put(store: &Store, c: Concept, t: EpochSeconds, v: f64) {
        let obs = Observation::new("P", "01", c, v, t, 1.0, Source::Fixture).unwrap();
        store.append(&obs).unwrap();
    }

    #[test]
    fn four_groups() {
        let s = Store::in_memory();
        let t0 = 1_000_000;
        put(&s, Concept::HeartRate, t0, 80.0);
        assert_eq!(patient_status(&s, "P", t0), PatientStatus::Stable);
        put(&s, Concept::HeartRate, t0 + 60, 120.0);
        assert_eq!(
            patient_status(&s, "P", t0 + 60),
            PatientStatus::UnderTreatment
        );
        put(&s, Concept::HeartRate, t0 + 120, 80.0);
        assert_eq!(patient_status(&s, "P", t0 + 120), PatientStatus::Recovering);
        assert_eq!(
            patient_status(&s, "P", t0 + 120 + 2 * HOUR),
            PatientStatus::Stable
        );
        put(&s, Concept::OxygenSaturation, t0 + 180, 85.0);
        assert_eq!(patient_status(&s, "P", t0 + 180), PatientStatus::Critical);
    }
}
