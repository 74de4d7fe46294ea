use serde::{Deserialize, Serialize};

use super::observation::WireObservation;
use super::{
    json_error, ClinicalError, Observation, PlausibilityBounds, Source, SynonymTable, Validity,
};
use crate::time::{self, EpochSeconds};
use crate::vision::RawReading;

/// The structured output of one capture: every observation shares the
/// bundle time, and `seq` increases by one per bundle emitted by an agent.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationBundle {
    agent_id: String,
    seq: u64,
    bundle_time: EpochSeconds,
    observations: Vec<Observation>,
}

impl ObservationBundle {
    pub fn new(
        agent_id: impl Into<String>,
        seq: u64,
        bundle_time: EpochSeconds,
        observations: Vec<Observation>,
    ) -> Result<Self, ClinicalError> {
        let agent_id = agent_id.into();
        if agent_id.is_empty() {
            return Err(ClinicalError::InvalidBundle("empty agent_id".into()));
        }
        if seq == 0 {
            return Err(ClinicalError::InvalidBundle("seq starts at 1".into()));
        }
        if observations.is_empty() {
            return Err(ClinicalError::InvalidBundle("no observations".into()));
        }
        if let Some(o) = observations
            .iter()
            .find(|o| o.effective_time() != bundle_time)
        {
            return Err(ClinicalError::InvalidBundle(format!(
                "observation time {} differs from bundle time {bundle_time}",
                o.effective_time()
            )));
        }
        Ok(ObservationBundle {
            agent_id,
            seq,
            bundle_time,
            observations,
        })
    }

    pub fn agent_id(&self) -> &str {
        &self.agent_id
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn bundle_time(&self) -> EpochSeconds {
        self.bundle_time
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn into_observations(self) -> Vec<Observation> {
        self.observations
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireBundle {
    agent_id: String,
    #[serde(with = "time::iso")]
    bundle_time: EpochSeconds,
    observations: Vec<WireObservation>,
    seq: u64,
}

/// Canonical UTF-8 JSON: keys sorted, numbers with at most two fraction
/// digits, no insignificant whitespace.
pub fn serialize_bundle(b: &ObservationBundle) -> Vec<u8> {
    let wire = WireBundle {
        agent_id: b.agent_id.clone(),
        bundle_time: b.bundle_time,
        observations: b
            .observations
            .iter()
            .cloned()
            .map(WireObservation::from)
            .collect(),
        seq: b.seq,
    };
    serde_json::to_vec(&wire).expect("bundle serialization is infallible")
}

pub fn parse_bundle(bytes: &[u8]) -> Result<ObservationBundle, ClinicalError> {
    let wire: WireBundle = serde_json::from_slice(bytes).map_err(|e| json_error(bytes, &e))?;
    let observations = wire
        .observations
        .into_iter()
        .map(Observation::try_from)
        .collect::<Result<Vec<_>, _>>()?;
    ObservationBundle::new(wire.agent_id, wire.seq, wire.bundle_time, observations)
}

/// Who a bundle is about and which agent produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BundleIdentity {
    pub patient_id: String,
    pub bed_id: String,
    pub agent_id: String,
}

/// Readings discarded while structuring, by reason.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropCounts {
    pub unmapped: u32,
    pub unparseable: u32,
    pub implausible: u32,
}

impl DropCounts {
    pub fn total(&self) -> u32 {
        self.unmapped + self.unparseable + self.implausible
    }
}

fn parse_decimal(text: &str) -> Option<f64> {
    let t = text.trim();
    let (int, frac) = match t.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (t, None),
    };
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !digits(int) || frac.is_some_and(|f| !digits(f)) {
        return None;
    }
    t.parse().ok()
}

/// Maps, parses and range-checks raw readings into a bundle stamped at `t`.
/// Readings that fail any step are dropped and counted, never repaired.
pub fn build_bundle_with(
    readings: &[RawReading],
    identity: &BundleIdentity,
    seq: u64,
    t: EpochSeconds,
    synonyms: &SynonymTable,
    bounds: &PlausibilityBounds,
) -> Result<(ObservationBundle, DropCounts), ClinicalError> {
    let mut drops = DropCounts::default();
    let mut observations = Vec::with_capacity(readings.len());
    for r in readings {
        let Some(concept) = synonyms.lookup(&r.label_text) else {
            drops.unmapped += 1;
            continue;
        };
        let Some(value) = parse_decimal(&r.value_text) else {
            drops.unparseable += 1;
            continue;
        };
        if bounds.check(concept, value) == Validity::Implausible {
            drops.implausible += 1;
            continue;
        }
        let confidence = r.confidence.clamp(0.0, 1.0);
        observations.push(Observation::new(
            identity.patient_id.clone(),
            identity.bed_id.clone(),
            concept,
            value,
            t,
            confidence,
            Source::Vision,
        )?);
    }
    if observations.is_empty() {
        return Err(ClinicalError::EmptyBundle(drops));
    }
    Ok((
        ObservationBundle::new(identity.agent_id.clone(), seq, t, observations)?,
        drops,
    ))
}

/// [`build_bundle_with`] using the bundled synonym table and default bounds.
pub fn build_bundle(
    readings: &[RawReading],
    identity: &BundleIdentity,
    seq: u64,
    t: EpochSeconds,
) -> Result<(ObservationBundle, DropCounts), ClinicalError> {
    build_bundle_with(
        readings,
        identity,
        seq,
        t,
        &SynonymTable::default(),
        &PlausibilityBounds::default(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clinical::Concept;
    use proptest::prelude::*;

    fn reading(label: &str, value: &str) -> RawReading {
        RawReading {
            label_text: label.into(),
            value_text: value.into(),
            confidence: 1.0,
            frame_time: 0.0,
        }
    }

    fn identity() -> BundleIdentity {
        BundleIdentity {
            patient_id: "P-003".into(),
            bed_id: "03".into(),
            agent_id: "edge-03".into(),
        }
    }

    fn clean() -> Vec<RawReading> {
        vec![
            reading("HR:", "85"),
            reading("RR:", "18"),
            reading("SPO2:", "98"),
            reading("NIBP-S", "120"),
            reading("NIBP-D", "80"),
        ]
    }

    #[test]
    fn five_clean_readings() {
        let (b, drops) = build_bundle(&clean(), &identity(), 7, 1_700_000_000).unwrap();
        assert_eq!(b.observations().len(), 5);
        assert_eq!(drops, DropCounts::default());
        assert_eq!(b.seq(), 7);
        assert!(b
            .observations()
            .iter()
            .all(|o| o.source() == Source::Vision && o.effective_time() == 1_700_000_000));
        assert_eq!(b.observations()[2].concept(), Concept::OxygenSaturation);
    }

    #[test]
    fn drops_are_counted_by_reason() {
        let mut rs = clean();
        rs[0] = reading("HR:", "8S5");
        rs[2] = reading("SpO2:", "888");
        rs.push(reading("XYZ", "12"));
        let (b, drops) = build_bundle(&rs, &identity(), 1, 1_700_000_000).unwrap();
        assert_eq!(b.observations().len(), 3);
        assert_eq!(
            drops,
            DropCounts {
                unmapped: 1,
                unparseable: 1,
                implausible: 1
            }
        );
    }

    #[test]
    fn implausible_oracle_agrees_with_bounds() {
        // 888 > 100 (SpO2 ceiling); 100 is the inclusive ceiling itself.
        for (v, keep) in [("888", false), ("100", true), ("49", false), ("50", true)] {
            let r = build_bundle(&[reading("SpO2:", v)], &identity(), 1, 10);
            assert_eq!(r.is_ok(), keep, "value {v}");
        }
    }

    #[test]
    fn nothing_survives() {
        let err = build_bundle(&[reading("XYZ", "1")], &identity(), 1, 10).unwrap_err();
        assert!(matches!(err, ClinicalError::EmptyBundle(d) if d.unmapped == 1));
    }

    #[test]
    fn decimal_parsing_is_strict() {
        assert_eq!(parse_decimal("85"), Some(85.0));
        assert_eq!(parse_decimal("36.5"), Some(36.5));
        for bad in ["", ".", "8S5", "1e3", "-4", "3.", ".5", "1/2"] {
            assert_eq!(parse_decimal(bad), None, "{bad}");
        }
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let (b, _) = build_bundle(&clean(), &identity(), 3, 1_700_000_000).unwrap();
        let bytes = serialize_bundle(&b);
        let cut = &bytes[..bytes.len() - 10];
        match parse_bundle(cut) {
            Err(ClinicalError::Parse { offset, .. }) => assert_eq!(offset, cut.len()),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(
            parse_bundle(b"{\"agent_id\": 5}"),
            Err(ClinicalError::Parse { offset: 14, .. })
        ));
    }

    #[test]
    fn permuted_fields_parse_to_same_bundle() {
        let text = r#"{"seq":2,"observations":[{"value":98,"unit":"percent","time":"2023-11-14T22:13:20Z","source":"vision","patient_id":"P-003","confidence":0.9,"code":"oxygen-saturation","bed_id":"03"}],"bundle_time":"2023-11-14T22:13:20Z","agent_id":"edge-03"}"#;
        let b = parse_bundle(text.as_bytes()).unwrap();
        let canonical = serialize_bundle(&b);
        assert_eq!(
            String::from_utf8(canonical.clone()).unwrap(),
            r#"{"agent_id":"edge-03","bundle_time":"2023-11-14T22:13:20Z","observations":[{"bed_id":"03","code":"oxygen-saturation","confidence":0.9,"patient_id":"P-003","source":"vision","time":"2023-11-14T22:13:20Z","unit":"percent","value":98}],"seq":2}"#
        );
        assert_eq!(parse_bundle(&canonical).unwrap(), b);
    }

    #[test]
    fn bundle_invariants() {
        let o =
            Observation::new("P", "1", Concept::HeartRate, 80.0, 100, 1.0, Source::Vision).unwrap();
        assert!(ObservationBundle::new("a", 1, 101, vec![o.clone()]).is_err());
        assert!(ObservationBundle::new("a", 0, 100, vec![o.clone()]).is_err());
        assert!(ObservationBundle::new("a", 1, 100, vec![]).is_err());
        assert!(ObservationBundle::new("a", 1, 100, vec![o]).is_ok());
    }

    fn arb_bundle() -> impl Strategy<Value = ObservationBundle> {
        let obs = (
            0usize..5,
            0u32..30000,
            0u32..=100,
            prop::sample::select(vec![Source::Vision, Source::Fixture, Source::Manual]),
        );
        (
            "[a-z0-9-]{1,12}",
            1u64..1_000_000,
            1i64..4_000_000_000,
            prop::collection::vec(obs, 1..8),
        )
            .prop_map(|(agent, seq, t, obs)| {
                let observations = obs
                    .into_iter()
                    .map(|(c, v, conf, src)| {
                        Observation::new(
                            "P-x",
                            "bed 1",
                            Concept::ALL[c],
                            v as f64 / 100.0,
                            t,
                            conf as f64 / 100.0,
                            src,
                        )
                        .unwrap()
                    })
                    .collect();
                ObservationBundle::new(agent, seq, t, observations).unwrap()
            })
    }

    proptest! {
        #[test]
        fn codec_round_trip_is_identity(b in arb_bundle()) {
            let bytes = serialize_bundle(&b);
            let back = parse_bundle(&bytes).unwrap();
            prop_assert_eq!(&back, &b);
            prop_assert_eq!(serialize_bundle(&back), bytes);
        }
    }
}
