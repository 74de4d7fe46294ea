//! Epoch-second timestamps and their textual forms.

use chrono::{DateTime, NaiveDateTime, Timelike, Utc};

/// Seconds since the Unix epoch, UTC.
pub type EpochSeconds = i64;

pub const MINUTE: EpochSeconds = 60;
pub const HOUR: EpochSeconds = 3600;

/// `2025-03-14T14:22:00Z`
pub fn to_iso8601(t: EpochSeconds) -> String {
    match DateTime::<Utc>::from_timestamp(t, 0) {
        Some(dt) => dt.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        None => t.to_string(),
    }
}

/// Accepts RFC 3339 (any offset) or a naive `YYYY-MM-DDTHH:MM:SS` taken as UTC.
pub fn parse_iso8601(s: &str) -> Option<EpochSeconds> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .ok()
        .map(|n| n.and_utc().timestamp())
}

/// Wall-clock `HH:MM` in UTC, the form used in rendered answers.
pub fn clock_hhmm(t: EpochSeconds) -> String {
    match DateTime::<Utc>::from_timestamp(t, 0) {
        Some(dt) => format!("{:02}:{:02}", dt.hour(), dt.minute()),
        None => String::from("??:??"),
    }
}

pub fn now_epoch() -> EpochSeconds {
    Utc::now().timestamp()
}

/// Serde adapter for ISO-8601 timestamps.
pub mod iso {
    use super::{parse_iso8601, to_iso8601, EpochSeconds};
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &EpochSeconds, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&to_iso8601(*t))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<EpochSeconds, D::Error> {
        let raw = String::deserialize(d)?;
        parse_iso8601(&raw).ok_or_else(|| D::Error::custom(format!("invalid timestamp {raw:?}")))
    }
}

/// Serde adapter for optional ISO-8601 timestamps.
pub mod iso_opt {
    use super::{parse_iso8601, to_iso8601, EpochSeconds};
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &Option<EpochSeconds>, s: S) -> Result<S::Ok, S::Error> {
        match t {
            Some(t) => s.serialize_str(&to_iso8601(*t)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<EpochSeconds>, D::Error> {
        match Option::<String>::deserialize(d)? {
            None => Ok(None),
            Some(raw) => parse_iso8601(&raw)
                .map(Some)
                .ok_or_else(|| D::Error::custom(format!("invalid timestamp {raw:?}"))),
        }
    }
}
