use serde::{Deserialize, Serialize};

use crate::clinical::Concept;
use crate::time::{clock_hhmm, EpochSeconds, HOUR, MINUTE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    #[default]
    En,
    Zh,
}

impl std::str::FromStr for Lang {
    type Err = String;

    fn from_str(s: &str) -> Result<Lang, String> {
        match s.to_ascii_lowercase().as_str() {
            "en" => Ok(Lang::En),
            "zh" => Ok(Lang::Zh),
            other => Err(format!(
                "unsupported language {other:?} (expected en or zh)"
            )),
        }
    }
}

/// Integers print bare; anything else to one decimal place.
pub fn format_value(v: f64) -> String {
    let rounded = (v * 10.0).round() / 10.0;
    if rounded.fract() == 0.0 {
        format!("{}", rounded as i64)
    } else {
        format!("{rounded:.1}")
    }
}

pub(crate) fn with_unit(concept: Concept, v: f64) -> String {
    format!("{}{}", format_value(v), concept.display_unit())
}

pub(crate) fn hhmm(t: EpochSeconds) -> String {
    clock_hhmm(t)
}

/// A lookback split into a count and whether it is in hours or minutes.
pub(crate) fn span_parts(seconds: EpochSeconds) -> (f64, bool) {
    if seconds % HOUR == 0 {
        ((seconds / HOUR) as f64, true)
    } else {
        (seconds as f64 / MINUTE as f64, false)
    }
}
