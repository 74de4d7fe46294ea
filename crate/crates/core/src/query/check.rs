//! Machine checks over rendered text: every number must be backed by a
//! finding, and both languages must carry the same numbers in order.

use std::sync::OnceLock;

use regex::Regex;

use super::answer::Answer;
use super::text::{format_value, hhmm};

fn token_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // A leading letter run is matched so tokens like "SpO2" can be skipped.
    RE.get_or_init(|| Regex::new(r"[A-Za-z]*\d+(?:[.:]\d+)*").expect("token regex"))
}

/// Numeric tokens (`106`, `14:22`, `101.4`) in reading order, after removing
/// the given identifier spellings. Digits glued to letters are not numbers.
pub fn numeric_tokens(text: &str, identifiers: &[String]) -> Vec<String> {
    let mut cleaned = text.to_string();
    for id in identifiers.iter().filter(|s| !s.is_empty()) {
        cleaned = remove_standalone(&cleaned, id);
    }
    token_re()
        .find_iter(&cleaned)
        .map(|m| m.as_str())
        .filter(|t| t.starts_with(|c: char| c.is_ascii_digit()))
        .map(str::to_string)
        .collect()
}

/// Replaces occurrences of `id` not embedded in a longer number.
fn remove_standalone(text: &str, id: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(pos) = rest.find(id) {
        let before = rest[..pos].chars().next_back();
        let after = rest[pos + id.len()..].chars().next();
        let digit = |c: Option<char>| c.is_some_and(|c| c.is_ascii_digit() || c == '.' || c == ':');
        out.push_str(&rest[..pos]);
        if digit(before) || digit(after) {
            out.push_str(id);
        } else {
            out.push(' ');
        }
        rest = &rest[pos + id.len()..];
    }
    out.push_str(rest);
    out
}

/// Tokens in `text` with no matching finding: clock times must equal a
/// finding's time and other numbers a finding's displayed value. Findings
/// without provenance are reported too.
pub fn check_provenance(text: &str, answer: &Answer) -> Result<(), Vec<String>> {
    let mut bad: Vec<String> = numeric_tokens(text, &answer.identifiers())
        .into_iter()
        .filter(|tok| {
            let backed = if tok.contains(':') {
                answer
                    .findings
                    .iter()
                    .any(|f| f.time.is_some_and(|t| hhmm(t) == *tok))
            } else {
                answer
                    .findings
                    .iter()
                    .any(|f| f.value.is_some_and(|v| format_value(v) == *tok))
            };
            !backed
        })
        .collect();
    bad.extend(
        answer
            .findings
            .iter()
            .filter(|f| f.provenance.is_empty())
            .map(|f| format!("finding {:?} has no provenance", f.role)),
    );
    if bad.is_empty() {
        Ok(())
    } else {
        Err(bad)
    }
}

/// Both renderings carry identical numeric token sequences.
pub fn check_language_parity(answer: &Answer) -> Result<(), (Vec<String>, Vec<String>)> {
    let ids = answer.identifiers();
    let en = numeric_tokens(&answer.text_en, &ids);
    let zh = numeric_tokens(&answer.text_zh, &ids);
    if en == zh {
        Ok(())
    } else {
        Err((en, zh))
    }
}
