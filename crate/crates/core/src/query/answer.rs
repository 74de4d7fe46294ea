//! Deterministic answers: store lookups, findings with provenance, and the
//! English and Chinese renderings built side by side.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::context::PatientContext;
use super::text::{format_value, hhmm, span_parts, with_unit, Lang};
use super::{IntentKind, PatientSelector, QueryConfig, QueryIntent};
use crate::clinical::Concept;
use crate::store::{
    aggregate, excursions, fluctuation, trend_with, AggOp, Direction, Sample, Store, TrendDirection,
};
use crate::time::{self, EpochSeconds, MINUTE};

/// What a number in the answer is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Current,
    Anchor,
    Change,
    Extreme,
    EpisodeStart,
    EpisodeEnd,
    Recovery,
    Duration,
    EpisodeCount,
    Lowest,
    Highest,
    SwingStart,
    SwingEnd,
    TrendStart,
    TrendEnd,
    Slope,
    Mean,
    Threshold,
    SwingDelta,
    SwingSpan,
    Lookback,
    WindowStart,
    WindowEnd,
}

/// Where a number came from: a stored sample or a query/config parameter.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    Sample {
        patient_id: String,
        concept: Concept,
        #[serde(with = "time::iso")]
        time: EpochSeconds,
    },
    Parameter {
        name: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub concept: Option<Concept>,
    pub role: Role,
    pub value: Option<f64>,
    #[serde(with = "time::iso_opt")]
    pub time: Option<EpochSeconds>,
    pub provenance: Vec<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub intent: QueryIntent,
    pub patient_id: String,
    pub bed_id: String,
    pub verdict: Option<bool>,
    pub insufficient_data: bool,
    pub text_en: String,
    pub text_zh: String,
    pub findings: Vec<Finding>,
    /// Every stored sample backing a number, deduplicated and sorted.
    pub provenance: Vec<Provenance>,
}

impl Answer {
    pub fn text(&self, lang: Lang) -> &str {
        match lang {
            Lang::En => &self.text_en,
            Lang::Zh => &self.text_zh,
        }
    }

    /// Identifier spellings that may appear in the text without being
    /// findings.
    pub fn identifiers(&self) -> Vec<String> {
        let mut out = vec![
            self.patient_id.clone(),
            format!("Bed {}", self.bed_id),
            format!("{}床", self.bed_id),
        ];
        let (PatientSelector::Bed(b) | PatientSelector::Id(b)) = &self.intent.patient;
        out.extend([b.clone(), format!("Bed {b}"), format!("{b}床")]);
        // Longest first so "Bed 03" is removed before a bare "03".
        out.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        out.dedup();
        out
    }
}

struct Draft<'a> {
    patient_id: &'a str,
    findings: Vec<Finding>,
    en: Vec<String>,
    zh: String,
}

impl Draft<'_> {
    fn prov(&self, concept: Concept, t: EpochSeconds) -> Provenance {
        Provenance::Sample {
            patient_id: self.patient_id.to_string(),
            concept,
            time: t,
        }
    }

    /// A stored reading; returns its value with unit and its clock time.
    fn sample(
        &mut self,
        concept: Concept,
        role: Role,
        t: EpochSeconds,
        v: f64,
    ) -> (String, String) {
        let provenance = vec![self.prov(concept, t)];
        self.findings.push(Finding {
            concept: Some(concept),
            role,
            value: Some(v),
            time: Some(t),
            provenance,
        });
        (with_unit(concept, v), hhmm(t))
    }

    /// A number computed from stored readings.
    fn derived(
        &mut self,
        concept: Concept,
        role: Role,
        v: f64,
        backing: &[EpochSeconds],
    ) -> String {
        let provenance = backing.iter().map(|&t| self.prov(concept, t)).collect();
        self.findings.push(Finding {
            concept: Some(concept),
            role,
            value: Some(v),
            time: None,
            provenance,
        });
        format_value(v)
    }

    fn param(
        &mut self,
        concept: Option<Concept>,
        role: Role,
        value: Option<f64>,
        t: Option<EpochSeconds>,
        name: &str,
    ) {
        let provenance = vec![Provenance::Parameter {
            name: name.to_string(),
        }];
        self.findings.push(Finding {
            concept,
            role,
            value,
            time: t,
            provenance,
        });
    }

    fn window(&mut self, t0: EpochSeconds, t1: EpochSeconds) -> (String, String) {
        if !self.findings.iter().any(|f| f.role == Role::WindowStart) {
            self.param(None, Role::WindowStart, None, Some(t0), "window_start");
            self.param(None, Role::WindowEnd, None, Some(t1), "window_end");
        }
        (hhmm(t0), hhmm(t1))
    }

    fn say(&mut self, en: impl Into<String>, zh: impl AsRef<str>) {
        self.en.push(en.into());
        self.zh.push_str(zh.as_ref());
    }
}

struct Who {
    en: String,
    zh: String,
}

fn who(intent: &QueryIntent, ctx: &PatientContext) -> Who {
    match &intent.patient {
        PatientSelector::Bed(b) => Who {
            en: format!("the patient in Bed {b}"),
            zh: format!("{b}床患者"),
        },
        PatientSelector::Id(_) => Who {
            en: format!("patient {}", ctx.patient_id),
            zh: format!("患者{}", ctx.patient_id),
        },
    }
}

fn concept_list(concepts: &[Concept], lang: Lang) -> String {
    let names: Vec<&str> = concepts
        .iter()
        .map(|c| match lang {
            Lang::En => c.display_en(),
            Lang::Zh => c.display_zh(),
        })
        .collect();
    match lang {
        Lang::En => names.join(" or "),
        Lang::Zh => names.join("或"),
    }
}

/// Answers `intent` for the patient in `ctx` from the store contents at or
/// before `intent.now`. Missing data yields an explicit insufficient-data
/// answer rather than invented values.
pub fn answer(
    intent: &QueryIntent,
    store: &Store,
    ctx: &PatientContext,
    config: &QueryConfig,
) -> Answer {
    let mut d = Draft {
        patient_id: &ctx.patient_id,
        findings: Vec::new(),
        en: Vec::new(),
        zh: String::new(),
    };
    let who = who(intent, ctx);
    let (verdict, missing) = match intent.kind {
        IntentKind::Current => current(&mut d, intent, store, &who),
        IntentKind::Excursion => excursion(&mut d, intent, store),
        IntentKind::Compare => compare(&mut d, intent, store, config),
        IntentKind::Fluctuation => fluctuating(&mut d, intent, store, config),
        IntentKind::TrendSummary => trend_summary(&mut d, intent, store, config),
        IntentKind::AvgThreshold => average(&mut d, intent, store, ctx),
    };
    let insufficient = missing.len() == intent.concepts.len();
    if insufficient {
        d.findings.clear();
        d.en.clear();
        d.zh.clear();
        let (cs_en, cs_zh) = (
            concept_list(&missing, Lang::En),
            concept_list(&missing, Lang::Zh),
        );
        if intent.kind == IntentKind::Current {
            d.param(None, Role::WindowEnd, None, Some(intent.now), "now");
            let t = hhmm(intent.now);
            d.say(
                format!(
                    "Insufficient data in window: no {cs_en} readings for {} up to {t}.",
                    who.en
                ),
                format!("时间窗内数据不足：截至{t}，{}没有{cs_zh}读数。", who.zh),
            );
        } else {
            let (t0, t1) = match intent.anchor() {
                Some(a) => (a, intent.now),
                None => intent.window(),
            };
            let (s0, s1) = d.window(t0, t1);
            d.say(
                format!("Insufficient data in window: no {cs_en} readings for {} between {s0} and {s1}.", who.en),
                format!("时间窗内数据不足：{s0}至{s1}期间{}没有{cs_zh}读数。", who.zh),
            );
        }
    }

    let provenance: BTreeSet<Provenance> = d
        .findings
        .iter()
        .flat_map(|f| f.provenance.iter())
        .filter(|p| matches!(p, Provenance::Sample { .. }))
        .cloned()
        .collect();
    Answer {
        intent: intent.clone(),
        patient_id: ctx.patient_id.clone(),
        bed_id: ctx.bed_id.clone(),
        verdict: if insufficient { None } else { verdict },
        insufficient_data: insufficient,
        text_en: d.en.join(" "),
        text_zh: d.zh,
        findings: d.findings,
        provenance: provenance.into_iter().collect(),
    }
}

type Outcome = (Option<bool>, Vec<Concept>);

fn current(d: &mut Draft, intent: &QueryIntent, store: &Store, who: &Who) -> Outcome {
    let mut missing = Vec::new();
    let mut first = true;
    for &c in &intent.concepts {
        let Ok(s) = store.latest_at(d.patient_id, c, intent.now) else {
            missing.push(c);
            continue;
        };
        let (v, t) = d.sample(c, Role::Current, s.time, s.value);
        if first {
            d.say(
                format!(
                    "The current {} of {} is {v}, measured at {t}.",
                    c.display_en(),
                    who.en
                ),
                format!("{}当前{}为{v}，测量时间为{t}。", who.zh, c.display_zh()),
            );
            first = false;
        } else {
            d.say(
                format!("The current {} is {v}, measured at {t}.", c.display_en()),
                format!("当前{}为{v}，测量时间为{t}。", c.display_zh()),
            );
        }
    }
    if !first {
        for &c in &missing {
            d.say(
                format!("No {} reading is available.", c.display_en()),
                format!("暂无{}读数。", c.display_zh()),
            );
        }
    }
    (None, missing)
}

fn no_readings(d: &mut Draft, c: Concept, t0: EpochSeconds, t1: EpochSeconds) {
    let (s0, s1) = d.window(t0, t1);
    d.say(
        format!(
            "No {} readings were recorded between {s0} and {s1}.",
            c.display_en()
        ),
        format!("{s0}至{s1}期间无{}读数。", c.display_zh()),
    );
}

fn excursion(d: &mut Draft, intent: &QueryIntent, store: &Store) -> Outcome {
    let Some(thr) = intent.threshold else {
        return (None, intent.concepts.clone());
    };
    let (t0, t1) = intent.window();
    let mut per = Vec::new();
    let mut missing = Vec::new();
    for &c in &intent.concepts {
        let samples = store.window(d.patient_id, c, t0, t1);
        if samples.is_empty() {
            missing.push(c);
        } else {
            let eps = excursions(&samples, thr.value, thr.direction);
            per.push((c, samples, eps));
        }
    }
    if per.is_empty() {
        return (None, missing);
    }
    let verdict = per.iter().any(|(_, _, eps)| !eps.is_empty());
    d.say(
        if verdict { "Yes." } else { "No." },
        if verdict { "是。" } else { "否。" },
    );
    let below = thr.direction == Direction::Below;
    for (c, samples, eps) in &per {
        let c = *c;
        d.param(Some(c), Role::Threshold, Some(thr.value), None, "threshold");
        let limit = with_unit(c, thr.value);
        let Some(ep) = eps.first() else {
            let pick = if below {
                lowest(samples)
            } else {
                highest(samples)
            };
            let (s0, s1) = d.window(t0, t1);
            let (v, t) = d.sample(
                c,
                if below { Role::Lowest } else { Role::Highest },
                pick.time,
                pick.value,
            );
            let (en_bound, zh_bound) = if below {
                ("at or above", "不低于")
            } else {
                ("at or below", "不高于")
            };
            let (en_ext, zh_ext) = if below {
                ("lowest", "低")
            } else {
                ("highest", "高")
            };
            d.say(
                format!("The {} stayed {en_bound} {limit} between {s0} and {s1}; the {en_ext} reading was {v} at {t}.", c.display_en()),
                format!("{}始终{zh_bound}{limit}（{s0}至{s1}），最{zh_ext}读数为{v}（{t}）。", c.display_zh()),
            );
            continue;
        };
        let value_at = |t: EpochSeconds| {
            samples
                .iter()
                .find(|s| s.time == t)
                .map_or(f64::NAN, |s| s.value)
        };
        d.sample(
            c,
            Role::EpisodeStart,
            ep.start_time,
            value_at(ep.start_time),
        );
        d.sample(c, Role::EpisodeEnd, ep.end_time, value_at(ep.end_time));
        let (ext, t_ext) = d.sample(c, Role::Extreme, ep.extreme_time, ep.extreme_value);
        let mut en;
        let mut zh;
        if ep.start_time == ep.extreme_time {
            en = format!(
                "The {} {} {ext} at {t_ext}",
                c.display_en(),
                if below { "dropped to" } else { "rose to" }
            );
            zh = format!(
                "{}{}{ext}（{t_ext}）",
                c.display_zh(),
                if below { "降至" } else { "升至" }
            );
        } else {
            let t_start = hhmm(ep.start_time);
            en = format!(
                "The {} {} {limit} at {t_start} and reached {ext} at {t_ext}",
                c.display_en(),
                if below { "fell below" } else { "rose above" }
            );
            zh = format!(
                "{}{}{limit}（{t_start}起），最{}达到{ext}（{t_ext}）",
                c.display_zh(),
                if below { "低于" } else { "高于" },
                if below { "低" } else { "高" }
            );
        }
        let minutes = ep.duration() as f64 / MINUTE as f64;
        if ep.duration() > 0 {
            let dur = d.derived(c, Role::Duration, minutes, &[ep.start_time, ep.end_time]);
            let unit = if minutes == 1.0 { "minute" } else { "minutes" };
            en += &format!(
                " and remained {} {limit} for approximately {dur} {unit}",
                if below { "below" } else { "above" }
            );
            zh += &format!(
                "，{}{limit}持续约{dur}分钟",
                if below { "低于" } else { "高于" }
            );
        } else {
            en += " in a single reading";
            zh += "（单次读数）";
        }
        match ep.recovery {
            Some((rt, rv)) => {
                let (rv, rt) = d.sample(c, Role::Recovery, rt, rv);
                en += &format!(
                    " before {} {rv} by {rt}.",
                    if below { "rising to" } else { "falling to" }
                );
                zh += &format!(
                    "，之后{}{rv}（{rt}）。",
                    if below { "回升至" } else { "回落至" }
                );
            }
            None => {
                en += " and had not recovered by the end of the window.";
                zh += "，截至时间窗结束仍未恢复。";
            }
        }
        d.say(en, zh);
        if eps.len() > 1 {
            let starts: Vec<EpochSeconds> = eps.iter().map(|e| e.start_time).collect();
            let n = d.derived(c, Role::EpisodeCount, eps.len() as f64, &starts);
            d.say(
                format!("There were {n} separate episodes in the window."),
                format!("时间窗内共出现{n}次独立事件。"),
            );
        }
    }
    for &c in &missing {
        no_readings(d, c, t0, t1);
    }
    (Some(verdict), missing)
}

/// First sample holding the minimum.
fn lowest(samples: &[Sample]) -> Sample {
    samples
        .iter()
        .copied()
        .reduce(|a, b| if b.value < a.value { b } else { a })
        .expect("non-empty")
}

fn highest(samples: &[Sample]) -> Sample {
    samples
        .iter()
        .copied()
        .reduce(|a, b| if b.value > a.value { b } else { a })
        .expect("non-empty")
}

fn lookback_text(d: &mut Draft, intent: &QueryIntent) -> (String, bool) {
    let (n, hours) = span_parts(intent.lookback.unwrap_or(0));
    d.param(None, Role::Lookback, Some(n), None, "lookback");
    (format_value(n), hours)
}

fn compare(d: &mut Draft, intent: &QueryIntent, store: &Store, config: &QueryConfig) -> Outcome {
    let Some(anchor) = intent.anchor() else {
        return (None, intent.concepts.clone());
    };
    let mut pairs = Vec::new();
    let mut missing = Vec::new();
    for &c in &intent.concepts {
        match (
            store.latest_at(d.patient_id, c, intent.now),
            store.latest_at(d.patient_id, c, anchor),
        ) {
            (Ok(now), Ok(then)) => pairs.push((c, now, then)),
            _ => missing.push(c),
        }
    }
    if pairs.is_empty() {
        return (None, missing);
    }
    let (lo, hi) = config.moderate_band;
    for (c, now, then) in pairs {
        let (v1, _) = d.sample(c, Role::Current, now.time, now.value);
        let (v0, t0) = d.sample(c, Role::Anchor, then.time, then.value);
        let delta = now.value - then.value;
        d.derived(c, Role::Change, delta, &[then.time, now.time]);
        let (n, hours) = lookback_text(d, intent);
        let (en_span, zh_span) = if hours {
            ("hour", "小时")
        } else {
            ("minute", "分钟")
        };
        if delta == 0.0 {
            d.say(
                format!(
                    "The current {} is {v1}, unchanged from {v0} at {t0}, indicating no change over the {n}-{en_span} interval.",
                    c.display_en()
                ),
                format!("当前{}为{v1}，与{v0}（{t0}）持平，{n}{zh_span}内无变化。", c.display_zh()),
            );
            continue;
        }
        let rel = if then.value != 0.0 {
            delta.abs() / then.value.abs()
        } else {
            f64::INFINITY
        };
        let (en_deg, zh_deg) = if rel < lo {
            ("slight", "轻度")
        } else if rel <= hi {
            ("moderate", "中度")
        } else {
            ("marked", "显著")
        };
        let up = delta > 0.0;
        d.say(
            format!(
                "The current {} is {v1}, {} {v0} at {t0}, indicating a {en_deg} {} over the {n}-{en_span} interval.",
                c.display_en(),
                if up { "up from" } else { "down from" },
                if up { "increase" } else { "decrease" }
            ),
            format!(
                "当前{}为{v1}，{}{v0}（{t0}），{n}{zh_span}内呈{zh_deg}{}。",
                c.display_zh(),
                if up { "高于" } else { "低于" },
                if up { "上升" } else { "下降" }
            ),
        );
    }
    for &c in &missing {
        d.say(
            format!("No {} reading is available for comparison.", c.display_en()),
            format!("{}读数不足，无法比较。", c.display_zh()),
        );
    }
    (None, missing)
}

fn caution(c: Concept) -> (&'static str, &'static str) {
    match c {
        Concept::SystolicBp | Concept::DiastolicBp => (
            "Such variation may suggest hemodynamic instability.",
            "此类波动可能提示血流动力学不稳定。",
        ),
        Concept::HeartRate => (
            "Such variation may suggest rhythm or hemodynamic instability.",
            "此类波动可能提示心律或血流动力学不稳定。",
        ),
        Concept::RespiratoryRate => (
            "Such variation may suggest respiratory instability.",
            "此类波动可能提示呼吸不稳定。",
        ),
        Concept::OxygenSaturation => (
            "Such variation may suggest unstable oxygenation.",
            "此类波动可能提示氧合不稳定。",
        ),
    }
}

fn fluctuating(
    d: &mut Draft,
    intent: &QueryIntent,
    store: &Store,
    config: &QueryConfig,
) -> Outcome {
    let (t0, t1) = intent.window();
    let mut per = Vec::new();
    let mut missing = Vec::new();
    for &c in &intent.concepts {
        let samples = store.window(d.patient_id, c, t0, t1);
        if samples.is_empty() {
            missing.push(c);
            continue;
        }
        let rule = config.swing_rule(c);
        per.push((c, rule, fluctuation(&samples, rule.delta, rule.span)));
    }
    if per.is_empty() {
        return (None, missing);
    }
    let verdict = per.iter().any(|(_, _, sw)| !sw.is_empty());
    d.say(
        if verdict { "Yes." } else { "No." },
        if verdict { "是。" } else { "否。" },
    );
    let mut cautions: Vec<(&str, &str)> = Vec::new();
    for (c, rule, swings) in &per {
        let c = *c;
        if swings.is_empty() {
            if verdict {
                continue;
            }
            d.param(
                Some(c),
                Role::SwingDelta,
                Some(rule.delta),
                None,
                "swing_delta",
            );
            let span = rule.span as f64 / MINUTE as f64;
            d.param(Some(c), Role::SwingSpan, Some(span), None, "swing_span");
            let (delta, span) = (with_unit(c, rule.delta), format_value(span));
            let (s0, s1) = d.window(t0, t1);
            d.say(
                format!(
                    "The {} showed no change of {delta} or more within {span} minutes between {s0} and {s1}.",
                    c.display_en()
                ),
                format!("{}未出现幅度达{delta}及以上、且发生在{span}分钟内的变化（{s0}至{s1}）。", c.display_zh()),
            );
            continue;
        }
        let mut en = format!("The {}", c.display_en());
        let mut zh = c.display_zh().to_string();
        let mut prev_end: Option<EpochSeconds> = None;
        for sw in swings {
            let rise = sw.change > 0.0;
            let (va, ta) = d.sample(c, Role::SwingStart, sw.t_a, sw.v_a);
            let (vb, tb) = d.sample(c, Role::SwingEnd, sw.t_b, sw.v_b);
            match prev_end {
                None => {
                    en += &format!(
                        " {} from {va} at {ta} to {vb} at {tb}",
                        if rise { "spiked" } else { "dropped" }
                    );
                    zh += &format!(
                        "从{va}（{ta}）{}至{vb}（{tb}）",
                        if rise { "骤升" } else { "骤降" }
                    );
                }
                Some(t) if t == sw.t_a => {
                    en += &format!(
                        ", followed by a {} to {vb} at {tb}",
                        if rise { "rise" } else { "drop" }
                    );
                    zh += &format!("，随后{}至{vb}（{tb}）", if rise { "升" } else { "降" });
                }
                Some(_) => {
                    en += &format!(
                        ", then {} from {va} at {ta} to {vb} at {tb}",
                        if rise { "rose" } else { "fell" }
                    );
                    zh += &format!(
                        "，之后从{va}（{ta}）{}至{vb}（{tb}）",
                        if rise { "升" } else { "降" }
                    );
                }
            }
            prev_end = Some(sw.t_b);
        }
        d.say(en + ".", zh + "。");
        let note = caution(c);
        if !cautions.contains(&note) {
            cautions.push(note);
        }
    }
    for (en, zh) in cautions {
        d.say(en, zh);
    }
    for &c in &missing {
        no_readings(d, c, t0, t1);
    }
    (Some(verdict), missing)
}

fn trend_summary(
    d: &mut Draft,
    intent: &QueryIntent,
    store: &Store,
    config: &QueryConfig,
) -> Outcome {
    let (t0, t1) = intent.window();
    let mut fits = Vec::new();
    let mut missing = Vec::new();
    for &c in &intent.concepts {
        let samples = store.window(d.patient_id, c, t0, t1);
        match trend_with(&samples, config.trend_flat(c)) {
            Some(tr) => fits.push((c, tr, samples)),
            None => missing.push(c),
        }
    }
    if fits.is_empty() {
        return (None, missing);
    }
    let (n, hours) = lookback_text(d, intent);
    let mut en_clauses = Vec::new();
    let mut zh_clauses = Vec::new();
    for (c, tr, samples) in &fits {
        let c = *c;
        let times: Vec<EpochSeconds> = samples.iter().map(|s| s.time).collect();
        d.derived(c, Role::Slope, tr.slope_per_hour, &times);
        let (a, ta) = d.sample(c, Role::TrendStart, tr.start.0, tr.start.1);
        let (b, tb) = d.sample(c, Role::TrendEnd, tr.end.0, tr.end.1);
        let (en_c, zh_c) = (c.display_en(), c.display_zh());
        match tr.direction {
            TrendDirection::Rising => {
                en_clauses.push(format!("{en_c} rose from {a} at {ta} to {b} at {tb}"));
                zh_clauses.push(format!("{zh_c}由{a}（{ta}）升至{b}（{tb}）"));
            }
            TrendDirection::Falling => {
                en_clauses.push(format!("{en_c} fell from {a} at {ta} to {b} at {tb}"));
                zh_clauses.push(format!("{zh_c}由{a}（{ta}）降至{b}（{tb}）"));
            }
            TrendDirection::Flat => {
                en_clauses.push(format!(
                    "{en_c} remained stable, from {a} at {ta} to {b} at {tb}"
                ));
                zh_clauses.push(format!("{zh_c}保持平稳，由{a}（{ta}）至{b}（{tb}）"));
            }
        }
    }
    let en_body = match en_clauses.len() {
        1 => en_clauses[0].clone(),
        2 => format!("{} and {}", en_clauses[0], en_clauses[1]),
        k => format!(
            "{}, and {}",
            en_clauses[..k - 1].join(", "),
            en_clauses[k - 1]
        ),
    };
    let (en_unit, zh_unit) = if hours {
        ("hours", "小时")
    } else {
        ("minutes", "分钟")
    };
    let en_unit = if n == "1" {
        &en_unit[..en_unit.len() - 1]
    } else {
        en_unit
    };
    d.say(
        format!("Over the past {n} {en_unit}, {en_body}."),
        format!("过去{n}{zh_unit}内，{}。", zh_clauses.join("，")),
    );

    let dir = |c: Concept| {
        fits.iter()
            .find(|(x, _, _)| *x == c)
            .map(|(_, tr, _)| tr.direction)
    };
    let rising = |c| dir(c) == Some(TrendDirection::Rising);
    if dir(Concept::OxygenSaturation) == Some(TrendDirection::Falling)
        && (rising(Concept::RespiratoryRate) || rising(Concept::HeartRate))
    {
        d.say(
            "These patterns may indicate early respiratory decompensation.",
            "上述变化可能提示早期呼吸功能失代偿。",
        );
    }
    for &c in &missing {
        d.say(
            format!(
                "There were too few {} readings to estimate a trend.",
                c.display_en()
            ),
            format!("{}读数不足，无法评估趋势。", c.display_zh()),
        );
    }
    (None, missing)
}

/// Named clinical conditions attached to a met threshold.
fn condition(c: Concept, dir: Direction, thr: f64) -> Option<(&'static str, &'static str)> {
    match (c, dir) {
        (Concept::HeartRate, Direction::Above) if thr >= 100.0 => Some(("tachycardia", "心动过速")),
        (Concept::HeartRate, Direction::Below) if thr <= 60.0 => Some(("bradycardia", "心动过缓")),
        (Concept::RespiratoryRate, Direction::Above) if thr >= 20.0 => {
            Some(("tachypnea", "呼吸急促"))
        }
        (Concept::OxygenSaturation, Direction::Below) if thr <= 90.0 => {
            Some(("hypoxemia", "低氧血症"))
        }
        (Concept::SystolicBp, Direction::Above) if thr >= 140.0 => Some(("hypertension", "高血压")),
        (Concept::SystolicBp, Direction::Below) if thr <= 90.0 => Some(("hypotension", "低血压")),
        _ => None,
    }
}

fn average(d: &mut Draft, intent: &QueryIntent, store: &Store, ctx: &PatientContext) -> Outcome {
    let (Some(thr), Some(&c)) = (intent.threshold, intent.concepts.first()) else {
        return (None, intent.concepts.clone());
    };
    let (t0, t1) = intent.window();
    let samples = store.window(d.patient_id, c, t0, t1);
    let Some(mean) = aggregate(&samples, AggOp::Mean) else {
        return (None, vec![c]);
    };
    let (s0, s1) = d.window(t0, t1);
    let times: Vec<EpochSeconds> = samples.iter().map(|s| s.time).collect();
    let m = d.derived(c, Role::Mean, mean, &times) + c.display_unit();
    d.param(Some(c), Role::Threshold, Some(thr.value), None, "threshold");
    let limit = with_unit(c, thr.value);
    let verdict = thr.direction.violates(mean, thr.value);
    let (en_cmp, zh_cmp) = match (thr.direction, verdict) {
        (Direction::Above, true) => ("exceeds", "超过"),
        (Direction::Above, false) => ("does not exceed", "未超过"),
        (Direction::Below, true) => ("is below", "低于"),
        (Direction::Below, false) => ("is not below", "不低于"),
    };
    let (mut en_note, mut zh_note) = (String::new(), String::new());
    if let (true, Some((en_cond, zh_cond))) = (verdict, condition(c, thr.direction, thr.value)) {
        // Diagnoses carrying digits would put unbacked numbers in the text.
        match ctx
            .diagnosis_short()
            .filter(|dx| !dx.chars().any(|ch| ch.is_ascii_digit()))
        {
            Some(dx) => {
                en_note =
                    format!(" and meets the clinical threshold for {en_cond} in this {dx} patient");
                zh_note = format!("，符合该{dx}患者{zh_cond}的临床阈值");
            }
            None => {
                en_note = format!(" and meets the clinical threshold for {en_cond}");
                zh_note = format!("，符合{zh_cond}的临床阈值");
            }
        }
    }
    d.say(
        format!(
            "The average {} between {s0} and {s1} is {m}, which {en_cmp} {limit}{en_note}.",
            c.display_en()
        ),
        format!(
            "{s0}至{s1}期间平均{}为{m}，{zh_cmp}{limit}{zh_note}。",
            c.display_zh()
        ),
    );
    (Some(verdict), Vec::new())
}
