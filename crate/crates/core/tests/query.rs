mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::Arc;
use std::time::Duration;

use icusync::clinical::{Concept, Observation, Source};
use icusync::fixtures::{
    check_case, load_table_fixture, table_contexts, BED07_PATIENT, FIXTURE_T0, TABLE_CASES,
};
use icusync::query::{
    answer, build_prompt, canonical_text, check_language_parity, check_provenance, parse_query,
    prompt_rows, IntentKind, Lang, LlmAdapter, PatientContext, PatientSelector, QueryConfig,
    QueryEngine, QueryError, QueryIntent, RemoteAdapter, Role, Threshold,
};
use icusync::store::{Direction, Store};
use icusync::time::{HOUR, MINUTE};
use proptest::prelude::*;

fn engine() -> QueryEngine {
    let store = Arc::new(Store::in_memory());
    load_table_fixture(&store).unwrap();
    QueryEngine::new(store).with_contexts(table_contexts())
}

#[test]
fn table_cases_reproduce_reference_answers() {
    let e = engine();
    for (i, case) in TABLE_CASES.iter().enumerate() {
        let r = e
            .ask(
                case.question,
                Some(case.default_patient),
                Some(case.now),
                Lang::En,
            )
            .unwrap();
        if let Err(msg) = check_case(i, &r.answer) {
            panic!("case {i} ({}): {msg}\n{}", case.question, r.answer.text_en);
        }
    }
}

#[test]
fn table_numbers_in_findings() {
    let e = engine();
    let ask = |i: usize| {
        let c = &TABLE_CASES[i];
        e.ask(c.question, Some(c.default_patient), Some(c.now), Lang::En)
            .unwrap()
            .answer
    };
    let value = |a: &icusync::query::Answer, role: Role, concept: Concept| {
        a.findings
            .iter()
            .find(|f| f.role == role && f.concept == Some(concept))
            .and_then(|f| f.value)
            .unwrap()
    };

    let q3 = ask(2);
    assert_eq!(value(&q3, Role::Change, Concept::RespiratoryRate), 6.0);

    let q2 = ask(1);
    assert_eq!(value(&q2, Role::Duration, Concept::OxygenSaturation), 5.0);

    let q6 = ask(5);
    let mean = value(&q6, Role::Mean, Concept::HeartRate);
    assert!((mean - 102.0).abs() <= 1e-9, "{mean}");
    let backing = q6
        .findings
        .iter()
        .find(|f| f.role == Role::Mean)
        .unwrap()
        .provenance
        .len();
    assert_eq!(backing, 121);
}

#[test]
fn trend_slope_matches_closed_form_on_fixture() {
    let e = engine();
    let c = &TABLE_CASES[4];
    let a = e
        .ask(c.question, Some(c.default_patient), Some(c.now), Lang::En)
        .unwrap()
        .answer;
    let slope = a
        .findings
        .iter()
        .find(|f| f.role == Role::Slope && f.concept == Some(Concept::HeartRate))
        .and_then(|f| f.value)
        .unwrap();
    // Ordinary least squares recomputed from the stored window.
    let samples = e
        .store()
        .window(BED07_PATIENT, Concept::HeartRate, c.now - 6 * HOUR, c.now);
    let n = samples.len() as f64;
    let xs: Vec<f64> = samples
        .iter()
        .map(|s| (s.time - samples[0].time) as f64 / 3600.0)
        .collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = samples.iter().map(|s| s.value).sum::<f64>() / n;
    let sxy: f64 = xs
        .iter()
        .zip(&samples)
        .map(|(x, s)| (x - mx) * (s.value - my))
        .sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    assert!((slope - sxy / sxx).abs() < 1e-9);
    assert!(slope > 0.5);
}

#[test]
fn offline_completion_equals_deterministic_text() {
    let e = engine();
    for case in &TABLE_CASES {
        let r = e
            .ask(
                case.question,
                Some(case.default_patient),
                Some(case.now),
                Lang::Zh,
            )
            .unwrap();
        assert_eq!(r.completion.text, r.answer.text_en);
        assert!(!r.completion.fallback);
        assert_eq!(r.text, r.answer.text_zh);
    }
}

#[test]
fn answers_are_deterministic() {
    let (a, b) = (engine(), engine());
    for case in &TABLE_CASES {
        let x = a
            .ask(
                case.question,
                Some(case.default_patient),
                Some(case.now),
                Lang::En,
            )
            .unwrap();
        let y = b
            .ask(
                case.question,
                Some(case.default_patient),
                Some(case.now),
                Lang::En,
            )
            .unwrap();
        assert_eq!(
            serde_json::to_string(&x).unwrap(),
            serde_json::to_string(&y).unwrap()
        );
    }
}

#[test]
fn table_intents_round_trip_through_canonical_text() {
    for case in &TABLE_CASES {
        let intent = parse_query(case.question, case.now, Some(case.default_patient)).unwrap();
        let again = parse_query(&canonical_text(&intent), case.now, None).unwrap();
        assert_eq!(again, intent);
    }
}

#[test]
fn prompt_for_copd_patient() {
    let e = engine();
    let q = "Has the patient's respiratory rate become increasingly unstable in the last 2 hours?";
    let r = e
        .ask(
            q,
            Some(BED07_PATIENT),
            Some(FIXTURE_T0 + 6 * HOUR),
            Lang::En,
        )
        .unwrap();
    let p = r.prompt.unwrap();
    assert_eq!(
        p.patient_information,
        "Age: 72, Gender: Male, Diagnosis: COPD (Chronic Obstructive Pulmonary Disease), Past Medical History: Hypertension, Ex-smoker"
    );
    assert_eq!(p.input_caption, "ICU vital signs over the past 2 hours:");
    assert_eq!(p.input_vitals.matches("[T").count(), 7);
    assert!(
        p.input_vitals
            .starts_with("[T0 16:00: HR 92 bpm, RR 24 bpm, SpO2 96%"),
        "{}",
        p.input_vitals
    );
    assert_eq!(p.query, q);
    assert!(p.instruction.contains("COPD"));
    assert!(p
        .instruction
        .ends_with("Keep the response concise and clinically interpretable."));
    let rendered = p.render();
    let lines: Vec<&str> = rendered.lines().filter(|l| !l.is_empty()).collect();
    assert!(lines[0] == "Patient Information:");
    assert!(lines[2].starts_with("Input: "));
    assert!(lines[4].starts_with("Query: "));
    assert!(lines[5].starts_with("Instruction: "));
}

#[test]
fn six_hour_window_gives_hourly_entries() {
    let e = engine();
    let intent = parse_query(
        TABLE_CASES[4].question,
        TABLE_CASES[4].now,
        Some(BED07_PATIENT),
    )
    .unwrap();
    let rows = prompt_rows(e.store(), BED07_PATIENT, &intent);
    let times: Vec<i64> = rows.iter().map(|r| r.time).collect();
    assert_eq!(
        times,
        (0..=6).map(|k| FIXTURE_T0 + k * HOUR).collect::<Vec<_>>()
    );
    let ctx = e.resolve(&intent.patient).unwrap();
    let p = build_prompt(&intent, TABLE_CASES[4].question, &ctx, &rows).unwrap();
    assert!(
        p.input_vitals
            .ends_with("[T6 18:00: HR 112 bpm, RR 27 bpm, SpO2 94%, BP 127/77 mmHg]")
            || p.input_vitals
                .ends_with("[T6 18:00: HR 112 bpm, RR 27 bpm, SpO2 94%]"),
        "{}",
        p.input_vitals
    );
}

#[test]
fn insufficient_data_is_explicit() {
    let e = engine();
    let r = e
        .ask(
            "Has the SpO2 dropped below 90% in the past hour?",
            Some(BED07_PATIENT),
            Some(FIXTURE_T0 - 2 * HOUR),
            Lang::En,
        )
        .unwrap();
    assert!(r.answer.insufficient_data);
    assert_eq!(r.answer.verdict, None);
    assert!(r.answer.text_en.starts_with("Insufficient data in window"));
    assert!(r
        .answer
        .findings
        .iter()
        .all(|f| f.role == Role::WindowStart || f.role == Role::WindowEnd));
    check_provenance(&r.answer.text_en, &r.answer).unwrap();
    check_language_parity(&r.answer).unwrap();
    assert!(r.prompt.is_none());
    assert!(r.completion.fallback);
}

#[test]
fn unknown_patient_and_user_errors() {
    let e = engine();
    assert_eq!(
        e.ask(
            "What is the current heart rate of the patient in Bed 11?",
            None,
            None,
            Lang::En
        )
        .unwrap_err(),
        QueryError::UnknownPatient("Bed 11".into())
    );
    assert_eq!(
        e.ask("", None, None, Lang::En).unwrap_err(),
        QueryError::Unparseable
    );
    assert!(QueryError::Unparseable.is_user_error());
}

#[test]
fn default_now_is_latest_store_time() {
    let e = engine();
    let r = e
        .ask(
            "What is the current heart rate of the patient in Bed 07?",
            None,
            None,
            Lang::En,
        )
        .unwrap();
    assert_eq!(r.answer.intent.now, FIXTURE_T0 + 6 * HOUR);
    assert!(r.answer.text_en.contains("112 bpm, measured at 18:00"));
}

/// Serves one canned HTTP reply per connection and records request bodies.
fn canned_server(reply: &'static str) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
            }
            let mut body = vec![0; len];
            let _ = reader.read_exact(&mut body);
            let mut stream = stream;
            let _ = write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                reply.len(),
                reply
            );
        }
    });
    format!("http://{addr}/complete")
}

fn table_answer(i: usize) -> (icusync::query::Answer, icusync::query::PromptText) {
    let e = engine();
    let c = &TABLE_CASES[i];
    let r = e
        .ask(c.question, Some(c.default_patient), Some(c.now), Lang::En)
        .unwrap();
    (r.answer, r.prompt.unwrap())
}

#[test]
fn remote_reply_with_backed_numbers_is_returned_verbatim() {
    let url = canned_server(r#"{"text":"Heart rate in Bed 03 is 106 bpm (14:22)."}"#);
    let (a, p) = table_answer(0);
    let c = RemoteAdapter::new(url, Duration::from_secs(5)).complete(&p, &a);
    assert!(!c.fallback, "{:?}", c.fallback_reason);
    assert_eq!(c.text, "Heart rate in Bed 03 is 106 bpm (14:22).");
}

#[test]
fn remote_reply_with_invented_number_falls_back() {
    let url = canned_server(r#"{"text":"Heart rate is 130 bpm."}"#);
    let (a, p) = table_answer(0);
    let c = RemoteAdapter::new(url, Duration::from_secs(5)).complete(&p, &a);
    assert!(c.fallback);
    assert_eq!(c.text, a.text_en);
    assert!(c.fallback_reason.unwrap().contains("130"));
}

#[test]
fn unreachable_remote_falls_back() {
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let (a, p) = table_answer(5);
    let c = RemoteAdapter::new(
        format!("http://127.0.0.1:{port}/x"),
        Duration::from_millis(500),
    )
    .complete(&p, &a);
    assert!(c.fallback);
    assert_eq!(c.text, a.text_en);
}

fn random_store(values: &[u16], gaps: &[u8]) -> (Store, i64) {
    let store = Store::in_memory();
    let base = 1_700_000_000;
    let mut t = base;
    let mut batch = Vec::new();
    for (v, g) in values.iter().zip(gaps) {
        batch.push(
            Observation::new(
                "P-R",
                "09",
                Concept::HeartRate,
                *v as f64,
                t,
                1.0,
                Source::Fixture,
            )
            .unwrap(),
        );
        t += (*g as i64 % 5 + 1) * MINUTE;
    }
    store.append_all(&batch).unwrap();
    (store, t)
}

fn intent(kind: IntentKind, now: i64, lookback: i64, thr: f64, dir: Direction) -> QueryIntent {
    let threshold =
        matches!(kind, IntentKind::Excursion | IntentKind::AvgThreshold).then_some(Threshold {
            value: thr,
            direction: dir,
        });
    QueryIntent {
        kind,
        concepts: vec![Concept::HeartRate],
        patient: PatientSelector::Bed("09".into()),
        now,
        lookback: (kind != IntentKind::Current).then_some(lookback),
        threshold,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn every_number_is_backed_and_languages_agree(
        values in prop::collection::vec(40u16..=180, 1..60),
        gaps in prop::collection::vec(any::<u8>(), 60),
        kind in prop::sample::select(IntentKind::ALL.to_vec()),
        back in 1i64..=6,
        lookback_min in prop::sample::select(vec![15i64, 30, 60, 120, 240]),
        thr in 50u16..=170,
        below in any::<bool>(),
    ) {
        let (store, end) = random_store(&values, &gaps);
        let now = end - back * MINUTE;
        let dir = if below { Direction::Below } else { Direction::Above };
        let i = intent(kind, now, lookback_min * MINUTE, thr as f64, dir);
        let ctx = PatientContext::bare("P-R", "09");
        let a = answer(&i, &store, &ctx, &QueryConfig::default());
        prop_assert!(check_provenance(&a.text_en, &a).is_ok(), "{:?}\n{}", check_provenance(&a.text_en, &a), a.text_en);
        prop_assert!(check_provenance(&a.text_zh, &a).is_ok(), "{}", a.text_zh);
        prop_assert!(check_language_parity(&a).is_ok(), "{:?}", check_language_parity(&a));
        prop_assert!(!a.text_en.is_empty() && !a.text_zh.is_empty());
    }

    #[test]
    fn verdicts_agree_with_brute_force(
        values in prop::collection::vec(40u16..=180, 1..80),
        gaps in prop::collection::vec(any::<u8>(), 80),
        thr in 50u16..=170,
        below in any::<bool>(),
        lookback_min in 10i64..=300,
    ) {
        let (store, end) = random_store(&values, &gaps);
        let now = end - MINUTE;
        let dir = if below { Direction::Below } else { Direction::Above };
        let ctx = PatientContext::bare("P-R", "09");
        let window = store.window("P-R", Concept::HeartRate, now - lookback_min * MINUTE, now);

        let ex = answer(&intent(IntentKind::Excursion, now, lookback_min * MINUTE, thr as f64, dir), &store, &ctx, &QueryConfig::default());
        if window.is_empty() {
            prop_assert_eq!(ex.verdict, None);
        } else {
            let any = window.iter().any(|s| if below { s.value < thr as f64 } else { s.value > thr as f64 });
            prop_assert_eq!(ex.verdict, Some(any));
        }

        let avg = answer(&intent(IntentKind::AvgThreshold, now, lookback_min * MINUTE, thr as f64, dir), &store, &ctx, &QueryConfig::default());
        if !window.is_empty() {
            let mean = common::oracle_mean(&window);
            let want = if below { mean < thr as f64 } else { mean > thr as f64 };
            prop_assert_eq!(avg.verdict, Some(want));
        }
    }
}
