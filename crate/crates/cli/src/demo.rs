//! End-to-end run: two simulated bedside monitors stream through edge agents
//! into an in-process cloud, one link is cut mid-run on each agent, the
//! delivered store is diffed against ground truth, then the reference
//! fixture is loaded and the six questions are asked over HTTP.
//!
//! The report contains no ports or timings, so equal seeds give equal text.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use icusync::clinical::Concept;
use icusync::edge::{
    AgentConfig, EdgeAgent, Fault, FaultyTransport, Pacing, RunningAgent, SimSource, TcpTransport,
};
use icusync::fixtures::{self, TABLE_CASES};
use icusync::ingest::{self, CloudConfig, CloudHandle};
use icusync::query::Answer;
use icusync::sim::{self, Scenario};
use icusync::store::Store;
use icusync::time::to_iso8601;
use serde_json::json;

use crate::CliError;

pub struct DemoReport {
    pub text: String,
    pub passed: bool,
    pub failures: usize,
}

struct Bed {
    agent_id: &'static str,
    patient_id: &'static str,
    bed_id: &'static str,
    fault: Fault,
}

const BEDS: [Bed; 2] = [
    Bed {
        agent_id: "edge-01",
        patient_id: "P-001",
        bed_id: "01",
        fault: Fault::DropBeforeSend,
    },
    Bed {
        agent_id: "edge-02",
        patient_id: "P-002",
        bed_id: "02",
        fault: Fault::LoseAck,
    },
];

type Key = (String, Concept, i64, u64);

fn key(patient: &str, c: Concept, t: i64, v: f64) -> Key {
    (patient.to_string(), c, t, v.to_bits())
}

fn scenario(bed: &Bed, seed: u64) -> Scenario {
    let mut s = Scenario::new(seed);
    s.patient_id = bed.patient_id.into();
    s.bed_id = bed.bed_id.into();
    s
}

/// What the monitor showed, frame by frame.
fn ground_truth(bed: &Bed, seed: u64, frames: u64) -> Result<BTreeSet<Key>, CliError> {
    let mut src = SimSource::new(scenario(bed, seed), 1.0)
        .map_err(|e| CliError::internal("scenario", e.to_string()))?;
    let mut out = BTreeSet::new();
    for _ in 0..frames {
        let state = src.advance();
        let t = state.wall_time().round() as i64;
        for (c, v, _) in sim::ground_truth(state) {
            out.insert(key(bed.patient_id, c, t, v));
        }
    }
    Ok(out)
}

fn stored(store: &Store, patient: &str) -> BTreeSet<Key> {
    store
        .snapshot()
        .into_iter()
        .filter(|(p, _, _)| p == patient)
        .map(|(p, c, s)| key(&p, c, s.time, s.value))
        .collect()
}

fn wait_until(limit: Duration, mut done: impl FnMut() -> bool) -> bool {
    let deadline = Instant::now() + limit;
    while !done() {
        if Instant::now() > deadline {
            return false;
        }
        std::thread::sleep(Duration::from_millis(10));
    }
    true
}

fn post_query(cloud: &CloudHandle, body: serde_json::Value) -> Result<(Answer, String), String> {
    let url = format!("http://{}/query", cloud.http_addr());
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .into();
    let mut resp = agent
        .post(&url)
        .send_json(&body)
        .map_err(|e| e.to_string())?;
    let status = resp.status().as_u16();
    let reply: serde_json::Value = resp.body_mut().read_json().map_err(|e| e.to_string())?;
    if status != 200 {
        return Err(format!("HTTP {status}: {}", reply["error"]));
    }
    let answer: Answer =
        serde_json::from_value(reply["answer"].clone()).map_err(|e| e.to_string())?;
    Ok((
        answer,
        reply["text"].as_str().unwrap_or_default().to_string(),
    ))
}

pub fn run(duration: u64, seed: u64) -> Result<DemoReport, CliError> {
    let cloud = ingest::start(CloudConfig {
        wire_addr: "127.0.0.1:0".into(),
        http_addr: "127.0.0.1:0".into(),
        contexts: fixtures::table_contexts(),
        ..CloudConfig::default()
    })?;
    let mut out = String::new();
    let mut failures = 0;
    let mut verdict = |ok: bool| {
        failures += usize::from(!ok);
        if ok {
            "PASS"
        } else {
            "FAIL"
        }
    };
    let _ = writeln!(
        out,
        "icusync demo: seed {seed}, {duration} s of capture at 1 Hz per bed"
    );

    let cut_at = duration / 2;
    let running: Vec<RunningAgent> = BEDS
        .iter()
        .enumerate()
        .map(|(i, bed)| {
            let mut cfg = AgentConfig::new(bed.agent_id, bed.patient_id, bed.bed_id);
            cfg.cloud_address = cloud.wire_addr().to_string();
            let agent =
                EdgeAgent::new(cfg).map_err(|e| CliError::internal("agent", e.to_string()))?;
            let src = SimSource::new(scenario(bed, seed + i as u64), 1.0)
                .map_err(|e| CliError::internal("scenario", e.to_string()))?;
            let fault = bed.fault;
            let link =
                FaultyTransport::new(TcpTransport::new(cloud.wire_addr().to_string()), move |n| {
                    (n == cut_at).then_some(fault)
                });
            Ok(RunningAgent::spawn(
                agent,
                Box::new(src),
                Box::new(link),
                Pacing::Fixed(Duration::ZERO),
                Some(duration),
            ))
        })
        .collect::<Result<_, CliError>>()?;
    let drained = wait_until(Duration::from_secs(60 + duration), || {
        running
            .iter()
            .all(|r| r.capture_finished() && r.buffer().is_empty())
    });
    for (i, (bed, r)) in BEDS.iter().zip(running).enumerate() {
        let (agent, flusher, evicted) = r.stop();
        let want = ground_truth(bed, seed + i as u64, duration)?;
        let got = stored(cloud.store(), bed.patient_id);
        let missing = want.difference(&got).count();
        let extra = got.difference(&want).count();
        let ok = drained && missing == 0 && extra == 0 && evicted == 0;
        let stats = agent.stats();
        let _ = writeln!(
            out,
            "[{}] {} bed {}: {} frames, {} bundles, link cut at send {} ({:?}), {} observations stored, missing {missing}, extra {extra}, last acked seq {}",
            verdict(ok),
            bed.agent_id,
            bed.bed_id,
            stats.cycles,
            stats.bundles,
            cut_at,
            bed.fault,
            got.len(),
            flusher.last_acked(),
        );
    }

    let loaded = fixtures::load_table_fixture(cloud.store())
        .map_err(|e| CliError::internal("fixture", e.to_string()))?;
    let _ = writeln!(
        out,
        "reference fixture loaded: {} observations for beds 03 and 07",
        loaded.inserted
    );

    for (i, case) in TABLE_CASES.iter().enumerate() {
        let body = json!({ "text": case.question, "patient_id": case.default_patient, "now": to_iso8601(case.now) });
        let result = post_query(&cloud, body).and_then(|(answer, text)| {
            fixtures::check_case(i, &answer)?;
            if text != answer.text_en {
                return Err("offline completion differs from the deterministic text".into());
            }
            Ok(answer)
        });
        match result {
            Ok(answer) => {
                let _ = writeln!(
                    out,
                    "[{}] Q{} {}: {}",
                    verdict(true),
                    i + 1,
                    answer.intent.kind,
                    case.question
                );
                let _ = writeln!(out, "    en: {}", answer.text_en);
                let _ = writeln!(out, "    zh: {}", answer.text_zh);
            }
            Err(e) => {
                let _ = writeln!(out, "[{}] Q{}: {}", verdict(false), i + 1, case.question);
                let _ = writeln!(out, "    {e}");
            }
        }
    }
    cloud.shutdown();
    let _ = writeln!(out, "{} check(s) failed", failures);
    Ok(DemoReport {
        text: out,
        passed: failures == 0,
        failures,
    })
}
