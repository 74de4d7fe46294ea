use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use icusync::clinical::{build_bundle, BundleIdentity, Concept, ObservationBundle, Source};
use icusync::edge::{
    AgentConfig, CycleOutcome, EdgeAgent, EdgeBuffer, Fault, FaultyTransport, Flusher, Pacing,
    RunningAgent, SeqMismatch, SimSource, SkipReason, TcpTransport,
};
use icusync::frame::{GrayImage, MonitorFrame};
use icusync::ingest::{self, CloudConfig, CloudHandle, IngestCore};
use icusync::protocol::{Envelope, FrameDecoder, FrameKind, Hello, NackReason};
use icusync::sim::{self, value_field_rect, RenderOptions, Scenario};
use icusync::store::Store;
use proptest::prelude::*;
use std::sync::Arc;

fn cloud() -> CloudHandle {
    ingest::start(CloudConfig {
        wire_addr: "127.0.0.1:0".into(),
        http_addr: "127.0.0.1:0".into(),
        ..CloudConfig::default()
    })
    .unwrap()
}

fn bundle(agent: &str, seq: u64) -> ObservationBundle {
    let readings = vec![icusync::vision::RawReading {
        label_text: "HR".into(),
        value_text: "80".into(),
        confidence: 0.99,
        frame_time: 0.0,
    }];
    let id = BundleIdentity {
        patient_id: "P-1".into(),
        bed_id: "01".into(),
        agent_id: agent.into(),
    };
    build_bundle(&readings, &id, seq, 1_000 + seq as i64)
        .unwrap()
        .0
}

fn agent(id: &str, patient: &str) -> EdgeAgent {
    EdgeAgent::new(AgentConfig::new(id, patient, "01")).unwrap()
}

fn transport(c: &CloudHandle) -> TcpTransport {
    TcpTransport::new(c.wire_addr().to_string()).with_timeout(Duration::from_secs(2))
}

/// Observation times stored for one patient's heart rate.
fn stored_times(store: &Store, patient: &str) -> BTreeSet<i64> {
    store
        .window(patient, Concept::HeartRate, i64::MIN, i64::MAX)
        .iter()
        .map(|s| s.time)
        .collect()
}

#[test]
fn buffer_is_a_bounded_ring() {
    let buf = EdgeBuffer::new(3, 1);
    for seq in 1..=5 {
        let evicted = buf.enqueue(bundle("e", seq)).unwrap();
        assert_eq!(evicted.map(|b| b.seq()), (seq > 3).then(|| seq - 3));
    }
    assert_eq!(buf.seqs(), vec![3, 4, 5]);
    assert_eq!(buf.dropped_count(), 2);
    assert_eq!(buf.delivered_floor(), 2);
    assert_eq!(
        buf.enqueue(bundle("e", 9)).unwrap_err(),
        SeqMismatch {
            expected: 6,
            got: 9
        }
    );
    assert!(!buf.pop_acked(4));
    assert!(buf.pop_acked(3));
    assert_eq!(buf.resume_from(5), 1);
    assert_eq!(buf.seqs(), vec![5]);
    assert_eq!(buf.resume_from(10), 1);
    assert!(buf.is_empty());
    assert_eq!(buf.next_seq(), 10);
}

#[test]
fn cycle_outcomes_for_clean_black_and_occluded_frames() {
    let mut a = agent("e1", "P-1");
    let mut src = SimSource::new(Scenario::new(3), 1.0).unwrap();
    let truth = sim::ground_truth(src.state());
    let CycleOutcome::Bundle(b) = a.run_cycle(&mut src) else {
        panic!("clean frame gave no bundle")
    };
    assert_eq!(b.observations().len(), 5);
    for (c, v, _) in truth {
        let o = b.observations().iter().find(|o| o.concept() == c).unwrap();
        assert_eq!(o.value(), v);
        assert_eq!(o.source(), Source::Vision);
    }

    let mut black = || Ok(MonitorFrame::new(GrayImage::new(1280, 800, 0), 1_000.0));
    assert_eq!(
        a.run_cycle(&mut black),
        CycleOutcome::Skip(SkipReason::NoScreen)
    );

    let opts = RenderOptions {
        occlusions: vec![value_field_rect(0)],
        ..RenderOptions::default()
    };
    let mut occluded = SimSource::new(Scenario::new(3), 1.0)
        .unwrap()
        .with_options(opts);
    let CycleOutcome::Bundle(b) = a.run_cycle(&mut occluded) else {
        panic!("occluded frame gave no bundle")
    };
    assert_eq!(b.observations().len(), 4);
    assert!(b
        .observations()
        .iter()
        .all(|o| o.concept() != Concept::HeartRate));

    let stats = a.stats();
    assert_eq!(
        (stats.cycles, stats.bundles, stats.skipped_no_screen),
        (3, 2, 1)
    );
    assert!(stats.dropped_fields >= 1);
}

#[test]
fn flush_delivers_everything_when_connected() {
    let c = cloud();
    let mut a = agent("e1", "P-1");
    let mut src = SimSource::new(Scenario::new(5), 1.0).unwrap();
    for _ in 0..10 {
        a.capture(&mut src);
    }
    let mut f = Flusher::new(&a, Box::new(transport(&c)));
    assert_eq!(f.connect().unwrap(), 1);
    let report = f.flush();
    assert_eq!((report.sent, report.stopped_on_error), (10, false));
    assert!(a.buffer().is_empty());
    assert_eq!(f.last_acked(), 10);
    assert_eq!(stored_times(c.store(), "P-1").len(), 10);
    assert_eq!(c.ingest().session("e1").unwrap().highest_acked_seq, 10);
}

#[test]
fn disconnected_flush_keeps_the_buffer() {
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap();
    let mut a = agent("e1", "P-1");
    let mut src = SimSource::new(Scenario::new(5), 1.0).unwrap();
    for _ in 0..4 {
        a.capture(&mut src);
    }
    let mut f = Flusher::new(
        &a,
        Box::new(TcpTransport::new(port.to_string()).with_timeout(Duration::from_millis(200))),
    );
    assert!(f.connect().is_err());
    assert_eq!(f.flush().sent, 0);
    assert_eq!(a.buffer().seqs(), vec![1, 2, 3, 4]);
}

#[test]
fn lost_ack_is_not_stored_twice() {
    let c = cloud();
    let mut a = agent("e1", "P-1");
    let mut src = SimSource::new(Scenario::new(9), 1.0).unwrap();
    for _ in 0..6 {
        a.capture(&mut src);
    }
    let faulty = FaultyTransport::new(transport(&c), |n| (n == 2).then_some(Fault::LoseAck));
    let mut f = Flusher::new(&a, Box::new(faulty));
    f.connect().unwrap();
    let first = f.flush();
    assert_eq!((first.sent, first.stopped_on_error), (2, true));
    assert_eq!(a.buffer().seqs(), vec![3, 4, 5, 6]);
    // The server kept bundle 3, so the handshake skips it.
    assert_eq!(f.connect().unwrap(), 4);
    assert_eq!(f.flush().sent, 3);
    assert_eq!(stored_times(c.store(), "P-1").len(), 6);
    assert_eq!(c.ingest().stats().stored_bundles, 6);
}

#[test]
fn duplicate_and_gap_bundles() {
    let core = IngestCore::new(Arc::new(Store::in_memory()));
    core.handshake(&Hello {
        agent_id: "e".into(),
        last_acked_seq: 0,
    })
    .unwrap();
    let payload = |seq| icusync::clinical::serialize_bundle(&bundle("e", seq));
    assert!(core.handle_bundle("e", &payload(1)).unwrap().is_ok());
    assert!(core.handle_bundle("e", &payload(1)).unwrap().is_ok());
    let gap = core.handle_bundle("e", &payload(3)).unwrap();
    assert_eq!(gap.nack, Some(NackReason::Gap));
    let wrong_agent = core.handle_bundle("other", &payload(1)).unwrap();
    assert_eq!(wrong_agent.nack, Some(NackReason::Malformed));
    assert_eq!(
        core.handle_bundle("e", b"{not json").unwrap().nack,
        Some(NackReason::Malformed)
    );
    let s = core.stats();
    assert_eq!(
        (
            s.stored_bundles,
            s.duplicate_bundles,
            s.gap_nacks,
            s.malformed_nacks
        ),
        (1, 1, 1, 2)
    );
    assert_eq!(core.store().total_samples(), 1);
}

#[test]
fn handshake_takes_the_larger_position() {
    let core = IngestCore::new(Arc::new(Store::in_memory()));
    let hello = |n| Hello {
        agent_id: "e".into(),
        last_acked_seq: n,
    };
    assert_eq!(core.handshake(&hello(0)).unwrap().resume_from_seq, 1);
    // Edge evicted 1..=4 while offline.
    assert_eq!(core.handshake(&hello(4)).unwrap().resume_from_seq, 5);
    // A stale claim cannot move the server back.
    assert_eq!(core.handshake(&hello(2)).unwrap().resume_from_seq, 5);
}

#[test]
fn session_state_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sessions.json");
    let core = IngestCore::with_state_file(Arc::new(Store::in_memory()), &path).unwrap();
    core.handshake(&Hello {
        agent_id: "e".into(),
        last_acked_seq: 0,
    })
    .unwrap();
    core.handle_bundle("e", &icusync::clinical::serialize_bundle(&bundle("e", 1)))
        .unwrap();
    let again = IngestCore::with_state_file(Arc::new(Store::in_memory()), &path).unwrap();
    assert_eq!(again.session("e").unwrap().highest_acked_seq, 1);
}

#[test]
fn agent_sequence_resumes_after_restart() {
    let c = cloud();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = AgentConfig::new("e1", "P-1", "01");
    cfg.state_file = Some(dir.path().join("agent.json"));
    let mut a = EdgeAgent::new(cfg.clone()).unwrap();
    let mut src = SimSource::new(Scenario::new(2), 1.0).unwrap();
    for _ in 0..3 {
        a.capture(&mut src);
    }
    let mut f = Flusher::new(&a, Box::new(transport(&c)));
    f.connect().unwrap();
    f.flush();
    let a2 = EdgeAgent::new(cfg).unwrap();
    assert_eq!(a2.buffer().next_seq(), 4);
}

#[test]
fn two_agents_share_one_cloud() {
    let c = cloud();
    let run = |id: &str, patient: &str, seed| {
        let mut scenario = Scenario::new(seed);
        scenario.patient_id = patient.into();
        let src = SimSource::new(scenario, 1.0).unwrap();
        RunningAgent::spawn(
            agent(id, patient),
            Box::new(src),
            Box::new(transport(&c)),
            Pacing::Fixed(Duration::ZERO),
            Some(25),
        )
    };
    let agents = [run("e1", "P-1", 1), run("e2", "P-2", 2)];
    wait_for(|| {
        agents
            .iter()
            .all(|a| a.capture_finished() && a.buffer().is_empty())
    });
    for a in agents {
        a.stop();
    }
    assert_eq!(stored_times(c.store(), "P-1").len(), 25);
    assert_eq!(stored_times(c.store(), "P-2").len(), 25);
}

#[test]
fn faults_lose_nothing_and_duplicate_nothing() {
    let c = cloud();
    let src = SimSource::new(Scenario::new(4), 1.0).unwrap();
    let faulty = FaultyTransport::seeded(transport(&c), 4, 8, 60);
    let run = RunningAgent::spawn(
        agent("e1", "P-1"),
        Box::new(src),
        Box::new(faulty),
        Pacing::Fixed(Duration::ZERO),
        Some(60),
    );
    wait_for(|| run.capture_finished() && run.buffer().is_empty());
    let (a, f, evicted) = run.stop();
    assert_eq!(evicted, 0);
    let expected: BTreeSet<i64> = (0..60).map(|k| sim::DEFAULT_START_TIME + k).collect();
    assert_eq!(stored_times(c.store(), "P-1"), expected);
    assert_eq!(c.ingest().stats().stored_bundles, a.stats().bundles);
    assert_eq!(f.last_acked(), 60);
}

fn wait_for(mut done: impl FnMut() -> bool) {
    let deadline = Instant::now() + Duration::from_secs(30);
    while !done() {
        assert!(Instant::now() < deadline, "timed out");
        std::thread::sleep(Duration::from_millis(10));
    }
}

proptest! {
    #[test]
    fn frames_survive_any_chunking(
        payloads in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..64), 1..8),
        cuts in prop::collection::vec(1usize..40, 1..30),
    ) {
        let kinds = [FrameKind::Hello, FrameKind::HelloOk, FrameKind::Bundle, FrameKind::Ack];
        let sent: Vec<Envelope> =
            payloads.into_iter().enumerate().map(|(i, p)| Envelope::new(kinds[i % kinds.len()], p)).collect();
        let bytes: Vec<u8> = sent.iter().flat_map(|e| e.encode()).collect();
        let mut dec = FrameDecoder::new();
        let mut got = Vec::new();
        let mut pos = 0;
        for cut in cuts.iter().cycle() {
            if pos >= bytes.len() {
                break;
            }
            let end = (pos + cut).min(bytes.len());
            dec.push(&bytes[pos..end]);
            pos = end;
            while let Some(env) = dec.next_frame().unwrap() {
                got.push(env);
            }
        }
        prop_assert_eq!(got, sent);
        prop_assert_eq!(dec.pending(), 0);
    }
}
