mod common;

use common::*;
use icusync::clinical::{Concept, Observation, Source};
use icusync::store::{self, AggOp, Direction, Inserted, Store, StoreError};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;

const T0: i64 = 1_741_953_600; // 2025-03-14T12:00:00Z

fn obs(patient: &str, c: Concept, v: f64, t: i64, src: Source) -> Observation {
    Observation::new(patient, "03", c, v, t, 1.0, src).unwrap()
}

#[test]
fn append_rules() {
    let st = Store::in_memory();
    let hr = |v, t, s| obs("P-1", Concept::HeartRate, v, t, s);
    assert_eq!(
        st.append(&hr(80.0, T0, Source::Vision)).unwrap(),
        Inserted::New
    );
    assert_eq!(
        st.append(&hr(80.0, T0, Source::Vision)).unwrap(),
        Inserted::Ignored
    );
    assert_eq!(
        st.append(&hr(82.0, T0, Source::Manual)).unwrap(),
        Inserted::Replaced
    );
    assert_eq!(
        st.append(&hr(90.0, T0, Source::Vision)).unwrap(),
        Inserted::Ignored
    );
    assert_eq!(
        st.append(&hr(91.0, T0, Source::Fixture)).unwrap(),
        Inserted::Ignored
    );
    assert_eq!(st.series_len("P-1", Concept::HeartRate), 1);
    assert_eq!(st.latest("P-1", Concept::HeartRate).unwrap().value, 82.0);
    assert!(matches!(
        st.latest("P-1", Concept::RespiratoryRate),
        Err(StoreError::NoData { .. })
    ));
    assert!(st.append(&hr(400.0, T0 + 60, Source::Vision)).is_err());
    assert_eq!(st.bed_of("P-1").as_deref(), Some("03"));
    assert_eq!(st.patient_at_bed("3").as_deref(), Some("P-1"));
}

#[test]
fn windows_are_closed() {
    let st = Store::in_memory();
    for k in 0..10 {
        st.append(&obs(
            "P",
            Concept::OxygenSaturation,
            95.0,
            T0 + 60 * k,
            Source::Fixture,
        ))
        .unwrap();
    }
    assert_eq!(
        st.window("P", Concept::OxygenSaturation, T0, T0 + 540)
            .len(),
        10
    );
    assert_eq!(
        st.window("P", Concept::OxygenSaturation, T0 + 120, T0 + 120)
            .len(),
        1
    );
    assert!(st
        .window("P", Concept::OxygenSaturation, T0 + 1000, T0 + 2000)
        .is_empty());
    assert_eq!(
        st.latest_at("P", Concept::OxygenSaturation, T0 + 150)
            .unwrap()
            .time,
        T0 + 120
    );
}

#[test]
fn log_replay_discards_torn_tail() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("obs.jsonl");
    {
        let st = Store::open(&path).unwrap();
        for k in 0..5 {
            st.append(&obs(
                "P",
                Concept::HeartRate,
                70.0 + k as f64,
                T0 + k,
                Source::Vision,
            ))
            .unwrap();
        }
        // Ignored appends are not logged.
        st.append(&obs("P", Concept::HeartRate, 99.0, T0, Source::Vision))
            .unwrap();
    }
    let full = std::fs::read_to_string(&path).unwrap();
    assert_eq!(full.lines().count(), 5);
    let torn = format!("{full}{}", &full.lines().next().unwrap()[..20]);
    std::fs::write(&path, &torn).unwrap();
    let st = Store::open(&path).unwrap();
    assert_eq!(st.series_len("P", Concept::HeartRate), 5);
    assert_eq!(std::fs::read_to_string(&path).unwrap(), full);
    st.append(&obs("P", Concept::HeartRate, 75.0, T0 + 5, Source::Vision))
        .unwrap();
    drop(st);
    assert_eq!(
        Store::open(&path)
            .unwrap()
            .series_len("P", Concept::HeartRate),
        6
    );

    std::fs::write(&path, format!("garbage\n{full}")).unwrap();
    assert!(matches!(
        Store::open(&path),
        Err(StoreError::Corrupt { line: 1, .. })
    ));
}

#[test]
fn batch_is_atomic_on_rejection() {
    let st = Store::in_memory();
    let batch = [
        obs("P", Concept::HeartRate, 80.0, T0, Source::Vision),
        obs("P", Concept::OxygenSaturation, 30.0, T0, Source::Vision),
    ];
    assert!(st.append_all(&batch).is_err());
    assert_eq!(st.total_samples(), 0);
}

#[test]
fn oracles_agree_on_random_series() {
    for seed in 0..300u64 {
        let s = random_series(seed, 200);
        for (thr, dir) in [(90.0, Direction::Below), (110.0, Direction::Above)] {
            assert_eq!(
                store::excursions(&s, thr, dir),
                oracle_excursions(&s, thr, dir),
                "seed {seed}"
            );
        }
        for (delta, span) in [(15.0, 6), (25.0, 15), (5.0, 3)] {
            assert_eq!(
                store::fluctuation(&s, delta, span),
                oracle_fluctuation(&s, delta, span),
                "seed {seed} {delta} {span}"
            );
        }
        if !s.is_empty() {
            assert!((store::aggregate(&s, AggOp::Mean).unwrap() - oracle_mean(&s)).abs() < 1e-9);
        }
    }
}

#[test]
fn trend_matches_closed_form() {
    for seed in 0..50u64 {
        let s = random_series(seed, 100);
        if s.len() < 2 {
            continue;
        }
        // Normal equations in raw seconds, scaled to hours at the end.
        let n = s.len() as f64;
        let (sx, sy) = s
            .iter()
            .fold((0.0, 0.0), |(a, b), x| (a + x.time as f64, b + x.value));
        let (sxx, sxy) = s.iter().fold((0.0, 0.0), |(a, b), x| {
            (a + (x.time as f64).powi(2), b + x.time as f64 * x.value)
        });
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx) * 3600.0;
        let t = store::trend(&s).unwrap();
        assert!(
            (t.slope_per_hour - slope).abs() <= 1e-6 * slope.abs().max(1.0),
            "seed {seed}"
        );
    }
}

proptest! {
    #[test]
    fn window_partition(seed in any::<u64>(), a in 0i64..400, b in 0i64..400, c in 0i64..400) {
        let mut cuts = [a, b, c];
        cuts.sort();
        let [t0, t1, t2] = cuts;
        let st = Store::in_memory();
        for x in random_series(seed, 80) {
            let v = x.value.clamp(20.0, 300.0);
            st.append(&obs("P", Concept::HeartRate, v, T0 + x.time, Source::Vision)).unwrap();
        }
        let left = st.window("P", Concept::HeartRate, T0 + t0, T0 + t1);
        let right = st.window("P", Concept::HeartRate, T0 + t1 + 1, T0 + t2);
        let whole = st.window("P", Concept::HeartRate, T0 + t0, T0 + t2);
        prop_assert_eq!([left, right].concat(), whole);
    }

    #[test]
    fn insert_order_does_not_matter(seed in any::<u64>()) {
        let items: Vec<Observation> = random_series(seed, 60)
            .into_iter()
            .map(|x| obs("P", Concept::SystolicBp, x.value.clamp(50.0, 260.0), T0 + x.time, Source::Vision))
            .collect();
        let mut shuffled = items.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let (a, b) = (Store::in_memory(), Store::in_memory());
        a.append_all(&items).unwrap();
        for o in &shuffled {
            b.append(o).unwrap();
            b.append(o).unwrap();
        }
        prop_assert_eq!(a.snapshot(), b.snapshot());
    }
}
