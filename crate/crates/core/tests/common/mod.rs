//! Brute-force oracles and generators shared by the integration tests.
#![allow(dead_code)]

use icusync::clinical::Source;
use icusync::store::{Direction, Episode, Sample, Swing};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn sample(t: i64, v: f64) -> Sample {
    Sample {
        time: t,
        value: v,
        confidence: 1.0,
        source: Source::Fixture,
    }
}

/// Random walk with integer values and strictly increasing integer times.
pub fn random_series(seed: u64, max_len: usize) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(0..=max_len);
    let mut t = rng.random_range(0..100i64);
    let mut v = rng.random_range(60..140) as f64;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(sample(t, v));
        t += rng.random_range(1..=5);
        v += rng.random_range(-12..=12) as f64;
    }
    out
}

/// Runs found by checking each sample against its predecessor.
pub fn oracle_excursions(s: &[Sample], threshold: f64, dir: Direction) -> Vec<Episode> {
    let bad = |x: &Sample| match dir {
        Direction::Below => x.value < threshold,
        Direction::Above => x.value > threshold,
    };
    let mut out = Vec::new();
    let mut i = 0;
    while i < s.len() {
        if !bad(&s[i]) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < s.len() && bad(&s[j + 1]) {
            j += 1;
        }
        let run = &s[i..=j];
        let extreme = match dir {
            Direction::Below => run.iter().map(|x| x.value).fold(f64::INFINITY, f64::min),
            Direction::Above => run
                .iter()
                .map(|x| x.value)
                .fold(f64::NEG_INFINITY, f64::max),
        };
        let extreme_time = run.iter().find(|x| x.value == extreme).unwrap().time;
        out.push(Episode {
            start_time: s[i].time,
            end_time: s[j].time,
            extreme_value: extreme,
            extreme_time,
            direction: dir,
            recovery: s.get(j + 1).map(|x| (x.time, x.value)),
        });
        i = j + 1;
    }
    out
}

/// Every qualifying pair, grouped by covering a doubled time axis so that
/// touching intervals connect and merely adjacent ones do not.
pub fn oracle_fluctuation(s: &[Sample], delta: f64, span: i64) -> Vec<Swing> {
    let mut out = Vec::new();
    for rising in [true, false] {
        let mut pairs = Vec::new();
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                let d = s[j].value - s[i].value;
                let ok = if rising { d >= delta } else { -d >= delta };
                if s[j].time - s[i].time <= span && ok {
                    pairs.push((i, j));
                }
            }
        }
        if pairs.is_empty() {
            continue;
        }
        let t0 = s[0].time;
        let len = (2 * (s[s.len() - 1].time - t0) + 1) as usize;
        let mut covered = vec![false; len];
        for &(i, j) in &pairs {
            for p in 2 * (s[i].time - t0)..=2 * (s[j].time - t0) {
                covered[p as usize] = true;
            }
        }
        let mut comp = vec![usize::MAX; len];
        let mut id = 0;
        for p in 0..len {
            if covered[p] {
                if p > 0 && covered[p - 1] {
                    comp[p] = comp[p - 1];
                } else {
                    id += 1;
                    comp[p] = id;
                }
            }
        }
        for c in 1..=id {
            let members: Vec<_> = pairs
                .iter()
                .filter(|&&(i, _)| comp[(2 * (s[i].time - t0)) as usize] == c)
                .copied()
                .collect();
            let a = members.iter().map(|&(i, _)| i).min().unwrap();
            let best = if rising {
                members
                    .iter()
                    .map(|&(_, j)| s[j].value)
                    .fold(f64::NEG_INFINITY, f64::max)
            } else {
                members
                    .iter()
                    .map(|&(_, j)| s[j].value)
                    .fold(f64::INFINITY, f64::min)
            };
            let b = members
                .iter()
                .map(|&(_, j)| j)
                .filter(|&j| s[j].value == best)
                .min()
                .unwrap();
            out.push(Swing {
                t_a: s[a].time,
                v_a: s[a].value,
                t_b: s[b].time,
                v_b: s[b].value,
                change: s[b].value - s[a].value,
            });
        }
    }
    out.sort_by(|x, y| x.t_a.cmp(&y.t_a).then(x.t_b.cmp(&y.t_b)));
    out
}

pub fn oracle_mean(s: &[Sample]) -> f64 {
    let mut sum = 0.0;
    for x in s {
        sum += x.value;
    }
    sum / s.len() as f64
}
