//! Windowed analytics over time-ordered samples.

use serde::{Deserialize, Serialize};

use super::Sample;
use crate::time::{EpochSeconds, HOUR};

/// Slopes within this many units per hour of zero count as flat.
pub const TREND_EPSILON: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggOp {
    Mean,
    Min,
    Max,
}

/// `None` for an empty slice. The mean is sum over count.
pub fn aggregate(samples: &[Sample], op: AggOp) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let values = samples.iter().map(|s| s.value);
    Some(match op {
        AggOp::Mean => values.sum::<f64>() / samples.len() as f64,
        AggOp::Min => values.fold(f64::INFINITY, f64::min),
        AggOp::Max => values.fold(f64::NEG_INFINITY, f64::max),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Below,
    Above,
}

impl Direction {
    pub fn violates(self, value: f64, threshold: f64) -> bool {
        match self {
            Direction::Below => value < threshold,
            Direction::Above => value > threshold,
        }
    }
}

/// A maximal run of consecutive samples past a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub start_time: EpochSeconds,
    pub end_time: EpochSeconds,
    pub extreme_value: f64,
    /// First time the extreme was reached.
    pub extreme_time: EpochSeconds,
    pub direction: Direction,
    /// First sample after the run, if the series continues.
    pub recovery: Option<(EpochSeconds, f64)>,
}

impl Episode {
    pub fn duration(&self) -> EpochSeconds {
        self.end_time - self.start_time
    }
}

pub fn excursions(samples: &[Sample], threshold: f64, direction: Direction) -> Vec<Episode> {
    let mut out = Vec::new();
    let mut current: Option<Episode> = None;
    for s in samples {
        if direction.violates(s.value, threshold) {
            let ep = current.get_or_insert(Episode {
                start_time: s.time,
                end_time: s.time,
                extreme_value: s.value,
                extreme_time: s.time,
                direction,
                recovery: None,
            });
            ep.end_time = s.time;
            let more_extreme = match direction {
                Direction::Below => s.value < ep.extreme_value,
                Direction::Above => s.value > ep.extreme_value,
            };
            if more_extreme {
                ep.extreme_value = s.value;
                ep.extreme_time = s.time;
            }
        } else if let Some(mut ep) = current.take() {
            ep.recovery = Some((s.time, s.value));
            out.push(ep);
        }
    }
    out.extend(current);
    out
}

/// One merged swing: from `t_a` (value `v_a`) to `t_b` (value `v_b`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Swing {
    pub t_a: EpochSeconds,
    pub v_a: f64,
    pub t_b: EpochSeconds,
    pub v_b: f64,
    pub change: f64,
}

/// Large swings within a time span.
///
/// A pair of samples `i < j` qualifies when `t_j - t_i <= span` and
/// `|v_j - v_i| >= delta`. Rising and falling pairs are handled separately;
/// pairs whose intervals overlap or touch merge into one swing, which runs
/// from the earliest start to the earliest end reaching the swing's extreme
/// (highest for a rise, lowest for a fall). Swings are ordered by start.
pub fn fluctuation(samples: &[Sample], delta: f64, span: EpochSeconds) -> Vec<Swing> {
    let mut out = swings(samples, delta, span, true);
    out.extend(swings(samples, delta, span, false));
    out.sort_by(|a, b| a.t_a.cmp(&b.t_a).then(a.t_b.cmp(&b.t_b)));
    out
}

fn swings(samples: &[Sample], delta: f64, span: EpochSeconds, rising: bool) -> Vec<Swing> {
    let qualifies = |from: f64, to: f64| {
        if rising {
            to - from >= delta
        } else {
            from - to >= delta
        }
    };
    // For each end sample, the interval to its earliest qualifying partner;
    // intervals to later partners nest inside it and add nothing.
    let mut intervals: Vec<(&Sample, &Sample)> = Vec::new();
    let mut lo = 0;
    for (j, end) in samples.iter().enumerate() {
        while end.time - samples[lo].time > span {
            lo += 1;
        }
        if let Some(start) = samples[lo..j]
            .iter()
            .find(|s| qualifies(s.value, end.value))
        {
            intervals.push((start, end));
        }
    }
    intervals.sort_by_key(|(a, b)| (a.time, b.time));

    let better_end = |cand: &Sample, cur: f64| {
        if rising {
            cand.value > cur
        } else {
            cand.value < cur
        }
    };
    let mut out: Vec<Swing> = Vec::new();
    let mut reach = EpochSeconds::MIN;
    for (start, end) in intervals {
        match out.last_mut() {
            Some(sw) if start.time <= reach => {
                if better_end(end, sw.v_b) || (end.value == sw.v_b && end.time < sw.t_b) {
                    sw.t_b = end.time;
                    sw.v_b = end.value;
                    sw.change = sw.v_b - sw.v_a;
                }
            }
            _ => out.push(Swing {
                t_a: start.time,
                v_a: start.value,
                t_b: end.time,
                v_b: end.value,
                change: end.value - start.value,
            }),
        }
        reach = reach.max(end.time);
    }
    out
}

/// Least-squares fit of value against time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub slope_per_hour: f64,
    pub direction: TrendDirection,
    pub start: (EpochSeconds, f64),
    pub end: (EpochSeconds, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrendDirection {
    Rising,
    Falling,
    Flat,
}

/// `None` with fewer than two samples. Slopes within [`TREND_EPSILON`] of
/// zero are flat.
pub fn trend(samples: &[Sample]) -> Option<Trend> {
    trend_with(samples, TREND_EPSILON)
}

/// [`trend`] with a caller-chosen flat band, in units per hour.
pub fn trend_with(samples: &[Sample], epsilon: f64) -> Option<Trend> {
    let (first, last) = (samples.first()?, samples.last()?);
    if samples.len() < 2 || first.time == last.time {
        return None;
    }
    let n = samples.len() as f64;
    // Hours relative to the first sample keep the sums well conditioned.
    let xs = samples
        .iter()
        .map(|s| (s.time - first.time) as f64 / HOUR as f64);
    let mean_x = xs.clone().sum::<f64>() / n;
    let mean_y = samples.iter().map(|s| s.value).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, s) in xs.zip(samples) {
        sxy += (x - mean_x) * (s.value - mean_y);
        sxx += (x - mean_x) * (x - mean_x);
    }
    let slope = sxy / sxx;
    let direction = if slope > epsilon {
        TrendDirection::Rising
    } else if slope < -epsilon {
        TrendDirection::Falling
    } else {
        TrendDirection::Flat
    };
    Some(Trend {
        slope_per_hour: slope,
        direction,
        start: (first.time, first.value),
        end: (last.time, last.value),
    })
}
