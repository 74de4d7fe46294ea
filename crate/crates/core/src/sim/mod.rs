//! Deterministic bedside-monitor simulation: vital-sign drift with scripted
//! overrides, rendered to grayscale frames.

mod render;

pub use render::{
    layout, render_frame, render_frame_with, value_field_rect, RenderError, RenderOptions,
};

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clinical::Concept;
use crate::time::EpochSeconds;

/// Scenario epoch used when a file does not give one: 2025-01-01T00:00:00Z.
pub const DEFAULT_START_TIME: EpochSeconds = 1_735_689_600;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("bounds for {concept}: {reason}")]
    Bounds { concept: Concept, reason: String },
    #[error("script entry {index}: {reason}")]
    Script { index: usize, reason: String },
    #[error("scenario JSON: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriftBound {
    pub min: i32,
    pub max: i32,
    pub max_step: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    /// Seconds since the scenario epoch.
    pub t: f64,
    pub concept: Concept,
    pub value: i32,
}

/// Seeded drift plus a script of exact overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    #[serde(default = "default_patient")]
    pub patient_id: String,
    #[serde(default = "default_bed")]
    pub bed_id: String,
    /// Epoch seconds corresponding to `sim_time` 0.
    #[serde(default = "default_start")]
    pub start_time: EpochSeconds,
    #[serde(default)]
    pub script: Vec<ScriptEntry>,
    /// Keyed by concept code. Missing concepts use [`default_bound`].
    #[serde(default)]
    pub drift_bounds: BTreeMap<String, DriftBound>,
}

fn default_patient() -> String {
    "P-001".into()
}

fn default_bed() -> String {
    "01".into()
}

fn default_start() -> EpochSeconds {
    DEFAULT_START_TIME
}

/// Resting-adult drift used for concepts a scenario leaves unspecified.
pub fn default_bound(concept: Concept) -> DriftBound {
    let (min, max, max_step) = match concept {
        Concept::HeartRate => (60, 100, 2),
        Concept::RespiratoryRate => (12, 20, 1),
        Concept::OxygenSaturation => (94, 99, 1),
        Concept::SystolicBp => (110, 130, 2),
        Concept::DiastolicBp => (65, 85, 2),
    };
    DriftBound { min, max, max_step }
}

impl Scenario {
    pub fn new(seed: u64) -> Scenario {
        Scenario {
            seed,
            patient_id: default_patient(),
            bed_id: default_bed(),
            start_time: DEFAULT_START_TIME,
            script: Vec::new(),
            drift_bounds: BTreeMap::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Scenario, ConfigError> {
        let s: Scenario =
            serde_json::from_str(text).map_err(|e| ConfigError::Json(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn bound(&self, concept: Concept) -> DriftBound {
        self.drift_bounds
            .get(concept.code())
            .copied()
            .unwrap_or_else(|| default_bound(concept))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for key in self.drift_bounds.keys() {
            if Concept::from_code(key).is_none() {
                return Err(ConfigError::Json(format!(
                    "unknown concept {key:?} in drift_bounds"
                )));
            }
        }
        for c in Concept::ALL {
            let b = self.bound(c);
            let fail = |reason: &str| {
                Err(ConfigError::Bounds {
                    concept: c,
                    reason: reason.into(),
                })
            };
            if b.min > b.max {
                return fail("min exceeds max");
            }
            if b.min <= 0 {
                return fail("min must be positive");
            }
            if b.max_step < 0 {
                return fail("max_step must be non-negative");
            }
            if c == Concept::OxygenSaturation && b.max > 100 {
                return fail("saturation cannot exceed 100");
            }
        }
        let (sys, dia) = (
            self.bound(Concept::SystolicBp),
            self.bound(Concept::DiastolicBp),
        );
        if dia.max >= sys.min {
            return Err(ConfigError::Bounds {
                concept: Concept::DiastolicBp,
                reason: format!(
                    "diastolic max {} must be below systolic min {}",
                    dia.max, sys.min
                ),
            });
        }
        let mut last: BTreeMap<Concept, f64> = BTreeMap::new();
        for (index, e) in self.script.iter().enumerate() {
            let fail = |reason: String| Err(ConfigError::Script { index, reason });
            if !e.t.is_finite() || e.t < 0.0 {
                return fail(format!("time {} is not a non-negative number", e.t));
            }
            if e.value <= 0 || (e.concept == Concept::OxygenSaturation && e.value > 100) {
                return fail(format!("value {} out of range for {}", e.value, e.concept));
            }
            if let Some(&prev) = last.get(&e.concept) {
                if e.t <= prev {
                    return fail(format!(
                        "{} override at {} does not follow {}",
                        e.concept, e.t, prev
                    ));
                }
            }
            last.insert(e.concept, e.t);
        }
        Ok(())
    }

    /// Script sorted by time; entries sharing a time keep file order.
    fn sorted_script(&self) -> Vec<ScriptEntry> {
        let mut s = self.script.clone();
        s.sort_by(|a, b| a.t.total_cmp(&b.t));
        s
    }
}

/// Simulated patient vitals at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VitalState {
    pub patient_id: String,
    pub bed_id: String,
    pub hr: i32,
    pub rr: i32,
    pub spo2: i32,
    pub sys_bp: i32,
    pub dia_bp: i32,
    pub ecg_phase: f64,
    /// Seconds since the scenario epoch.
    pub sim_time: f64,
    /// Epoch seconds at `sim_time` 0.
    pub start_time: EpochSeconds,
}

impl VitalState {
    pub fn get(&self, c: Concept) -> i32 {
        match c {
            Concept::HeartRate => self.hr,
            Concept::RespiratoryRate => self.rr,
            Concept::OxygenSaturation => self.spo2,
            Concept::SystolicBp => self.sys_bp,
            Concept::DiastolicBp => self.dia_bp,
        }
    }

    fn set(&mut self, c: Concept, v: i32) {
        match c {
            Concept::HeartRate => self.hr = v,
            Concept::RespiratoryRate => self.rr = v,
            Concept::OxygenSaturation => self.spo2 = v,
            Concept::SystolicBp => self.sys_bp = v,
            Concept::DiastolicBp => self.dia_bp = v,
        }
    }

    /// Wall-clock time of this state.
    pub fn wall_time(&self) -> f64 {
        self.start_time as f64 + self.sim_time
    }
}

fn mix(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn init_scenario(config: &Scenario) -> Result<VitalState, ConfigError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(config.seed, 0));
    let mut state = VitalState {
        patient_id: config.patient_id.clone(),
        bed_id: config.bed_id.clone(),
        hr: 0,
        rr: 0,
        spo2: 0,
        sys_bp: 0,
        dia_bp: 0,
        ecg_phase: 0.0,
        sim_time: 0.0,
        start_time: config.start_time,
    };
    for c in Concept::ALL {
        let b = config.bound(c);
        state.set(c, rng.random_range(b.min..=b.max));
    }
    for e in config.sorted_script().iter().take_while(|e| e.t <= 0.0) {
        state.set(e.concept, e.value);
    }
    Ok(state)
}

/// Advances `state` by `dt` seconds. Drift randomness depends only on the
/// seed and the new time, so the same schedule always gives the same path.
pub fn step(state: &VitalState, scenario: &Scenario, dt: f64) -> VitalState {
    let t0 = state.sim_time;
    let t1 = t0 + dt;
    let mut next = state.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(mix(scenario.seed, t1.to_bits()));
    for c in Concept::ALL {
        let b = scenario.bound(c);
        let v = state.get(c);
        let delta = if b.max_step > 0 {
            rng.random_range(-b.max_step..=b.max_step)
        } else {
            0
        };
        let moved = if v < b.min {
            (v + b.max_step).min(b.max)
        } else if v > b.max {
            (v - b.max_step).max(b.min)
        } else {
            (v + delta).clamp(b.min, b.max)
        };
        next.set(c, moved);
    }
    let script = scenario.sorted_script();
    let from = script.partition_point(|e| e.t <= t0);
    for e in script[from..].iter().take_while(|e| e.t <= t1) {
        next.set(e.concept, e.value);
    }
    let tau = std::f64::consts::TAU;
    next.ecg_phase = (state.ecg_phase + tau * next.hr as f64 / 60.0 * dt).rem_euclid(tau);
    next.sim_time = t1;
    next
}

/// The triples drawn on screen, in layout order.
pub fn ground_truth(state: &VitalState) -> Vec<(Concept, f64, &'static str)> {
    Concept::ALL
        .into_iter()
        .map(|c| (c, state.get(c) as f64, c.canonical_unit()))
        .collect()
}
