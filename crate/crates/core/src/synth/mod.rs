//! Seeded synthetic evacuation scenarios in the detector CSV schema.

use std::path::Path;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Highway};

mod builtin;
mod generate;
#[cfg(test)]
mod tests;

pub use builtin::{builtin, builtin_names, builtin_scenarios};
pub use generate::{
    argsort_disagreement, generate, write_scenario, GeneratedScenario, GroundTruth, IncidentEvent, OutageEvent,
    ScenarioStats, MANIFEST_FILE,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unknown scenario '{name}' (builtins: {})", builtin_names().join(", "))]
    Unknown { name: String },
    #[error("scenario self-check failed: {0}")]
    SelfCheck(String),
    #[error("cannot read scenario {path}: {message}")]
    Read { path: String, message: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HighwaySpec {
    pub highway: Highway,
    pub detectors: usize,
    /// mean miles between neighbouring detectors
    pub spacing_mi: f64,
    /// relative spread of each gap, in `[0, 1)`
    #[serde(default)]
    pub spacing_jitter: f64,
    pub lanes: u32,
    #[serde(default)]
    pub start_milepost: f64,
    /// `[lat, lon]` of milepost 0
    pub origin: [f64; 2],
    /// compass bearing of increasing mileposts, degrees
    pub bearing_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurgeSpec {
    /// hour the evacuation order is issued
    pub order_hour: usize,
    pub landfall_hour: usize,
    pub peak_multiplier: f64,
    /// hours to reach the peak after the order (and to fall off before landfall)
    pub ramp_hours: f64,
    /// e-folding distance from landfall, miles
    pub spatial_decay_mi: f64,
    /// `[lat, lon]`
    pub landfall_point: [f64; 2],
    /// demand multiplier while the storm passes
    pub post_landfall_multiplier: f64,
    pub post_landfall_hours: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncidentSpec {
    /// per detector and hour
    pub rate_per_hour: f64,
    /// inclusive range of whole hours
    pub duration_hours: [usize; 2],
    pub capacity_drop: f64,
    pub max_lanes_closed: u32,
    #[serde(default)]
    pub forced: Vec<ForcedIncident>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcedIncident {
    pub detector_id: String,
    pub start_hour: usize,
    pub hours: usize,
    pub capacity_drop: f64,
    #[serde(default = "one")]
    pub lanes_closed: u32,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutageSpec {
    pub rate_per_hour: f64,
    pub duration_hours: [usize; 2],
    #[serde(default)]
    pub forced: Vec<ForcedOutage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcedOutage {
    pub detector_id: String,
    pub start_hour: usize,
    pub hours: usize,
}

/// Travelling capacity reductions moving against increasing mileposts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveSpec {
    /// peak fractional capacity loss, in `[0, 1)`
    pub amplitude: f64,
    pub period_hours: f64,
    /// miles per hour travelled by a wave front
    pub celerity_mph: f64,
    /// waves only run between the order and landfall
    #[serde(default)]
    pub surge_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvacSpec {
    pub population: f64,
    /// hours for the ordered population to reach `population` after the order
    pub curve_hours: f64,
    pub zone_radius_mi: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelfChecks {
    /// surge-period mean flow over non-evacuation mean flow
    #[serde(default)]
    pub min_surge_ratio: Option<f64>,
    /// fraction of surge-period hours whose travel-time edge order differs
    /// from the distance edge order
    #[serde(default)]
    pub min_argsort_disagreement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub version: u32,
    pub seed: u64,
    pub start: DateTime<Utc>,
    pub hours: usize,
    pub highways: Vec<HighwaySpec>,
    /// multiplier per hour of day
    pub diurnal: Vec<f64>,
    pub weekend_factor: f64,
    pub base_flow_per_lane: f64,
    /// relative spread of per-detector base demand
    pub detector_scale_jitter: f64,
    pub capacity_per_lane: f64,
    pub free_flow_mph: f64,
    pub v_min_mph: f64,
    pub surge: SurgeSpec,
    pub incidents: IncidentSpec,
    pub outages: OutageSpec,
    pub waves: Option<WaveSpec>,
    /// flow noise std as a fraction of the diurnal base
    pub flow_noise: f64,
    /// speed noise std, mph
    pub speed_noise_mph: f64,
    pub evacuation: EvacSpec,
    pub checks: SelfChecks,
}

pub const DEFAULT_DIURNAL: [f64; 24] = [
    0.25, 0.2, 0.18, 0.18, 0.25, 0.45, 0.75, 0.95, 1.0, 0.85, 0.75, 0.75, 0.78, 0.78, 0.8, 0.88, 0.97, 1.0, 0.9,
    0.7, 0.55, 0.45, 0.38, 0.3,
];

/// Minimum model window `l + p` assumed by [`Scenario::validate`].
pub const DEFAULT_SPAN: usize = 12;
/// Hours of history consumed by feature engineering.
pub const HISTORY_HOURS: usize = 48;

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "custom".into(),
            version: 1,
            seed: 0,
            start: Utc.with_ymd_and_hms(2024, 10, 1, 0, 0, 0).unwrap(),
            hours: 240,
            highways: vec![HighwaySpec {
                highway: Highway::I4,
                detectors: 4,
                spacing_mi: 3.0,
                spacing_jitter: 0.0,
                lanes: 3,
                start_milepost: 0.0,
                origin: [28.0, -82.4],
                bearing_deg: 60.0,
            }],
            diurnal: DEFAULT_DIURNAL.to_vec(),
            weekend_factor: 0.9,
            base_flow_per_lane: 600.0,
            detector_scale_jitter: 0.0,
            capacity_per_lane: 2000.0,
            free_flow_mph: 70.0,
            v_min_mph: 10.0,
            surge: SurgeSpec {
                order_hour: 96,
                landfall_hour: 192,
                peak_multiplier: 2.5,
                ramp_hours: 12.0,
                spatial_decay_mi: 400.0,
                landfall_point: [27.5, -82.6],
                post_landfall_multiplier: 0.4,
                post_landfall_hours: 24,
            },
            incidents: IncidentSpec {
                rate_per_hour: 0.0,
                duration_hours: [1, 3],
                capacity_drop: 0.3,
                max_lanes_closed: 1,
                forced: Vec::new(),
            },
            outages: OutageSpec { rate_per_hour: 0.0, duration_hours: [3, 6], forced: Vec::new() },
            waves: None,
            flow_noise: 0.0,
            speed_noise_mph: 0.0,
            evacuation: EvacSpec { population: 2.0e6, curve_hours: 48.0, zone_radius_mi: 30.0 },
            checks: SelfChecks::default(),
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), SynthError> {
    if ok {
        Ok(())
    } else {
        Err(SynthError::Invalid(msg()))
    }
}

fn positive(name: &str, v: f64) -> Result<(), SynthError> {
    check(v.is_finite() && v > 0.0, || format!("{name} must be > 0, got {v}"))
}

fn fraction(name: &str, v: f64) -> Result<(), SynthError> {
    check((0.0..1.0).contains(&v), || format!("{name} must lie in [0, 1), got {v}"))
}

fn nonneg(name: &str, v: f64) -> Result<(), SynthError> {
    check(v.is_finite() && v >= 0.0, || format!("{name} must be >= 0, got {v}"))
}

fn duration_range(name: &str, r: [usize; 2]) -> Result<(), SynthError> {
    check(r[0] >= 1 && r[0] <= r[1], || format!("{name} duration range {r:?} must satisfy 1 <= min <= max"))
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_file(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SynthError::Read { path: path.display().to_string(), message: e.to_string() })?;
        Scenario::from_json(&text)
    }

    /// Builtin name (case-insensitive) or path to a scenario JSON file.
    pub fn resolve(name_or_path: &str) -> Result<Self, SynthError> {
        if let Some(s) = builtin(name_or_path) {
            return Ok(s);
        }
        let path = Path::new(name_or_path);
        if path.is_file() {
            return Scenario::from_file(path);
        }
        Err(SynthError::Unknown { name: name_or_path.to_string() })
    }

    pub fn n_detectors(&self) -> usize {
        self.highways.iter().map(|h| h.detectors).sum()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        self.validate_for(DEFAULT_SPAN)
    }

    /// Checks parameters for a model window of `span = l + p` hours.
    pub fn validate_for(&self, span: usize) -> Result<(), SynthError> {
        let need = span + HISTORY_HOURS;
        check(self.hours >= need, || format!("hours = {} but at least {need} are required", self.hours))?;
        check(!self.highways.is_empty() && self.n_detectors() > 0, || "no detectors".into())?;
        let mut seen = std::collections::BTreeSet::new();
        for h in &self.highways {
            check(seen.insert(h.highway), || format!("highway {} listed twice", h.highway))?;
            positive("spacing_mi", h.spacing_mi)?;
            fraction("spacing_jitter", h.spacing_jitter)?;
            check(h.lanes > 0, || format!("{} has zero lanes", h.highway))?;
            check(h.start_milepost.is_finite(), || "start_milepost must be finite".into())?;
            check(h.origin.iter().chain([&h.bearing_deg]).all(|v| v.is_finite()), || {
                "origin and bearing must be finite".into()
            })?;
        }
        check(self.diurnal.len() == 24, || format!("diurnal profile needs 24 entries, got {}", self.diurnal.len()))?;
        for &v in &self.diurnal {
            positive("diurnal multiplier", v)?;
        }
        positive("weekend_factor", self.weekend_factor)?;
        positive("base_flow_per_lane", self.base_flow_per_lane)?;
        fraction("detector_scale_jitter", self.detector_scale_jitter)?;
        positive("capacity_per_lane", self.capacity_per_lane)?;
        positive("v_min_mph", self.v_min_mph)?;
        check(self.free_flow_mph.is_finite() && self.free_flow_mph > self.v_min_mph, || {
            format!("free_flow_mph {} must exceed v_min_mph {}", self.free_flow_mph, self.v_min_mph)
        })?;

        let s = &self.surge;
        positive("peak_multiplier", s.peak_multiplier)?;
        positive("post_landfall_multiplier", s.post_landfall_multiplier)?;
        positive("ramp_hours", s.ramp_hours)?;
        positive("spatial_decay_mi", s.spatial_decay_mi)?;
        check(s.order_hour < s.landfall_hour, || {
            format!("order hour {} must precede landfall hour {}", s.order_hour, s.landfall_hour)
        })?;
        check(s.landfall_point.iter().all(|v| v.is_finite()), || "landfall point must be finite".into())?;

        let inc = &self.incidents;
        check((0.0..=1.0).contains(&inc.rate_per_hour), || "incident rate must lie in [0, 1]".into())?;
        duration_range("incident", inc.duration_hours)?;
        fraction("capacity_drop", inc.capacity_drop)?;
        check(inc.max_lanes_closed >= 1, || "max_lanes_closed must be >= 1".into())?;
        for f in &inc.forced {
            self.known_detector(&f.detector_id)?;
            fraction("forced capacity_drop", f.capacity_drop)?;
            check(f.hours >= 1 && f.start_hour < self.hours, || format!("forced incident {f:?} outside the horizon"))?;
        }
        let out = &self.outages;
        check((0.0..=1.0).contains(&out.rate_per_hour), || "outage rate must lie in [0, 1]".into())?;
        duration_range("outage", out.duration_hours)?;
        for f in &out.forced {
            self.known_detector(&f.detector_id)?;
            check(f.hours >= 1 && f.start_hour < self.hours, || format!("forced outage {f:?} outside the horizon"))?;
        }
        if let Some(w) = &self.waves {
            fraction("wave amplitude", w.amplitude)?;
            positive("wave period_hours", w.period_hours)?;
            positive("wave celerity_mph", w.celerity_mph)?;
        }
        nonneg("flow_noise", self.flow_noise)?;
        nonneg("speed_noise_mph", self.speed_noise_mph)?;
        nonneg("population", self.evacuation.population)?;
        positive("curve_hours", self.evacuation.curve_hours)?;
        nonneg("zone_radius_mi", self.evacuation.zone_radius_mi)?;
        Ok(())
    }

    fn known_detector(&self, id: &str) -> Result<(), SynthError> {
        check(self.detector_ids().iter().any(|d| d == id), || format!("unknown detector '{id}'"))
    }

    /// Detector ids in generation order: `<highway>-<k>` with k from 1.
    pub fn detector_ids(&self) -> Vec<String> {
        self.highways
            .iter()
            .flat_map(|h| (1..=h.detectors).map(move |k| format!("{}-{k:03}", h.highway)))
            .collect()
    }
}
