//! Detector records: CSV ingestion, feature engineering, normalisation and
//! sliding-window sampling.

mod csv_io;
mod features;
mod normalize;
mod window;

pub use csv_io::{load_csv, write_meta_csv, write_records_csv, META_FILE, META_HEADER, RECORDS_FILE, RECORDS_HEADER};
pub use features::{
    engineer_features, FeatureKind, FeatureRegistry, FeatureTable, SPATIAL_FEATURES, TEMPORAL_FEATURES,
};
pub use normalize::{split_and_fit, Normalizer, Scheme, SplitPlan};
pub use window::{make_windows, FeatureTensor, WindowSample};

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{file}:{line}: {message}")]
    Schema { file: String, line: u64, message: String },
    #[error("{file}:{line}: duplicate record for detector {detector} at {timestamp}")]
    Duplicate { file: String, line: u64, detector: String, timestamp: String },
    #[error("{file}:{line}: unknown detector id {detector}")]
    UnknownDetector { file: String, line: u64, detector: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("empty split: {0}")]
    EmptySplit(String),
    #[error("series spans {available} steps but a window needs {needed}")]
    ShortSpan { available: usize, needed: usize },
    #[error("invalid window lengths l={l}, p={p}")]
    WindowLength { l: usize, p: usize },
    #[error("no records to build features from")]
    NoRecords,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Highway {
    I4,
    I10,
    I75,
    I95,
    TPK,
}

impl Highway {
    pub const ALL: [Highway; 5] = [Highway::I4, Highway::I10, Highway::I75, Highway::I95, Highway::TPK];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Highway::I4 => "I4",
            Highway::I10 => "I10",
            Highway::I75 => "I75",
            Highway::I95 => "I95",
            Highway::TPK => "TPK",
        }
    }
}

impl fmt::Display for Highway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Highway {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().replace('-', "").as_str() {
            "I4" => Ok(Highway::I4),
            "I10" => Ok(Highway::I10),
            "I75" => Ok(Highway::I75),
            "I95" => Ok(Highway::I95),
            "TPK" | "TP" => Ok(Highway::TPK),
            other => Err(format!("unknown highway {other:?} (expected I4, I10, I75, I95, TPK)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorMeta {
    pub detector_id: String,
    pub highway: Highway,
    /// Miles along the highway.
    pub milepost: f64,
    pub lanes: u32,
    pub lat: f64,
    pub lon: f64,
}

pub const INCIDENT_COLUMNS: [&str; 8] = [
    "incident_flag",
    "n_incidents",
    "max_lanes_closed",
    "vehicles_involved",
    "avg_incident_dur_min",
    "max_incident_dur_min",
    "avg_elapsed_min",
    "max_elapsed_min",
];

pub const EVAC_COLUMNS: [&str; 7] = [
    "cum_pop_under_orders",
    "dist_evac_zone_mi",
    "dist_landfall_mi",
    "hrs_before_landfall",
    "hrs_after_order",
    "evac_day",
    "landfall_day",
];

/// One detector-hour. Empty CSV cells for incident and evacuation columns
/// read as 0.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyRecord {
    pub detector_id: String,
    pub timestamp: DateTime<Utc>,
    /// veh/h
    pub flow: Option<f64>,
    /// mph
    pub speed: Option<f64>,
    pub incident: [f64; 8],
    pub evacuation: [f64; 7],
}
