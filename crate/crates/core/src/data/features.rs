use std::collections::HashMap;

use chrono::{DateTime, Datelike, Duration, Timelike, Utc, Weekday};
use serde::{Deserialize, Serialize};

use super::{DataError, DetectorMeta, Highway, HourlyRecord, Scheme, EVAC_COLUMNS, INCIDENT_COLUMNS};

/// Temporal features, in registry order.
pub const TEMPORAL_FEATURES: [&str; 24] = [
    "flow",
    "speed",
    "prev_day_mean_flow",
    "prev_day_std_flow",
    "prev_period_mean_flow",
    "prev_period_std_flow",
    "tod_night",
    "tod_morning",
    "tod_noon",
    "tod_evening",
    "weekday",
    INCIDENT_COLUMNS[0],
    INCIDENT_COLUMNS[1],
    INCIDENT_COLUMNS[2],
    INCIDENT_COLUMNS[3],
    INCIDENT_COLUMNS[4],
    INCIDENT_COLUMNS[5],
    INCIDENT_COLUMNS[6],
    INCIDENT_COLUMNS[7],
    EVAC_COLUMNS[0],
    EVAC_COLUMNS[3],
    EVAC_COLUMNS[4],
    EVAC_COLUMNS[5],
    EVAC_COLUMNS[6],
];

/// Spatial (per-node, window-constant) features, in registry order.
pub const SPATIAL_FEATURES: [&str; 8] = [
    "highway_I4",
    "highway_I10",
    "highway_I75",
    "highway_I95",
    "highway_TPK",
    "lanes",
    EVAC_COLUMNS[1],
    EVAC_COLUMNS[2],
];

/// Minimum valid hours on the previous day for its mean/std to count.
const MIN_PREV_DAY_HOURS: usize = 12;
/// Minimum valid hours in the previous day's matching 6-hour period.
const MIN_PREV_PERIOD_HOURS: usize = 3;
/// Longest run of missing flow/speed hours that gets interpolated.
const MAX_INTERP_GAP: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Temporal,
    Spatial,
}

/// Ordered feature names shared by every window of a run. The RL action
/// index `a` refers to entry `a` of this list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureRegistry {
    pub names: Vec<String>,
    pub schemes: Vec<Scheme>,
    pub n_temporal: usize,
    pub n_spatial: usize,
}

impl FeatureRegistry {
    pub fn standard() -> Self {
        let names: Vec<String> =
            TEMPORAL_FEATURES.iter().chain(SPATIAL_FEATURES.iter()).map(|s| s.to_string()).collect();
        let schemes = names.iter().map(|n| default_scheme(n)).collect();
        FeatureRegistry { names, schemes, n_temporal: TEMPORAL_FEATURES.len(), n_spatial: SPATIAL_FEATURES.len() }
    }

    /// Registry with caller-chosen names, all z-scored.
    pub fn custom(temporal: &[&str], spatial: &[&str]) -> Self {
        let names: Vec<String> = temporal.iter().chain(spatial).map(|s| s.to_string()).collect();
        let schemes = vec![Scheme::ZScore; names.len()];
        FeatureRegistry { names, schemes, n_temporal: temporal.len(), n_spatial: spatial.len() }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn kind(&self, index: usize) -> FeatureKind {
        if index < self.n_temporal {
            FeatureKind::Temporal
        } else {
            FeatureKind::Spatial
        }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

fn default_scheme(name: &str) -> Scheme {
    match name {
        n if n.starts_with("tod_") || n.starts_with("highway_") => Scheme::Passthrough,
        "weekday" | "incident_flag" | "evac_day" | "landfall_day" => Scheme::Passthrough,
        "lanes" | "max_lanes_closed" => Scheme::MinMax,
        _ => Scheme::ZScore,
    }
}

/// Time-of-day bin: 0 night [00,06), 1 morning [06,12), 2 noon [12,18), 3 evening [18,24).
pub fn time_of_day_bin(hour: u32) -> usize {
    (hour / 6) as usize
}

/// Engineered, un-normalised features on a dense hourly grid.
///
/// Index layout is `[t][d][feature]` with `d` following `detectors`, which is
/// sorted by (highway, milepost).
#[derive(Debug, Clone)]
pub struct FeatureTable {
    pub registry: FeatureRegistry,
    pub detectors: Vec<DetectorMeta>,
    pub start: DateTime<Utc>,
    pub hours: usize,
    pub temporal: Vec<f64>,
    pub spatial: Vec<f64>,
    pub active: Vec<bool>,
    /// veh/h after gap interpolation; NaN where unknown.
    pub flow: Vec<f64>,
    /// mph after gap interpolation; NaN where unknown.
    pub speed: Vec<f64>,
}

impl FeatureTable {
    pub fn n_detectors(&self) -> usize {
        self.detectors.len()
    }

    fn cell(&self, t: usize, d: usize) -> usize {
        t * self.detectors.len() + d
    }

    pub fn temporal_row(&self, t: usize, d: usize) -> &[f64] {
        let f = self.registry.n_temporal;
        let k = self.cell(t, d) * f;
        &self.temporal[k..k + f]
    }

    pub fn spatial_row(&self, t: usize, d: usize) -> &[f64] {
        let f = self.registry.n_spatial;
        let k = self.cell(t, d) * f;
        &self.spatial[k..k + f]
    }

    pub fn is_active(&self, t: usize, d: usize) -> bool {
        self.active[self.cell(t, d)]
    }

    pub fn flow_at(&self, t: usize, d: usize) -> f64 {
        self.flow[self.cell(t, d)]
    }

    pub fn speed_at(&self, t: usize, d: usize) -> f64 {
        self.speed[self.cell(t, d)]
    }

    pub fn timestamp(&self, t: usize) -> DateTime<Utc> {
        self.start + Duration::hours(t as i64)
    }

    pub fn active_nodes(&self, t: usize) -> Vec<usize> {
        (0..self.n_detectors()).filter(|&d| self.is_active(t, d)).collect()
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Fills interior runs of at most `MAX_INTERP_GAP` missing values linearly.
fn interpolate_short_gaps(series: &mut [Option<f64>]) -> Vec<bool> {
    let mut filled = vec![false; series.len()];
    let mut t = 0;
    while t < series.len() {
        if series[t].is_some() {
            t += 1;
            continue;
        }
        let start = t;
        while t < series.len() && series[t].is_none() {
            t += 1;
        }
        let len = t - start;
        if start == 0 || t == series.len() || len > MAX_INTERP_GAP {
            continue;
        }
        let (a, b) = (series[start - 1].unwrap(), series[t].unwrap());
        for k in 0..len {
            let w = (k + 1) as f64 / (len + 1) as f64;
            series[start + k] = Some(a + (b - a) * w);
            filled[start + k] = true;
        }
    }
    filled
}

/// Derives the full feature set on an hourly grid spanning the records.
///
/// Rows without a previous day of history, or with unrecoverable flow/speed
/// gaps, are marked inactive.
pub fn engineer_features(records: &[HourlyRecord], metas: &[DetectorMeta]) -> Result<FeatureTable, DataError> {
    let registry = FeatureRegistry::standard();
    let first = records.iter().map(|r| r.timestamp).min().ok_or(DataError::NoRecords)?;
    let last = records.iter().map(|r| r.timestamp).max().ok_or(DataError::NoRecords)?;
    let hours = ((last - first).num_hours() + 1) as usize;

    let mut detectors = metas.to_vec();
    detectors.sort_by(|a, b| {
        a.highway.cmp(&b.highway).then(a.milepost.total_cmp(&b.milepost)).then(a.detector_id.cmp(&b.detector_id))
    });
    let index: HashMap<&str, usize> =
        detectors.iter().enumerate().map(|(i, m)| (m.detector_id.as_str(), i)).collect();
    let nd = detectors.len();

    let mut row_of: Vec<Option<usize>> = vec![None; hours * nd];
    for (k, r) in records.iter().enumerate() {
        let Some(&d) = index.get(r.detector_id.as_str()) else { continue };
        let t = (r.timestamp - first).num_hours() as usize;
        row_of[t * nd + d] = Some(k);
    }

    let mut flow = vec![f64::NAN; hours * nd];
    let mut speed = vec![f64::NAN; hours * nd];
    // incident + evacuation columns, carried forward into interpolated hours
    let mut extra: Vec<[f64; 15]> = vec![[0.0; 15]; hours * nd];
    for d in 0..nd {
        let mut f: Vec<Option<f64>> = (0..hours).map(|t| row_of[t * nd + d].and_then(|k| records[k].flow)).collect();
        let mut s: Vec<Option<f64>> = (0..hours).map(|t| row_of[t * nd + d].and_then(|k| records[k].speed)).collect();
        interpolate_short_gaps(&mut f);
        interpolate_short_gaps(&mut s);
        let mut carry = [0.0; 15];
        for t in 0..hours {
            let c = t * nd + d;
            if let Some(k) = row_of[c] {
                carry[..8].copy_from_slice(&records[k].incident);
                carry[8..].copy_from_slice(&records[k].evacuation);
            }
            extra[c] = carry;
            flow[c] = f[t].unwrap_or(f64::NAN);
            speed[c] = s[t].unwrap_or(f64::NAN);
        }
    }

    // valid flows per (detector, day), tagged with hour of day
    let start_date = first.date_naive();
    let day_of = |t: usize| ((first + Duration::hours(t as i64)).date_naive() - start_date).num_days() as usize;
    let n_days = day_of(hours - 1) + 1;
    let mut by_day: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_days * nd];
    for t in 0..hours {
        let ts = first + Duration::hours(t as i64);
        for d in 0..nd {
            let v = flow[t * nd + d];
            if v.is_finite() {
                by_day[day_of(t) * nd + d].push((ts.hour(), v));
            }
        }
    }

    let ft = registry.n_temporal;
    let fs = registry.n_spatial;
    let mut temporal = vec![0.0; hours * nd * ft];
    let mut spatial = vec![0.0; hours * nd * fs];
    let mut active = vec![false; hours * nd];

    for t in 0..hours {
        let ts = first + Duration::hours(t as i64);
        let day = day_of(t);
        let bin = time_of_day_bin(ts.hour());
        let weekday = !matches!(ts.weekday(), Weekday::Sat | Weekday::Sun);
        for (d, meta) in detectors.iter().enumerate() {
            let c = t * nd + d;
            let (fv, sv) = (flow[c], speed[c]);
            let prev = if day > 0 { Some(&by_day[(day - 1) * nd + d]) } else { None };
            let day_stats = prev
                .filter(|v| v.len() >= MIN_PREV_DAY_HOURS)
                .map(|v| mean_std(&v.iter().map(|&(_, x)| x).collect::<Vec<_>>()));
            let period_stats = prev.and_then(|v| {
                let xs: Vec<f64> =
                    v.iter().filter(|&&(h, _)| time_of_day_bin(h) == bin).map(|&(_, x)| x).collect();
                (xs.len() >= MIN_PREV_PERIOD_HOURS).then(|| mean_std(&xs))
            });

            active[c] = fv.is_finite() && sv.is_finite() && day_stats.is_some() && period_stats.is_some();

            let e = &extra[c];
            let row = &mut temporal[c * ft..(c + 1) * ft];
            row[0] = if fv.is_finite() { fv } else { 0.0 };
            row[1] = if sv.is_finite() { sv } else { 0.0 };
            let (dm, ds) = day_stats.unwrap_or((0.0, 0.0));
            let (pm, ps) = period_stats.unwrap_or((0.0, 0.0));
            row[2] = dm;
            row[3] = ds;
            row[4] = pm;
            row[5] = ps;
            row[6 + bin] = 1.0;
            row[10] = if weekday { 1.0 } else { 0.0 };
            row[11..19].copy_from_slice(&e[..8]);
            // cum_pop, hrs_before_landfall, hrs_after_order, evac_day, landfall_day
            row[19] = e[8];
            row[20] = e[8 + 3];
            row[21] = e[8 + 4];
            row[22] = e[8 + 5];
            row[23] = e[8 + 6];

            let srow = &mut spatial[c * fs..(c + 1) * fs];
            srow[meta.highway.index()] = 1.0;
            srow[5] = meta.lanes as f64;
            srow[6] = e[8 + 1];
            srow[7] = e[8 + 2];
        }
    }
    debug_assert_eq!(Highway::ALL.len(), 5);

    Ok(FeatureTable { registry, detectors, start: first, hours, temporal, spatial, active, flow, speed })
}
