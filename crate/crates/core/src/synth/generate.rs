use std::path::Path;

use chrono::{Datelike, Duration, Timelike, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::{Scenario, SynthError};
use crate::data::{write_meta_csv, write_records_csv, DetectorMeta, HourlyRecord, META_FILE, RECORDS_FILE};
use crate::graph::{build_edges, travel_time, GraphOptions};

pub const MANIFEST_FILE: &str = "scenario.json";

const MILES_PER_DEG_LAT: f64 = 69.0;
/// stream offset for layout draws, clear of the per-detector streams
const LAYOUT_STREAM: u64 = 1 << 32;
const MIN_CAPACITY_FACTOR: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncidentEvent {
    pub detector_id: String,
    pub start_hour: usize,
    pub hours: usize,
    pub lanes_closed: u32,
    pub vehicles: u32,
    pub capacity_drop: f64,
}

impl IncidentEvent {
    fn covers(&self, t: usize) -> bool {
        t >= self.start_hour && t < self.start_hour + self.hours
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutageEvent {
    pub detector_id: String,
    pub start_hour: usize,
    pub hours: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioStats {
    pub surge_mean_flow: f64,
    pub non_evac_mean_flow: f64,
    pub surge_ratio: f64,
    pub argsort_disagreement: f64,
    pub missing_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub rows: usize,
    pub detectors: usize,
    pub order_hour: usize,
    pub landfall_hour: usize,
    pub incidents: Vec<IncidentEvent>,
    pub outages: Vec<OutageEvent>,
    pub stats: ScenarioStats,
}

#[derive(Debug, Clone)]
pub struct GeneratedScenario {
    pub scenario: Scenario,
    pub metas: Vec<DetectorMeta>,
    /// sorted by (detector id, hour)
    pub records: Vec<HourlyRecord>,
    pub truth: GroundTruth,
}

struct Site {
    meta: DetectorMeta,
    dist_landfall: f64,
}

fn miles_between(a: [f64; 2], b: [f64; 2]) -> f64 {
    let mean_lat = ((a[0] + b[0]) / 2.0).to_radians();
    let dy = (a[0] - b[0]) * MILES_PER_DEG_LAT;
    let dx = (a[1] - b[1]) * MILES_PER_DEG_LAT * mean_lat.cos();
    dx.hypot(dy)
}

fn layout(sc: &Scenario) -> Vec<Site> {
    let mut sites = Vec::new();
    for (hi, h) in sc.highways.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
        rng.set_stream(LAYOUT_STREAM + hi as u64);
        let bearing = h.bearing_deg.to_radians();
        let mut mp = h.start_milepost;
        for k in 1..=h.detectors {
            if k > 1 {
                let u: f64 = rng.gen_range(-1.0..=1.0);
                mp += h.spacing_mi * (1.0 + h.spacing_jitter * u);
            }
            let off = mp - h.start_milepost;
            let lat = h.origin[0] + off * bearing.cos() / MILES_PER_DEG_LAT;
            let lon = h.origin[1] + off * bearing.sin() / (MILES_PER_DEG_LAT * h.origin[0].to_radians().cos());
            let (lat, lon) = ((lat * 1e6).round() / 1e6, (lon * 1e6).round() / 1e6);
            let mp_out = (mp * 1e3).round() / 1e3;
            let meta = DetectorMeta {
                detector_id: format!("{}-{k:03}", h.highway),
                highway: h.highway,
                milepost: mp_out,
                lanes: h.lanes,
                lat,
                lon,
            };
            sites.push(Site { dist_landfall: miles_between([lat, lon], sc.surge.landfall_point), meta });
        }
    }
    sites
}

impl Scenario {
    /// Diurnal baseline demand at hour `t` for a detector with `lanes` lanes
    /// and relative demand `scale`.
    pub fn diurnal_base(&self, t: usize, lanes: u32, scale: f64) -> f64 {
        let ts = self.start + Duration::hours(t as i64);
        let weekend = matches!(ts.weekday(), Weekday::Sat | Weekday::Sun);
        let wf = if weekend { self.weekend_factor } else { 1.0 };
        self.base_flow_per_lane * lanes as f64 * scale * self.diurnal[ts.hour() as usize] * wf
    }

    /// Evacuation demand multiplier at hour `t`, `dist` miles from landfall.
    pub fn surge_multiplier(&self, t: usize, dist: f64) -> f64 {
        let s = &self.surge;
        if t >= s.landfall_hour && t < s.landfall_hour + s.post_landfall_hours {
            return s.post_landfall_multiplier;
        }
        if t < s.order_hour || t >= s.landfall_hour {
            return 1.0;
        }
        let rise = ((t - s.order_hour + 1) as f64 / s.ramp_hours).min(1.0);
        let fall = ((s.landfall_hour - t) as f64 / s.ramp_hours).min(1.0);
        1.0 + (s.peak_multiplier - 1.0) * rise.min(fall) * (-dist / s.spatial_decay_mi).exp()
    }

    /// Capacity multiplier of the travelling congestion waves.
    pub fn wave_factor(&self, t: usize, milepost: f64) -> f64 {
        let Some(w) = &self.waves else { return 1.0 };
        if w.surge_only && (t < self.surge.order_hour || t >= self.surge.landfall_hour) {
            return 1.0;
        }
        let phase = std::f64::consts::TAU * (t as f64 + milepost / w.celerity_mph) / w.period_hours;
        let crest = (0.5 * (1.0 + phase.sin())).powi(2);
        1.0 - w.amplitude * crest
    }

    /// Linear speed-flow curve: free flow at zero load, `v_min` at capacity.
    pub fn speed_at_load(&self, ratio: f64) -> f64 {
        self.free_flow_mph - (self.free_flow_mph - self.v_min_mph) * ratio.clamp(0.0, 1.0)
    }

    fn hour_day(&self, t: usize) -> chrono::NaiveDate {
        (self.start + Duration::hours(t as i64)).date_naive()
    }

    fn is_evac_day(&self, t: usize) -> bool {
        let d = self.hour_day(t);
        d >= self.hour_day(self.surge.order_hour) && d < self.hour_day(self.surge.landfall_hour)
    }

    fn is_landfall_day(&self, t: usize) -> bool {
        self.hour_day(t) == self.hour_day(self.surge.landfall_hour)
    }

    fn evacuation_columns(&self, t: usize, dist: f64) -> [f64; 7] {
        let s = &self.surge;
        let e = &self.evacuation;
        let since_order = t as f64 - s.order_hour as f64;
        let ordered = if since_order < 0.0 { 0.0 } else { e.population * (since_order / e.curve_hours).min(1.0) };
        [
            ordered.round(),
            (dist - e.zone_radius_mi).max(0.0),
            dist,
            (s.landfall_hour as f64 - t as f64).max(0.0),
            since_order.max(0.0),
            self.is_evac_day(t) as u8 as f64,
            self.is_landfall_day(t) as u8 as f64,
        ]
    }
}

fn incident_columns(active: &[&IncidentEvent], t: usize) -> [f64; 8] {
    if active.is_empty() {
        return [0.0; 8];
    }
    let n = active.len() as f64;
    let dur: Vec<f64> = active.iter().map(|e| (e.hours * 60) as f64).collect();
    let elapsed: Vec<f64> = active.iter().map(|e| ((t - e.start_hour) * 60) as f64).collect();
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    [
        1.0,
        n,
        active.iter().map(|e| e.lanes_closed).max().unwrap_or(0) as f64,
        active.iter().map(|e| e.vehicles).sum::<u32>() as f64,
        dur.iter().sum::<f64>() / n,
        max(&dur),
        elapsed.iter().sum::<f64>() / n,
        max(&elapsed),
    ]
}

struct DetectorRun {
    records: Vec<HourlyRecord>,
    incidents: Vec<IncidentEvent>,
    outages: Vec<OutageEvent>,
}

fn round_to(v: f64, digits: i32) -> f64 {
    let k = 10f64.powi(digits);
    (v * k).round() / k
}

fn simulate_detector(sc: &Scenario, index: usize, site: &Site) -> DetectorRun {
    let id = &site.meta.detector_id;
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    rng.set_stream(index as u64);
    let scale = 1.0 + sc.detector_scale_jitter * rng.gen_range(-1.0..=1.0);

    let inc = &sc.incidents;
    let mut incidents = Vec::new();
    for t in 0..sc.hours {
        if rng.gen::<f64>() < inc.rate_per_hour {
            let hours = rng.gen_range(inc.duration_hours[0]..=inc.duration_hours[1]);
            let lanes_closed = rng.gen_range(1..=inc.max_lanes_closed.min(site.meta.lanes));
            let vehicles = rng.gen_range(1..=4);
            incidents.push(IncidentEvent {
                detector_id: id.clone(),
                start_hour: t,
                hours,
                lanes_closed,
                vehicles,
                capacity_drop: inc.capacity_drop,
            });
        }
    }
    for f in inc.forced.iter().filter(|f| &f.detector_id == id) {
        incidents.push(IncidentEvent {
            detector_id: id.clone(),
            start_hour: f.start_hour,
            hours: f.hours,
            lanes_closed: f.lanes_closed,
            vehicles: 1,
            capacity_drop: f.capacity_drop,
        });
    }

    let out = &sc.outages;
    let mut outages = Vec::new();
    let mut dark = vec![false; sc.hours];
    let mut t = 0;
    while t < sc.hours {
        if rng.gen::<f64>() < out.rate_per_hour {
            let hours = rng.gen_range(out.duration_hours[0]..=out.duration_hours[1]);
            outages.push(OutageEvent { detector_id: id.clone(), start_hour: t, hours });
            t += hours;
        } else {
            t += 1;
        }
    }
    for f in out.forced.iter().filter(|f| &f.detector_id == id) {
        outages.push(OutageEvent { detector_id: id.clone(), start_hour: f.start_hour, hours: f.hours });
    }
    for o in &outages {
        dark[o.start_hour.min(sc.hours)..(o.start_hour + o.hours).min(sc.hours)].fill(true);
    }

    let capacity = sc.capacity_per_lane * site.meta.lanes as f64;
    let mut records = Vec::with_capacity(sc.hours);
    for t in 0..sc.hours {
        let zf: f64 = StandardNormal.sample(&mut rng);
        let zs: f64 = StandardNormal.sample(&mut rng);
        let active: Vec<&IncidentEvent> = incidents.iter().filter(|e| e.covers(t)).collect();
        let incident_factor: f64 = active.iter().map(|e| 1.0 - e.capacity_drop).product();
        let cf = (incident_factor * sc.wave_factor(t, site.meta.milepost)).max(MIN_CAPACITY_FACTOR);
        let base = sc.diurnal_base(t, site.meta.lanes, scale);
        let demand = base * sc.surge_multiplier(t, site.dist_landfall);
        let flow = (demand * cf + sc.flow_noise * base * zf).max(0.0);
        let speed = (sc.speed_at_load(demand / (capacity * cf)) + sc.speed_noise_mph * zs)
            .clamp(sc.v_min_mph, sc.free_flow_mph);
        let (flow, speed) = if dark[t] {
            (None, None)
        } else if sc.flow_noise == 0.0 && sc.speed_noise_mph == 0.0 {
            (Some(flow), Some(speed))
        } else {
            (Some(round_to(flow, 3)), Some(round_to(speed, 3).clamp(sc.v_min_mph, sc.free_flow_mph)))
        };
        records.push(HourlyRecord {
            detector_id: id.clone(),
            timestamp: sc.start + Duration::hours(t as i64),
            flow,
            speed,
            incident: incident_columns(&active, t),
            evacuation: sc.evacuation_columns(t, round_to(site.dist_landfall, 3)),
        });
    }
    DetectorRun { records, incidents, outages }
}

fn argsort(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    idx
}

/// Fraction of `hours` whose travel-time edge ordering differs from the
/// distance edge ordering, over the detectors reporting a speed that hour.
pub fn argsort_disagreement(
    metas: &[DetectorMeta],
    speeds: &dyn Fn(usize, usize) -> Option<f64>,
    hours: std::ops::Range<usize>,
) -> f64 {
    let mut order: Vec<usize> = (0..metas.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&metas[a], &metas[b]);
        x.highway.cmp(&y.highway).then(x.milepost.total_cmp(&y.milepost)).then(x.detector_id.cmp(&y.detector_id))
    });
    let floor = GraphOptions::default().speed_floor;
    let n = hours.len();
    if n == 0 {
        return 0.0;
    }
    let differing = hours
        .filter(|&t| {
            let live: Vec<(usize, f64)> = order.iter().filter_map(|&d| speeds(d, t).map(|v| (d, v))).collect();
            let refs: Vec<&DetectorMeta> = live.iter().map(|&(d, _)| &metas[d]).collect();
            let edges = build_edges(&refs);
            let dist: Vec<f64> = edges.iter().map(|e| e.2).collect();
            let tt: Vec<f64> = edges.iter().map(|&(i, j, m)| travel_time(m, live[i].1, live[j].1, floor).0).collect();
            argsort(&dist) != argsort(&tt)
        })
        .count();
    differing as f64 / n as f64
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Simulates every detector-hour of `sc`.
pub fn generate(sc: &Scenario) -> Result<GeneratedScenario, SynthError> {
    sc.validate()?;
    let sites = layout(sc);
    let runs: Vec<DetectorRun> =
        sites.par_iter().enumerate().map(|(k, site)| simulate_detector(sc, k, site)).collect();

    let metas: Vec<DetectorMeta> = sites.iter().map(|s| s.meta.clone()).collect();
    let h = sc.hours;
    let cell = |d: usize, t: usize| &runs[d].records[t];

    let s = &sc.surge;
    let surge_hours = s.order_hour.min(h)..s.landfall_hour.min(h);
    let flows_in = |keep: &dyn Fn(usize) -> bool| {
        mean((0..h).filter(|&t| keep(t)).flat_map(|t| (0..metas.len()).filter_map(move |d| cell(d, t).flow)))
    };
    let surge_mean_flow = flows_in(&|t| surge_hours.contains(&t));
    let non_evac_mean_flow = flows_in(&|t| !sc.is_evac_day(t) && !sc.is_landfall_day(t));
    let stats = ScenarioStats {
        surge_mean_flow,
        non_evac_mean_flow,
        surge_ratio: surge_mean_flow / non_evac_mean_flow,
        argsort_disagreement: argsort_disagreement(&metas, &|d, t| cell(d, t).speed, surge_hours),
        missing_cells: runs.iter().flat_map(|r| &r.records).filter(|r| r.flow.is_none()).count(),
    };

    if let Some(min) = sc.checks.min_surge_ratio {
        if !(stats.surge_ratio > min) {
            return Err(SynthError::SelfCheck(format!("surge ratio {:.3} not above {min}", stats.surge_ratio)));
        }
    }
    if let Some(min) = sc.checks.min_argsort_disagreement {
        if !(stats.argsort_disagreement >= min) {
            return Err(SynthError::SelfCheck(format!(
                "travel-time edge order differs in {:.3} of surge hours, below {min}",
                stats.argsort_disagreement
            )));
        }
    }

    let mut incidents = Vec::new();
    let mut outages = Vec::new();
    let mut records = Vec::with_capacity(h * metas.len());
    for run in runs {
        incidents.extend(run.incidents);
        outages.extend(run.outages);
        records.extend(run.records);
    }
    records.sort_by(|a, b| a.detector_id.cmp(&b.detector_id).then(a.timestamp.cmp(&b.timestamp)));
    let truth = GroundTruth {
        rows: records.len(),
        detectors: metas.len(),
        order_hour: s.order_hour,
        landfall_hour: s.landfall_hour,
        incidents,
        outages,
        stats,
    };
    Ok(GeneratedScenario { scenario: sc.clone(), metas, records, truth })
}

#[derive(Serialize)]
struct Manifest<'a> {
    scenario: &'a Scenario,
    ground_truth: &'a GroundTruth,
}

/// Writes `meta.csv`, `records.csv` and `scenario.json` into `dir`.
pub fn write_scenario(g: &GeneratedScenario, dir: &Path) -> Result<(), SynthError> {
    let io = |e: std::io::Error| SynthError::Io { path: dir.display().to_string(), source: e };
    std::fs::create_dir_all(dir).map_err(io)?;
    write_meta_csv(&dir.join(META_FILE), &g.metas)?;
    write_records_csv(&dir.join(RECORDS_FILE), &g.records)?;
    let mut text = serde_json::to_string_pretty(&Manifest { scenario: &g.scenario, ground_truth: &g.truth })?;
    text.push('\n');
    std::fs::write(dir.join(MANIFEST_FILE), text).map_err(io)?;
    Ok(())
}
