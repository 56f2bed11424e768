use super::{
    ForcedOutage, HighwaySpec, IncidentSpec, OutageSpec, Scenario, SelfChecks, SurgeSpec, WaveSpec,
};
use crate::data::Highway;

fn highway(highway: Highway, detectors: usize, spacing_mi: f64, jitter: f64, origin: [f64; 2], bearing: f64) -> HighwaySpec {
    HighwaySpec {
        highway,
        detectors,
        spacing_mi,
        spacing_jitter: jitter,
        lanes: 3,
        start_milepost: 10.0,
        origin,
        bearing_deg: bearing,
    }
}

/// Small smoke scenario: 6 detectors over 10 days with one evacuation.
fn s1() -> Scenario {
    Scenario {
        name: "S1".into(),
        version: 1,
        seed: 101,
        hours: 240,
        highways: vec![
            highway(Highway::I4, 3, 3.0, 0.0, [28.05, -82.35], 60.0),
            highway(Highway::I95, 3, 4.0, 0.0, [28.6, -80.85], 340.0),
        ],
        detector_scale_jitter: 0.15,
        surge: SurgeSpec {
            order_hour: 96,
            landfall_hour: 192,
            peak_multiplier: 2.6,
            ramp_hours: 12.0,
            spatial_decay_mi: 400.0,
            landfall_point: [27.5, -82.6],
            post_landfall_multiplier: 0.4,
            post_landfall_hours: 24,
        },
        incidents: IncidentSpec {
            rate_per_hour: 0.004,
            duration_hours: [1, 3],
            capacity_drop: 0.35,
            max_lanes_closed: 2,
            forced: Vec::new(),
        },
        flow_noise: 0.03,
        speed_noise_mph: 1.0,
        checks: SelfChecks { min_surge_ratio: Some(1.5), min_argsort_disagreement: None },
        ..Scenario::default()
    }
}

/// Frequent multi-hour detector outages, including forced ones that cut
/// across model windows.
fn s2() -> Scenario {
    Scenario {
        name: "S2".into(),
        version: 1,
        seed: 202,
        hours: 240,
        highways: vec![
            highway(Highway::I4, 4, 3.0, 0.2, [28.05, -82.35], 60.0),
            highway(Highway::I75, 4, 5.0, 0.2, [27.2, -82.45], 10.0),
            highway(Highway::I95, 4, 4.0, 0.2, [28.6, -80.85], 340.0),
        ],
        detector_scale_jitter: 0.15,
        incidents: IncidentSpec {
            rate_per_hour: 0.004,
            duration_hours: [1, 3],
            capacity_drop: 0.35,
            max_lanes_closed: 2,
            forced: Vec::new(),
        },
        outages: OutageSpec {
            rate_per_hour: 0.01,
            duration_hours: [3, 10],
            forced: vec![
                ForcedOutage { detector_id: "I4-002".into(), start_hour: 70, hours: 8 },
                ForcedOutage { detector_id: "I75-003".into(), start_hour: 140, hours: 5 },
                ForcedOutage { detector_id: "I95-004".into(), start_hour: 215, hours: 6 },
            ],
        },
        flow_noise: 0.03,
        speed_noise_mph: 1.0,
        ..Scenario::default()
    }
}

/// Congestion waves sweep along unevenly spaced detectors during the
/// evacuation, so travel times rank neighbours differently from distances.
fn s3() -> Scenario {
    Scenario {
        name: "S3".into(),
        version: 1,
        seed: 303,
        hours: 240,
        highways: vec![
            highway(Highway::I4, 5, 2.5, 0.6, [28.05, -82.35], 60.0),
            highway(Highway::I75, 5, 3.0, 0.6, [27.2, -82.45], 10.0),
        ],
        base_flow_per_lane: 650.0,
        capacity_per_lane: 1800.0,
        detector_scale_jitter: 0.1,
        waves: Some(WaveSpec { amplitude: 0.55, period_hours: 9.0, celerity_mph: 4.0, surge_only: false }),
        flow_noise: 0.02,
        speed_noise_mph: 0.5,
        checks: SelfChecks { min_surge_ratio: None, min_argsort_disagreement: Some(0.3) },
        ..Scenario::default()
    }
}

pub fn builtin_scenarios() -> Vec<Scenario> {
    vec![s1(), s2(), s3()]
}

pub fn builtin_names() -> Vec<String> {
    builtin_scenarios().into_iter().map(|s| s.name).collect()
}

/// Looks up a builtin by name, ignoring case.
pub fn builtin(name: &str) -> Option<Scenario> {
    builtin_scenarios().into_iter().find(|s| s.name.eq_ignore_ascii_case(name))
}
