use proptest::prelude::*;

use super::*;
use crate::data::{engineer_features, load_csv, DetectorMeta, META_FILE, RECORDS_FILE};

fn quiet() -> Scenario {
    let mut s = Scenario { hours: 96, ..Scenario::default() };
    s.surge.peak_multiplier = 1.0;
    s.surge.post_landfall_multiplier = 1.0;
    s.surge.order_hour = 60;
    s.surge.landfall_hour = 80;
    s
}

fn record<'a>(g: &'a GeneratedScenario, id: &str, t: usize) -> &'a crate::data::HourlyRecord {
    let k = g.records.iter().position(|r| r.detector_id == id).unwrap();
    &g.records[k + t]
}

#[test]
fn quiet_scenario_reproduces_diurnal_base() {
    let s = quiet();
    let g = generate(&s).unwrap();
    for (d, m) in g.metas.iter().enumerate() {
        for t in 0..s.hours {
            let r = &g.records[d * s.hours + t];
            assert_eq!(r.detector_id, m.detector_id);
            assert_eq!(r.flow, Some(s.diurnal_base(t, m.lanes, 1.0)));
        }
    }
    // 600 veh/h/lane × 3 lanes at the 08:00 peak, Tuesday
    assert_eq!(record(&g, "I4-001", 8).flow, Some(1800.0));
    assert_eq!(record(&g, "I4-001", 3).flow, Some(600.0 * 3.0 * 0.18));
}

#[test]
fn incident_lowers_speed() {
    let mut s = quiet();
    s.diurnal = vec![1.0; 24];
    s.incidents.forced.push(ForcedIncident {
        detector_id: "I4-002".into(),
        start_hour: 30,
        hours: 2,
        capacity_drop: 0.5,
        lanes_closed: 1,
    });
    let g = generate(&s).unwrap();
    let v = |t| record(&g, "I4-002", t).speed.unwrap();
    assert!(v(30) < v(29));
    // 1800 / 6000 load, then doubled by the halved capacity
    assert!((v(29) - (70.0 - 60.0 * 0.3)).abs() < 1e-12);
    assert!((v(30) - (70.0 - 60.0 * 0.6)).abs() < 1e-12);
    assert_eq!(v(32), v(29));
    let inc = record(&g, "I4-002", 31).incident;
    assert_eq!(inc, [1.0, 1.0, 1.0, 1.0, 120.0, 120.0, 60.0, 60.0]);
    assert_eq!(record(&g, "I4-001", 31).incident, [0.0; 8]);
}

#[test]
fn speed_falls_with_load() {
    let s = Scenario::default();
    let mut prev = f64::INFINITY;
    for k in 0..=12 {
        let v = s.speed_at_load(k as f64 / 10.0);
        assert!(v <= prev);
        assert!((s.v_min_mph..=s.free_flow_mph).contains(&v));
        prev = v;
    }
    assert_eq!(s.speed_at_load(0.0), 70.0);
    assert_eq!(s.speed_at_load(1.0), 10.0);
}

fn written(s: &Scenario) -> (tempfile::TempDir, Vec<Vec<u8>>) {
    let dir = tempfile::tempdir().unwrap();
    write_scenario(&generate(s).unwrap(), dir.path()).unwrap();
    let bytes = [META_FILE, RECORDS_FILE, MANIFEST_FILE]
        .iter()
        .map(|f| std::fs::read(dir.path().join(f)).unwrap())
        .collect();
    (dir, bytes)
}

#[test]
fn same_seed_same_bytes() {
    let s = builtin("S2").unwrap();
    let (_a, x) = written(&s);
    let (_b, y) = written(&s);
    assert_eq!(x, y);
    let mut other = s.clone();
    other.seed += 1;
    let (_c, z) = written(&other);
    assert_ne!(x[1], z[1]);
}

#[test]
fn builtins_ingest_cleanly() {
    for s in builtin_scenarios() {
        let (dir, _) = written(&s);
        let (metas, records) = load_csv(&dir.path().join(META_FILE), &dir.path().join(RECORDS_FILE)).unwrap();
        assert_eq!(metas.len(), s.n_detectors());
        assert_eq!(records.len(), s.n_detectors() * s.hours);
        let table = engineer_features(&records, &metas).unwrap();
        assert_eq!(table.hours, s.hours);
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap()).unwrap();
        assert_eq!(manifest["scenario"]["name"], s.name.as_str());
        assert_eq!(manifest["ground_truth"]["rows"], records.len());
        let back: Scenario = serde_json::from_value(manifest["scenario"].clone()).unwrap();
        assert_eq!(back, s);
    }
}

#[test]
fn s1_shape_and_surge() {
    let g = generate(&builtin("S1").unwrap()).unwrap();
    assert_eq!(g.metas.len(), 6);
    assert_eq!(g.records.len(), 6 * 240);
    assert_eq!(g.truth.rows, 1440);
    assert!(g.truth.stats.surge_ratio > 1.5, "{:?}", g.truth.stats);
}

#[test]
fn s2_outages_cross_window_boundaries() {
    let s = builtin("S2").unwrap();
    let g = generate(&s).unwrap();
    assert!(g.truth.stats.missing_cells > 0);
    let (l, p) = (6, 6);
    // an outage that begins inside some window's input span and outlasts it
    let crossing = g.truth.outages.iter().filter(|o| o.start_hour >= l && o.start_hour + o.hours < s.hours).count();
    assert!(crossing >= 1);

    let table = engineer_features(&g.records, &g.metas).unwrap();
    let ws = crate::testutil::windows(&table, l, p);
    let partial = ws.iter().filter(|w| w.predict.len() < w.features.nodes.len()).count();
    assert!(partial > 0);
    let differing = ws.iter().filter(|w| w.snapshots.iter().any(|s| s.len() != w.snapshots[0].len())).count();
    assert!(differing > 0);
}

#[test]
fn s3_travel_time_order_differs() {
    let g = generate(&builtin("S3").unwrap()).unwrap();
    assert!(g.truth.stats.argsort_disagreement >= 0.3, "{:?}", g.truth.stats);
}

#[test]
fn argsort_disagreement_hand_case() {
    let meta = |id: &str, mp: f64| DetectorMeta {
        detector_id: id.into(),
        highway: crate::data::Highway::I4,
        milepost: mp,
        lanes: 2,
        lat: 0.0,
        lon: 0.0,
    };
    // gaps of 1 and 2 miles
    let metas = vec![meta("a", 0.0), meta("b", 1.0), meta("c", 3.0)];
    // hour 0: uniform speed keeps the order; hour 1: slow first link flips it
    let speeds = |d: usize, t: usize| Some(if t == 1 && d < 2 { 10.0 } else { 60.0 });
    assert_eq!(argsort_disagreement(&metas, &speeds, 0..1), 0.0);
    assert_eq!(argsort_disagreement(&metas, &speeds, 1..2), 1.0);
    assert_eq!(argsort_disagreement(&metas, &speeds, 0..2), 0.5);
}

#[test]
fn evacuation_timeline() {
    let s = builtin("S1").unwrap();
    let g = generate(&s).unwrap();
    let r = |t| record(&g, "I4-001", t).evacuation;
    assert_eq!(r(0)[0], 0.0);
    assert_eq!(r(95)[4], 0.0);
    assert_eq!(r(100)[4], 4.0);
    assert_eq!(r(96 + 48)[0], s.evacuation.population);
    assert_eq!(r(100)[3], 92.0);
    assert_eq!(r(200)[3], 0.0);
    assert_eq!((r(95)[5], r(96)[5], r(191)[5], r(192)[5]), (0.0, 1.0, 1.0, 0.0));
    assert_eq!((r(191)[6], r(192)[6], r(215)[6], r(216)[6]), (0.0, 1.0, 1.0, 0.0));
    assert!(r(0)[2] > r(0)[1]);
}

#[test]
fn invalid_scenarios_rejected() {
    let bad = |f: &dyn Fn(&mut Scenario)| {
        let mut s = Scenario::default();
        f(&mut s);
        matches!(generate(&s), Err(SynthError::Invalid(_)))
    };
    assert!(bad(&|s| s.hours = 59));
    assert!(bad(&|s| s.surge.peak_multiplier = 0.0));
    assert!(bad(&|s| s.diurnal[3] = -1.0));
    assert!(bad(&|s| s.diurnal.pop().map(drop).unwrap_or(())));
    assert!(bad(&|s| s.surge.landfall_hour = s.surge.order_hour));
    assert!(bad(&|s| s.free_flow_mph = 5.0));
    assert!(bad(&|s| s.outages.forced.push(ForcedOutage { detector_id: "X".into(), start_hour: 0, hours: 1 })));
    assert!(!bad(&|s| s.hours = 60));
    assert!(Scenario { hours: 60, ..Scenario::default() }.validate_for(24).is_err());
}

#[test]
fn resolve_names_and_files() {
    assert_eq!(Scenario::resolve("s3").unwrap().name, "S3");
    let err = Scenario::resolve("S9").unwrap_err().to_string();
    assert!(err.contains("S1, S2, S3"), "{err}");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("custom.json");
    std::fs::write(&path, r#"{"name": "tiny", "seed": 9, "hours": 72}"#).unwrap();
    let s = Scenario::resolve(path.to_str().unwrap()).unwrap();
    assert_eq!((s.name.as_str(), s.seed, s.hours), ("tiny", 9, 72));
    std::fs::write(&path, r#"{"hours": 72, "colour": 1}"#).unwrap();
    assert!(matches!(Scenario::resolve(path.to_str().unwrap()), Err(SynthError::Json(_))));
}

#[test]
fn builtins_are_frozen() {
    let names: Vec<_> = builtin_scenarios().iter().map(|s| (s.name.clone(), s.version, s.seed)).collect();
    assert_eq!(
        names,
        vec![("S1".to_string(), 1, 101), ("S2".to_string(), 1, 202), ("S3".to_string(), 1, 303)]
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn physical_ranges(seed in 0u64..1000, noise in 0.0f64..0.5, rate in 0.0f64..0.2) {
        let mut s = builtin("S3").unwrap();
        s.seed = seed;
        s.hours = 72;
        s.surge.order_hour = 30;
        s.surge.landfall_hour = 60;
        s.flow_noise = noise;
        s.speed_noise_mph = 20.0 * noise;
        s.incidents.rate_per_hour = rate;
        s.outages.rate_per_hour = rate;
        s.checks = SelfChecks::default();
        let g = generate(&s).unwrap();
        for r in &g.records {
            if let Some(f) = r.flow {
                prop_assert!(f >= 0.0 && f.is_finite());
            }
            if let Some(v) = r.speed {
                prop_assert!(v >= s.v_min_mph && v <= s.free_flow_mph);
            }
            prop_assert_eq!(r.flow.is_some(), r.speed.is_some());
        }
    }
}
