//! Small random feature tables for unit tests.

use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{make_windows, DetectorMeta, FeatureRegistry, FeatureTable, Highway, Normalizer, WindowSample};
use crate::graph::{build_all_snapshots, GraphOptions};

pub fn random_table(hours: usize, nd: usize, ft: usize, fs: usize, seed: u64) -> FeatureTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tn: Vec<String> = (0..ft).map(|k| format!("t{k}")).collect();
    let sn: Vec<String> = (0..fs).map(|k| format!("s{k}")).collect();
    let tr: Vec<&str> = tn.iter().map(String::as_str).collect();
    let sr: Vec<&str> = sn.iter().map(String::as_str).collect();
    let detectors = (0..nd)
        .map(|k| DetectorMeta {
            detector_id: format!("d{k}"),
            highway: if k < nd.div_ceil(2) { Highway::I4 } else { Highway::I95 },
            milepost: k as f64 * 1.5 + rng.gen_range(0.0..1.0),
            lanes: 2 + (k % 2) as u32,
            lat: 0.0,
            lon: 0.0,
        })
        .collect();
    let cells = hours * nd;
    FeatureTable {
        registry: FeatureRegistry::custom(&tr, &sr),
        detectors,
        start: Utc.with_ymd_and_hms(2024, 10, 1, 0, 0, 0).unwrap(),
        hours,
        temporal: (0..cells * ft).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        spatial: (0..cells * fs).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        active: vec![true; cells],
        flow: (0..cells).map(|_| rng.gen_range(200.0..1500.0)).collect(),
        speed: (0..cells).map(|_| rng.gen_range(10.0..70.0)).collect(),
    }
}

pub fn windows(table: &FeatureTable, l: usize, p: usize) -> Vec<WindowSample> {
    let norm = Normalizer::fit(table, 0..table.hours).unwrap();
    let snaps = build_all_snapshots(table, &GraphOptions::default());
    make_windows(table, &norm, &snaps, 0..table.hours, l, p).unwrap()
}
