use std::ops::Range;
use std::sync::Arc;

use chrono::{DateTime, Utc};

use super::{DataError, FeatureTable, Normalizer};
use crate::graph::GraphSnapshot;
use crate::numcore::Tensor;

/// Normalised model inputs for one window.
///
/// `nodes` is the union of detectors active at any input step. Temporal
/// values for a (node, step) where the node was inactive are zero and
/// `present` is false there.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub nodes: Vec<usize>,
    pub detector_ids: Vec<String>,
    pub steps: usize,
    /// `[nodes, steps, F_t]`
    pub temporal: Tensor,
    /// `[nodes, F_s]`
    pub spatial: Tensor,
    /// `nodes × steps`, row-major
    pub present: Vec<bool>,
}

impl FeatureTensor {
    pub fn n_temporal(&self) -> usize {
        self.temporal.shape()[2]
    }

    pub fn n_spatial(&self) -> usize {
        self.spatial.shape()[1]
    }

    pub fn temporal_row(&self, node: usize, step: usize) -> &[f64] {
        let f = self.n_temporal();
        let k = (node * self.steps + step) * f;
        &self.temporal.data()[k..k + f]
    }

    pub fn is_present(&self, node: usize, step: usize) -> bool {
        self.present[node * self.steps + step]
    }
}

/// One training/evaluation example: `l` input hours and `p` target hours.
#[derive(Debug, Clone)]
pub struct WindowSample {
    /// hour index of the first input step
    pub anchor: usize,
    pub anchor_time: DateTime<Utc>,
    pub features: FeatureTensor,
    /// graph per input step
    pub snapshots: Vec<Arc<GraphSnapshot>>,
    /// per step, the `features.nodes` row of each snapshot node
    pub step_rows: Vec<Vec<usize>>,
    /// `features.nodes` rows that are predicted (active at all l+p hours)
    pub predict: Vec<usize>,
    /// `[predict, p]`, normalised per detector
    pub target: Tensor,
    /// `[predict, p]`, veh/h
    pub target_raw: Tensor,
}

impl WindowSample {
    pub fn horizon(&self) -> usize {
        self.target.cols()
    }

    pub fn predicted_ids(&self) -> Vec<&str> {
        self.predict.iter().map(|&r| self.features.detector_ids[r].as_str()).collect()
    }
}

/// Slides an `l + p` window over `range`, one sample per anchor with at
/// least one detector active across the whole span.
pub fn make_windows(
    table: &FeatureTable,
    norm: &Normalizer,
    snapshots: &[Arc<GraphSnapshot>],
    range: Range<usize>,
    l: usize,
    p: usize,
) -> Result<Vec<WindowSample>, DataError> {
    if l == 0 || p == 0 {
        return Err(DataError::WindowLength { l, p });
    }
    let span = l + p;
    if range.len() < span {
        return Err(DataError::ShortSpan { available: range.len(), needed: span });
    }
    let reg = &table.registry;
    let (ft, fs) = (reg.n_temporal, reg.n_spatial);
    let nd = table.n_detectors();
    let mut out = Vec::new();

    for anchor in range.start..=range.end - span {
        let inputs = anchor..anchor + l;
        let nodes: Vec<usize> = (0..nd).filter(|&d| inputs.clone().any(|t| table.is_active(t, d))).collect();
        let predict: Vec<usize> = nodes
            .iter()
            .enumerate()
            .filter(|&(_, &d)| (anchor..anchor + span).all(|t| table.is_active(t, d)))
            .map(|(r, _)| r)
            .collect();
        if predict.is_empty() {
            continue;
        }

        let n = nodes.len();
        let mut temporal = vec![0.0; n * l * ft];
        let mut present = vec![false; n * l];
        let mut spatial = vec![0.0; n * fs];
        for (r, &d) in nodes.iter().enumerate() {
            for (s, t) in inputs.clone().enumerate() {
                if !table.is_active(t, d) {
                    continue;
                }
                present[r * l + s] = true;
                let dst = &mut temporal[(r * l + s) * ft..(r * l + s + 1) * ft];
                for (k, (o, &x)) in dst.iter_mut().zip(table.temporal_row(t, d)).enumerate() {
                    *o = norm.transform(k, x);
                }
                // spatial values from the latest step the node is present
                for (k, (o, &x)) in spatial[r * fs..(r + 1) * fs].iter_mut().zip(table.spatial_row(t, d)).enumerate() {
                    *o = norm.transform(ft + k, x);
                }
            }
        }

        let step_rows: Vec<Vec<usize>> = inputs
            .clone()
            .map(|t| {
                snapshots[t]
                    .nodes
                    .iter()
                    .map(|d| nodes.binary_search(d).expect("snapshot node outside window union"))
                    .collect()
            })
            .collect();

        let mut target = Vec::with_capacity(predict.len() * p);
        let mut target_raw = Vec::with_capacity(predict.len() * p);
        for &r in &predict {
            let d = nodes[r];
            let id = &table.detectors[d].detector_id;
            for t in anchor + l..anchor + span {
                let f = table.flow_at(t, d);
                target_raw.push(f);
                target.push(norm.transform_target(id, f));
            }
        }

        let np = predict.len();
        out.push(WindowSample {
            anchor,
            anchor_time: table.timestamp(anchor),
            features: FeatureTensor {
                detector_ids: nodes.iter().map(|&d| table.detectors[d].detector_id.clone()).collect(),
                nodes,
                steps: l,
                temporal: Tensor::new(vec![n, l, ft], temporal).expect("temporal block shape"),
                spatial: Tensor::new(vec![n, fs], spatial).expect("spatial block shape"),
                present,
            },
            snapshots: inputs.map(|t| snapshots[t].clone()).collect(),
            step_rows,
            predict,
            target: Tensor::new(vec![np, p], target).expect("target shape"),
            target_raw: Tensor::new(vec![np, p], target_raw).expect("target shape"),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DetectorMeta, FeatureRegistry, Highway};
    use crate::graph::{build_all_snapshots, GraphOptions};
    use chrono::TimeZone;

    /// Fully active grid with synthetic values, bypassing feature engineering.
    fn grid(hours: usize, nd: usize) -> FeatureTable {
        let registry = FeatureRegistry::custom(&["flow", "speed"], &["lanes"]);
        let detectors = (0..nd)
            .map(|k| DetectorMeta {
                detector_id: format!("d{k}"),
                highway: Highway::I4,
                milepost: k as f64 * 2.0,
                lanes: 2,
                lat: 0.0,
                lon: 0.0,
            })
            .collect();
        let cells = hours * nd;
        FeatureTable {
            registry,
            detectors,
            start: Utc.with_ymd_and_hms(2024, 10, 1, 0, 0, 0).unwrap(),
            hours,
            temporal: (0..cells * 2).map(|k| k as f64).collect(),
            spatial: vec![2.0; cells],
            active: vec![true; cells],
            flow: (0..cells).map(|k| 100.0 + k as f64).collect(),
            speed: vec![60.0; cells],
        }
    }

    fn windows(table: &FeatureTable, l: usize, p: usize) -> Result<Vec<WindowSample>, DataError> {
        let norm = Normalizer::fit(table, 0..table.hours).unwrap();
        let snaps = build_all_snapshots(table, &GraphOptions::default());
        make_windows(table, &norm, &snaps, 0..table.hours, l, p)
    }

    #[test]
    fn window_count_formula() {
        let t = grid(240, 1);
        assert_eq!(windows(&t, 6, 6).unwrap().len(), 229);
        let t = grid(2, 1);
        assert_eq!(windows(&t, 1, 1).unwrap().len(), 1);
    }

    #[test]
    fn short_span_and_zero_lengths() {
        let t = grid(10, 1);
        assert!(matches!(windows(&t, 6, 6), Err(DataError::ShortSpan { .. })));
        assert!(matches!(windows(&t, 0, 6), Err(DataError::WindowLength { .. })));
    }

    #[test]
    fn dark_detector_excluded_from_predictions() {
        let mut t = grid(30, 3);
        // detector 1 offline at hour 8
        t.active[8 * 3 + 1] = false;
        let ws = windows(&t, 6, 6).unwrap();
        let w0 = &ws[0];
        assert_eq!(w0.predict, vec![0, 2]);
        // still present in the input union and at the steps where it reported
        assert_eq!(w0.features.nodes, vec![0, 1, 2]);
        // dark at a target hour only: still excluded
        let w3 = ws.iter().find(|w| w.anchor == 3).unwrap();
        assert_eq!(w3.predicted_ids(), vec!["d0", "d2"]);
        // after the outage leaves the span it is predicted again
        let w9 = ws.iter().find(|w| w.anchor == 9).unwrap();
        assert_eq!(w9.predict, vec![0, 1, 2]);
        // snapshot at the dark hour skips it and links 0–2 directly
        let w5 = ws.iter().find(|w| w.anchor == 5).unwrap();
        assert_eq!(w5.snapshots[3].nodes, vec![0, 2]);
        assert_eq!(w5.step_rows[3], vec![0, 2]);
        assert!(!w5.features.is_present(1, 3));
    }

    #[test]
    fn targets_denormalise_to_raw() {
        let t = grid(20, 2);
        let norm = Normalizer::fit(&t, 0..20).unwrap();
        let ws = windows(&t, 3, 2).unwrap();
        let w = &ws[4];
        for (i, id) in w.predicted_ids().iter().enumerate() {
            for h in 0..2 {
                let back = norm.inverse_target(id, w.target.get(i, h));
                assert!((back - w.target_raw.get(i, h)).abs() < 1e-9);
            }
        }
        // target hour for detector 1, horizon 0 is anchor + l
        assert_eq!(w.target_raw.get(1, 0), t.flow_at(w.anchor + 3, 1));
    }
}
