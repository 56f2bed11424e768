use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{DataError, FeatureTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    ZScore,
    MinMax,
    Passthrough,
}

/// Chronological partition of a table's hourly grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub train: Range<usize>,
    pub val: Range<usize>,
}

/// Per-feature affine normalisation plus per-detector target scaling,
/// fitted on training rows only. Immutable after fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub schemes: Vec<Scheme>,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    /// detector id → (mean, std) of training flow
    pub target: BTreeMap<String, (f64, f64)>,
    pub target_fallback: (f64, f64),
}

fn nonzero(s: f64) -> f64 {
    if s > 0.0 && s.is_finite() {
        s
    } else {
        1.0
    }
}

struct Moments {
    n: f64,
    sum: f64,
    sum_sq: f64,
    min: f64,
    max: f64,
}

impl Moments {
    fn new() -> Self {
        Moments { n: 0.0, sum: 0.0, sum_sq: 0.0, min: f64::INFINITY, max: f64::NEG_INFINITY }
    }

    fn push(&mut self, x: f64) {
        self.n += 1.0;
        self.sum += x;
        self.sum_sq += x * x;
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }

    fn mean_std(&self, values: &[f64]) -> (f64, f64) {
        let mean = self.sum / self.n;
        // two-pass variance for accuracy
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / self.n;
        (mean, var.sqrt())
    }
}

impl Normalizer {
    /// Fits statistics on the active rows of `table` whose hour lies in `rows`.
    pub fn fit(table: &FeatureTable, rows: Range<usize>) -> Result<Self, DataError> {
        let reg = &table.registry;
        let nf = reg.len();
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); nf];
        let mut per_det: Vec<Vec<f64>> = vec![Vec::new(); table.n_detectors()];
        for t in rows.clone() {
            for d in 0..table.n_detectors() {
                if !table.is_active(t, d) {
                    continue;
                }
                for (k, &v) in table.temporal_row(t, d).iter().enumerate() {
                    columns[k].push(v);
                }
                for (k, &v) in table.spatial_row(t, d).iter().enumerate() {
                    columns[reg.n_temporal + k].push(v);
                }
                per_det[d].push(table.flow_at(t, d));
            }
        }
        if columns.first().is_none_or(|c| c.is_empty()) {
            return Err(DataError::EmptySplit(format!("no active training rows in hours {rows:?}")));
        }

        let mut center = Vec::with_capacity(nf);
        let mut scale = Vec::with_capacity(nf);
        for (k, col) in columns.iter().enumerate() {
            let mut m = Moments::new();
            col.iter().for_each(|&x| m.push(x));
            let (c, s) = match reg.schemes[k] {
                Scheme::ZScore => {
                    let (mean, std) = m.mean_std(col);
                    (mean, nonzero(std))
                }
                Scheme::MinMax => (m.min, nonzero(m.max - m.min)),
                Scheme::Passthrough => (0.0, 1.0),
            };
            center.push(c);
            scale.push(s);
        }

        let all_flows: Vec<f64> = per_det.iter().flatten().copied().collect();
        let mut m = Moments::new();
        all_flows.iter().for_each(|&x| m.push(x));
        let (gm, gs) = m.mean_std(&all_flows);
        let target_fallback = (gm, nonzero(gs));
        let mut target = BTreeMap::new();
        for (d, flows) in per_det.iter().enumerate() {
            let stats = if flows.len() >= 2 {
                let mut m = Moments::new();
                flows.iter().for_each(|&x| m.push(x));
                let (mean, std) = m.mean_std(flows);
                (mean, nonzero(std))
            } else {
                target_fallback
            };
            target.insert(table.detectors[d].detector_id.clone(), stats);
        }

        Ok(Normalizer { schemes: reg.schemes.clone(), center, scale, target, target_fallback })
    }

    pub fn transform(&self, feature: usize, x: f64) -> f64 {
        (x - self.center[feature]) / self.scale[feature]
    }

    pub fn inverse(&self, feature: usize, z: f64) -> f64 {
        z * self.scale[feature] + self.center[feature]
    }

    fn target_stats(&self, detector: &str) -> (f64, f64) {
        self.target.get(detector).copied().unwrap_or(self.target_fallback)
    }

    pub fn transform_target(&self, detector: &str, flow: f64) -> f64 {
        let (m, s) = self.target_stats(detector);
        (flow - m) / s
    }

    pub fn inverse_target(&self, detector: &str, z: f64) -> f64 {
        let (m, s) = self.target_stats(detector);
        z * s + m
    }
}

/// Chronological split of the hourly grid (earliest `train_frac` to training)
/// with a normaliser fitted on the training hours.
pub fn split_and_fit(table: &FeatureTable, train_frac: f64) -> Result<(SplitPlan, Normalizer), DataError> {
    if !(0.0..=1.0).contains(&train_frac) {
        return Err(DataError::EmptySplit(format!("train fraction {train_frac} outside [0, 1]")));
    }
    let cut = ((table.hours as f64) * train_frac).round() as usize;
    if cut == 0 || cut >= table.hours {
        return Err(DataError::EmptySplit(format!("{} hours split at {cut}", table.hours)));
    }
    let plan = SplitPlan { train: 0..cut, val: cut..table.hours };
    let norm = Normalizer::fit(table, plan.train.clone())?;
    Ok((plan, norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{engineer_features, DetectorMeta, Highway, HourlyRecord};
    use chrono::{Duration, TimeZone, Utc};
    use proptest::prelude::*;

    fn table(hours: i64, flow: impl Fn(i64) -> f64) -> FeatureTable {
        let meta = DetectorMeta {
            detector_id: "A".into(),
            highway: Highway::I95,
            milepost: 1.0,
            lanes: 2,
            lat: 0.0,
            lon: 0.0,
        };
        let recs: Vec<_> = (0..hours)
            .map(|t| HourlyRecord {
                detector_id: "A".into(),
                timestamp: Utc.with_ymd_and_hms(2024, 9, 1, 0, 0, 0).unwrap() + Duration::hours(t),
                flow: Some(flow(t)),
                speed: Some(55.0),
                incident: [0.0; 8],
                evacuation: [0.0; 7],
            })
            .collect();
        engineer_features(&recs, &[meta]).unwrap()
    }

    #[test]
    fn ninety_ten_split() {
        let t = table(100, |t| 100.0 + (t % 7) as f64);
        let (plan, _) = split_and_fit(&t, 0.9).unwrap();
        assert_eq!(plan.train, 0..90);
        assert_eq!(plan.val, 90..100);
        assert!(plan.train.end <= plan.val.start);
    }

    #[test]
    fn validation_outlier_does_not_move_stats() {
        let a = table(100, |t| 100.0 + (t % 7) as f64);
        let b = table(100, |t| if t == 95 { 1e6 } else { 100.0 + (t % 7) as f64 });
        let (_, na) = split_and_fit(&a, 0.9).unwrap();
        let (_, nb) = split_and_fit(&b, 0.9).unwrap();
        assert_eq!(na, nb);
    }

    #[test]
    fn zscored_training_flow() {
        let t = table(100, |t| 100.0 + ((t * 37) % 23) as f64);
        let (plan, n) = split_and_fit(&t, 0.9).unwrap();
        let z: Vec<f64> = plan
            .train
            .clone()
            .filter(|&h| t.is_active(h, 0))
            .map(|h| n.transform(0, t.temporal_row(h, 0)[0]))
            .collect();
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        let std = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / z.len() as f64).sqrt();
        assert!(mean.abs() < 1e-9);
        assert!((std - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_split_rejected() {
        let t = table(30, |_| 1.0);
        assert!(matches!(split_and_fit(&t, 0.0), Err(DataError::EmptySplit(_))));
        assert!(matches!(split_and_fit(&t, 1.0), Err(DataError::EmptySplit(_))));
    }

    proptest! {
        #[test]
        fn round_trip(x in -1e6f64..1e6, k in 0usize..32) {
            let t = table(72, |t| 100.0 + ((t * 13) % 17) as f64);
            let (_, n) = split_and_fit(&t, 0.9).unwrap();
            let back = n.inverse(k, n.transform(k, x));
            prop_assert!((back - x).abs() <= 1e-9 * x.abs().max(1.0));
            let tb = n.inverse_target("A", n.transform_target("A", x));
            prop_assert!((tb - x).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }
}
