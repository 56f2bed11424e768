//! Forecast error metrics: RMSE, MAE, MAPE and R².

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("metrics need at least one sample")]
    Empty,
    #[error("actual has {actual} samples, predicted has {predicted}")]
    LengthMismatch { actual: usize, predicted: usize },
}

/// Error summary over `n` paired samples.
///
/// `mape` is `None` when every actual value is zero; samples with zero actual
/// flow are excluded from it and counted in `mape_skipped`. `r2` is `None`
/// when the actual series has zero variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rmse: f64,
    pub mae: f64,
    pub mape: Option<f64>,
    pub mape_skipped: usize,
    pub r2: Option<f64>,
    pub n: usize,
}

pub fn compute(actual: &[f64], predicted: &[f64]) -> Result<MetricReport, MetricsError> {
    if actual.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch { actual: actual.len(), predicted: predicted.len() });
    }
    if actual.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = actual.len() as f64;
    let mean_actual = actual.iter().sum::<f64>() / n;

    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut pct = 0.0;
    let mut pct_n = 0usize;
    let mut total_var = 0.0;
    for (&a, &p) in actual.iter().zip(predicted) {
        let e = a - p;
        sq += e * e;
        abs += e.abs();
        if a != 0.0 {
            pct += (e / a).abs();
            pct_n += 1;
        }
        total_var += (a - mean_actual) * (a - mean_actual);
    }

    Ok(MetricReport {
        rmse: (sq / n).sqrt(),
        mae: abs / n,
        mape: (pct_n > 0).then(|| pct / pct_n as f64 * 100.0),
        mape_skipped: actual.len() - pct_n,
        r2: (total_var > 0.0).then(|| 1.0 - sq / total_var),
        n: actual.len(),
    })
}

impl MetricReport {
    /// Formats a table cell; undefined values print as `undefined`.
    pub fn fmt_opt(v: Option<f64>) -> String {
        v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.6}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Straight transcription of the four definitions, one pass per metric.
    fn naive(actual: &[f64], predicted: &[f64]) -> (f64, f64, Option<f64>, Option<f64>) {
        let n = actual.len() as f64;
        let mut rmse = 0.0;
        for i in 0..actual.len() {
            rmse += (actual[i] - predicted[i]).powi(2);
        }
        rmse = (rmse / n).sqrt();
        let mut mae = 0.0;
        for i in 0..actual.len() {
            mae += (actual[i] - predicted[i]).abs();
        }
        mae /= n;
        let nz: Vec<usize> = (0..actual.len()).filter(|&i| actual[i] != 0.0).collect();
        let mape = if nz.is_empty() {
            None
        } else {
            let s: f64 = nz.iter().map(|&i| ((actual[i] - predicted[i]) / actual[i]).abs()).sum();
            Some(s / nz.len() as f64 * 100.0)
        };
        let mean = actual.iter().sum::<f64>() / n;
        let ss_res: f64 = (0..actual.len()).map(|i| (actual[i] - predicted[i]).powi(2)).sum();
        let ss_tot: f64 = actual.iter().map(|a| (a - mean).powi(2)).sum();
        let r2 = if ss_tot > 0.0 { Some(1.0 - ss_res / ss_tot) } else { None };
        (rmse, mae, mape, r2)
    }

    #[test]
    fn perfect_prediction() {
        let m = compute(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.rmse, 0.0);
        assert_eq!(m.mae, 0.0);
        assert_eq!(m.mape, Some(0.0));
        assert_eq!(m.r2, Some(1.0));
    }

    #[test]
    fn worked_example() {
        let m = compute(&[100.0, 200.0, 300.0], &[110.0, 190.0, 310.0]).unwrap();
        assert!((m.rmse - 10.0).abs() < 1e-12);
        assert!((m.mae - 10.0).abs() < 1e-12);
        // (0.1 + 0.05 + 1/30) / 3 · 100
        assert!((m.mape.unwrap() - 6.111_111_111_111_111).abs() < 1e-9);
        assert!((m.r2.unwrap() - 0.985).abs() < 1e-12);
    }

    #[test]
    fn mean_predictor_has_zero_r2() {
        let a = [4.0, 8.0, 6.0, 2.0];
        let mean = a.iter().sum::<f64>() / 4.0;
        let m = compute(&a, &[mean; 4]).unwrap();
        assert!(m.r2.unwrap().abs() < 1e-15);
    }

    #[test]
    fn constant_actuals_leave_r2_undefined() {
        let m = compute(&[5.0, 5.0], &[4.0, 6.0]).unwrap();
        assert_eq!(m.r2, None);
    }

    #[test]
    fn zero_actuals_skipped_in_mape() {
        let m = compute(&[0.0, 100.0], &[5.0, 110.0]).unwrap();
        assert_eq!(m.mape_skipped, 1);
        assert!((m.mape.unwrap() - 10.0).abs() < 1e-12);
        let all_zero = compute(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(all_zero.mape, None);
    }

    #[test]
    fn empty_and_mismatch() {
        assert_eq!(compute(&[], &[]), Err(MetricsError::Empty));
        assert!(matches!(compute(&[1.0], &[1.0, 2.0]), Err(MetricsError::LengthMismatch { .. })));
    }

    proptest! {
        #[test]
        fn agrees_with_naive(pairs in prop::collection::vec((1.0f64..5000.0, 0.0f64..5000.0), 1..200)) {
            let (a, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let m = compute(&a, &p).unwrap();
            let (rmse, mae, mape, r2) = naive(&a, &p);
            prop_assert!((m.rmse - rmse).abs() <= 1e-9 * rmse.max(1.0));
            prop_assert!((m.mae - mae).abs() <= 1e-9 * mae.max(1.0));
            prop_assert!((m.mape.unwrap() - mape.unwrap()).abs() <= 1e-9 * mape.unwrap().max(1.0));
            match (m.r2, r2) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0)),
                (x, y) => prop_assert_eq!(x, y),
            }
            prop_assert!(m.rmse + 1e-12 >= m.mae);
        }

        #[test]
        fn scale_covariance(pairs in prop::collection::vec((1.0f64..1000.0, 0.0f64..1000.0), 2..50), k in 0.1f64..50.0) {
            let (a, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let base = compute(&a, &p).unwrap();
            let sa: Vec<f64> = a.iter().map(|x| x * k).collect();
            let sp: Vec<f64> = p.iter().map(|x| x * k).collect();
            let scaled = compute(&sa, &sp).unwrap();
            prop_assert!((scaled.rmse - k * base.rmse).abs() <= 1e-9 * (k * base.rmse).max(1.0));
            prop_assert!((scaled.mae - k * base.mae).abs() <= 1e-9 * (k * base.mae).max(1.0));
            prop_assert!((scaled.mape.unwrap() - base.mape.unwrap()).abs() <= 1e-9 * base.mape.unwrap().max(1.0));
            if let (Some(x), Some(y)) = (scaled.r2, base.r2) {
                prop_assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0));
            }
        }
    }
}
