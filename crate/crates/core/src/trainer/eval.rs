use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::TrainError;
use crate::data::{Normalizer, WindowSample};
use crate::dmf::DmfModel;
use crate::metrics::{compute, MetricReport};
use crate::numcore::Tensor;
use crate::rlagent::MaskState;

/// Per-horizon and pooled metrics on denormalised flows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub horizons: Vec<MetricReport>,
    pub overall: MetricReport,
    pub n_windows: usize,
}

/// Unmasked normalised predictions, one `[predicted nodes, p]` block per
/// window. Batches run in parallel; results keep window order.
pub fn predict_windows(model: &DmfModel, windows: &[WindowSample], batch_size: usize) -> Result<Vec<Tensor>, TrainError> {
    let cfg = model.config();
    let mask = MaskState::none(cfg.n_temporal, cfg.n_spatial);
    let chunks: Vec<&[WindowSample]> = windows.chunks(batch_size.max(1)).collect();
    let blocks: Vec<Vec<Tensor>> = chunks
        .par_iter()
        .map(|chunk| -> Result<Vec<Tensor>, TrainError> {
            let refs: Vec<&WindowSample> = chunk.iter().collect();
            let (y, _) = model.predict(&refs, &mask)?;
            let mut out = Vec::with_capacity(chunk.len());
            let mut row = 0;
            for w in chunk.iter() {
                let idx: Vec<usize> = (row..row + w.predict.len()).collect();
                out.push(y.select_rows(&idx));
                row += w.predict.len();
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;
    Ok(blocks.into_iter().flatten().collect())
}

/// Scores `predictions` (normalised, per window) against raw targets.
pub fn score(norm: &Normalizer, windows: &[WindowSample], predictions: &[Tensor]) -> Result<EvalReport, TrainError> {
    let p = windows.first().ok_or_else(|| TrainError::NoWindows("nothing to evaluate".into()))?.horizon();
    let mut actual: Vec<Vec<f64>> = vec![Vec::new(); p];
    let mut pred: Vec<Vec<f64>> = vec![Vec::new(); p];
    for (w, y) in windows.iter().zip(predictions) {
        for (k, id) in w.predicted_ids().into_iter().enumerate() {
            for h in 0..p {
                actual[h].push(w.target_raw.get(k, h));
                pred[h].push(norm.inverse_target(id, y.get(k, h)));
            }
        }
    }
    let horizons = (0..p).map(|h| compute(&actual[h], &pred[h])).collect::<Result<Vec<_>, _>>()?;
    let all_a: Vec<f64> = actual.concat();
    let all_p: Vec<f64> = pred.concat();
    Ok(EvalReport { horizons, overall: compute(&all_a, &all_p)?, n_windows: windows.len() })
}

pub fn evaluate_windows(
    model: &DmfModel,
    norm: &Normalizer,
    windows: &[WindowSample],
    batch_size: usize,
) -> Result<EvalReport, TrainError> {
    let preds = predict_windows(model, windows, batch_size)?;
    score(norm, windows, &preds)
}

fn fmt_f(v: f64) -> String {
    format!("{v:.6}")
}

/// `(horizon label, cells)` rows: `1..p` then `overall`.
pub fn metric_rows(report: &EvalReport) -> Vec<(String, [String; 4])> {
    let cells = |m: &MetricReport| {
        [fmt_f(m.rmse), fmt_f(m.mae), MetricReport::fmt_opt(m.mape), MetricReport::fmt_opt(m.r2)]
    };
    let mut rows: Vec<(String, [String; 4])> =
        report.horizons.iter().enumerate().map(|(h, m)| ((h + 1).to_string(), cells(m))).collect();
    rows.push(("overall".into(), cells(&report.overall)));
    rows
}

pub const METRIC_HEADER: [&str; 5] = ["horizon", "RMSE", "MAE", "MAPE", "R2"];

pub fn write_metrics_csv(path: &Path, report: &EvalReport) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| TrainError::io(path, e))?;
    w.write_record(METRIC_HEADER).map_err(|e| TrainError::io(path, e))?;
    for (h, cells) in metric_rows(report) {
        let mut rec = vec![h];
        rec.extend(cells);
        w.write_record(&rec).map_err(|e| TrainError::io(path, e))?;
    }
    w.flush().map_err(|e| TrainError::io(path, e))
}

/// Aligned text rendering of the metrics table.
pub fn format_metrics_table(report: &EvalReport) -> String {
    let mut out = format!("{:<8} {:>12} {:>12} {:>10} {:>10}\n", "horizon", "RMSE", "MAE", "MAPE(%)", "R2");
    let cell = |v: Option<f64>, d: usize| v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.d$}"));
    let mut line = |label: &str, m: &MetricReport| {
        let _ = writeln!(
            out,
            "{:<8} {:>12.2} {:>12.2} {:>10} {:>10}",
            label,
            m.rmse,
            m.mae,
            cell(m.mape, 2),
            cell(m.r2, 2)
        );
    };
    for (h, m) in report.horizons.iter().enumerate() {
        line(&(h + 1).to_string(), m);
    }
    line("overall", &report.overall);
    out
}
