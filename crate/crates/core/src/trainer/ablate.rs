use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::{metric_rows, train, write_train_artifacts, Dataset, EvalReport, TrainConfig, TrainError, Variant, METRIC_HEADER};

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub variant: Variant,
    /// validation metrics, or the failure message
    pub result: Result<EvalReport, String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn get(&self, v: Variant) -> Option<&EvalReport> {
        self.rows.iter().find(|r| r.variant == v).and_then(|r| r.result.as_ref().ok())
    }
}

fn run_variant(cfg: &TrainConfig, ds: &Dataset, out_dir: Option<&Path>) -> Result<EvalReport, TrainError> {
    if ds.val.is_empty() {
        return Err(TrainError::NoWindows("ablation needs validation windows".into()));
    }
    let outcome = train(cfg, ds)?;
    match out_dir {
        Some(dir) => {
            let art = write_train_artifacts(cfg, ds, outcome, &dir.join(cfg.variant.as_str()))?;
            Ok(art.report.expect("validation windows present"))
        }
        None => super::evaluate_windows(&outcome.model, &ds.normalizer, &ds.val, cfg.batch_size.max(16)),
    }
}

/// Trains the four ablation variants on one dataset with a shared seed.
/// A failing variant is reported in its row; the others still run.
pub fn ablate(cfg: &TrainConfig, ds: &Dataset, out_dir: Option<&Path>) -> AblationReport {
    let rows = Variant::ABLATION
        .par_iter()
        .map(|&v| {
            let result = run_variant(&cfg.with_variant(v), ds, out_dir).map_err(|e| {
                log::error!("variant {v} failed: {e}");
                e.to_string()
            });
            AblationRow { variant: v, result }
        })
        .collect();
    AblationReport { rows }
}

/// `variant,horizon,RMSE,MAE,MAPE,R2`: `p + 1` rows per variant. A failed
/// variant keeps its rows with every value set to `failed`.
pub fn write_ablation_csv(path: &Path, report: &AblationReport, p: usize) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| TrainError::io(path, e))?;
    let mut header = vec!["variant"];
    header.extend(METRIC_HEADER);
    w.write_record(&header).map_err(|e| TrainError::io(path, e))?;
    for row in &report.rows {
        let name = row.variant.as_str().to_string();
        match &row.result {
            Ok(r) => {
                for (h, cells) in metric_rows(r) {
                    let mut rec = vec![name.clone(), h];
                    rec.extend(cells);
                    w.write_record(&rec).map_err(|e| TrainError::io(path, e))?;
                }
            }
            Err(_) => {
                let labels = (1..=p).map(|h| h.to_string()).chain(std::iter::once("overall".to_string()));
                for h in labels {
                    let mut rec = vec![name.clone(), h];
                    rec.extend(std::iter::repeat_n("failed".to_string(), 4));
                    w.write_record(&rec).map_err(|e| TrainError::io(path, e))?;
                }
            }
        }
    }
    w.flush().map_err(|e| TrainError::io(path, e))
}
