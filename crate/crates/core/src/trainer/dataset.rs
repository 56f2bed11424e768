use std::path::Path;
use std::sync::Arc;

use super::{TrainConfig, TrainError};
use crate::data::{
    engineer_features, load_csv, make_windows, split_and_fit, DataError, FeatureTable, Normalizer, SplitPlan,
    WindowSample, META_FILE, RECORDS_FILE,
};
use crate::graph::{build_all_snapshots, GraphSnapshot, StaticGraph};

/// Reads `meta.csv` and `records.csv` from `dir` and engineers features.
pub fn load_table(dir: &Path) -> Result<FeatureTable, TrainError> {
    let meta = dir.join(META_FILE);
    let records = dir.join(RECORDS_FILE);
    for p in [&meta, &records] {
        if !p.is_file() {
            return Err(TrainError::Io {
                path: p.clone(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
            });
        }
    }
    let (metas, recs) = load_csv(&meta, &records)?;
    Ok(engineer_features(&recs, &metas)?)
}

/// Windows over `range`, or none when the range is shorter than one window.
pub fn windows_or_empty(
    table: &FeatureTable,
    norm: &Normalizer,
    snapshots: &[Arc<GraphSnapshot>],
    range: std::ops::Range<usize>,
    l: usize,
    p: usize,
) -> Result<Vec<WindowSample>, TrainError> {
    match make_windows(table, norm, snapshots, range, l, p) {
        Ok(w) => Ok(w),
        Err(DataError::ShortSpan { .. }) => Ok(Vec::new()),
        Err(e) => Err(e.into()),
    }
}

/// Everything training needs from one dataset: features, split,
/// normaliser, per-hour graphs and the train/validation windows.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub table: FeatureTable,
    pub plan: SplitPlan,
    pub normalizer: Normalizer,
    pub snapshots: Vec<Arc<GraphSnapshot>>,
    pub train: Vec<WindowSample>,
    pub val: Vec<WindowSample>,
    pub static_graph: StaticGraph,
}

impl Dataset {
    pub fn from_table(table: FeatureTable, cfg: &TrainConfig) -> Result<Self, TrainError> {
        let (plan, normalizer) = split_and_fit(&table, cfg.train_frac)?;
        let snapshots = build_all_snapshots(&table, &cfg.graph);
        let mut train = make_windows(&table, &normalizer, &snapshots, plan.train.clone(), cfg.l, cfg.p)?;
        if train.is_empty() {
            return Err(TrainError::NoWindows("training split has no window with an active detector".into()));
        }
        if let Some(n) = cfg.max_windows {
            train.truncate(n);
        }
        let val = windows_or_empty(&table, &normalizer, &snapshots, plan.val.clone(), cfg.l, cfg.p)?;
        if val.is_empty() {
            log::warn!("validation split ({} hours) yields no windows", plan.val.len());
        }
        let static_graph = StaticGraph::build(&table.detectors, &cfg.graph);
        Ok(Dataset { table, plan, normalizer, snapshots, train, val, static_graph })
    }

    pub fn load(dir: &Path, cfg: &TrainConfig) -> Result<Self, TrainError> {
        Self::from_table(load_table(dir)?, cfg)
    }

    /// Mean raw target flow over the training windows.
    pub fn mean_train_flow(&self) -> f64 {
        let (sum, n) = self
            .train
            .iter()
            .flat_map(|w| w.target_raw.data())
            .fold((0.0, 0usize), |(s, n), &x| (s + x, n + 1));
        sum / n.max(1) as f64
    }
}

