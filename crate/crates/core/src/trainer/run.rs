use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::{
    ablate, evaluate_windows, load_agent, load_model, load_table, save_agent, save_model, train, write_ablation_csv,
    write_epochs_csv, write_metrics_csv, AblationReport, Dataset, EvalReport, TrainConfig, TrainError, TrainOutcome,
    TrainedModel, AGENT_KIND, MODEL_KIND,
};
use crate::checkpoint;
use crate::data::make_windows;
use crate::graph::build_all_snapshots;
use crate::rlagent::{ranking_report, write_ranking_csv, RankEntry};

/// Files written by a training run.
#[derive(Debug, Clone)]
pub struct TrainArtifacts {
    pub checkpoint: PathBuf,
    pub epochs: PathBuf,
    pub metrics: Option<PathBuf>,
    pub agent: Option<PathBuf>,
    pub ranking: Option<PathBuf>,
    pub report: Option<EvalReport>,
    pub outcome: TrainOutcome,
}

fn create_dir(dir: &Path) -> Result<(), TrainError> {
    fs::create_dir_all(dir).map_err(|source| TrainError::Io { path: dir.into(), source })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), TrainError> {
    let text = serde_json::to_string_pretty(value).expect("json value serialises");
    fs::write(path, text + "\n").map_err(|source| TrainError::Io { path: path.into(), source })
}

/// Writes checkpoint, epoch log, validation metrics, a run manifest and,
/// for RL variants, the agent state and feature ranking.
pub fn write_train_artifacts(
    cfg: &TrainConfig,
    ds: &Dataset,
    outcome: TrainOutcome,
    out_dir: &Path,
) -> Result<TrainArtifacts, TrainError> {
    create_dir(out_dir)?;
    let v = cfg.variant.as_str();
    // where artifacts land is not part of the model
    let cfg = &TrainConfig { out_dir: None, ..cfg.clone() };
    let tm = TrainedModel {
        config: cfg.clone(),
        registry: ds.table.registry.clone(),
        normalizer: ds.normalizer.clone(),
        model: outcome.model.clone(),
    };
    let checkpoint = out_dir.join(format!("checkpoint_{v}.bin"));
    save_model(&checkpoint, &tm)?;
    let epochs = out_dir.join("epochs.csv");
    write_epochs_csv(&epochs, &outcome.epochs, cfg.p)?;

    let (metrics, report) = if ds.val.is_empty() {
        (None, None)
    } else {
        let r = evaluate_windows(&outcome.model, &ds.normalizer, &ds.val, cfg.batch_size.max(16))?;
        let path = out_dir.join(format!("metrics_{v}.csv"));
        write_metrics_csv(&path, &r)?;
        (Some(path), Some(r))
    };

    let (agent, ranking) = match &outcome.agent {
        Some(a) => {
            let names = &ds.table.registry.names;
            let ap = out_dir.join(format!("agent_{v}.bin"));
            save_agent(&ap, a, names)?;
            let rp = out_dir.join("ranking.csv");
            write_ranking_csv(&rp, &ranking_report(&a.counter, names)?)?;
            (Some(ap), Some(rp))
        }
        None => (None, None),
    };

    write_json(
        &out_dir.join("run.json"),
        &json!({
            "command": "train",
            "variant": v,
            "seed": cfg.seed,
            "config_hash": cfg.hash(),
            "epochs_run": outcome.epochs.len(),
            "optimizer_steps": outcome.steps,
            "stop": outcome.stop,
            "best_epoch": outcome.best_epoch,
            "train_windows": ds.train.len(),
            "val_windows": ds.val.len(),
        }),
    )?;
    Ok(TrainArtifacts { checkpoint, epochs, metrics, agent, ranking, report, outcome })
}

fn data_dir(cfg: &TrainConfig) -> Result<&Path, TrainError> {
    cfg.data_dir.as_deref().ok_or_else(|| TrainError::Config("data_dir is required".into()))
}

fn out_dir(cfg: &TrainConfig) -> PathBuf {
    cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
}

/// Loads `cfg.data_dir`, trains and writes artifacts to `cfg.out_dir`.
pub fn run_train(cfg: &TrainConfig) -> Result<TrainArtifacts, TrainError> {
    cfg.validate()?;
    let ds = Dataset::load(data_dir(cfg)?, cfg)?;
    let outcome = train(cfg, &ds)?;
    write_train_artifacts(cfg, &ds, outcome, &out_dir(cfg))
}

/// Scores a loaded model on every window of the dataset in `data`, without
/// masking. Writes `metrics_<variant>.csv` into `out` when given.
pub fn evaluate_model(tm: &TrainedModel, data: &Path, out: Option<&Path>) -> Result<EvalReport, TrainError> {
    let table = load_table(data)?;
    if table.registry.names != tm.registry.names {
        return Err(TrainError::RegistryMismatch { checkpoint: tm.registry.names.clone(), data: table.registry.names });
    }
    let snaps = build_all_snapshots(&table, &tm.config.graph);
    let windows = make_windows(&table, &tm.normalizer, &snaps, 0..table.hours, tm.config.l, tm.config.p)?;
    if windows.is_empty() {
        return Err(TrainError::NoWindows("dataset has no window with an active detector".into()));
    }
    let report = evaluate_windows(&tm.model, &tm.normalizer, &windows, tm.config.batch_size.max(16))?;
    if let Some(dir) = out {
        create_dir(dir)?;
        write_metrics_csv(&dir.join(format!("metrics_{}.csv", tm.config.variant)), &report)?;
    }
    Ok(report)
}

/// [`evaluate_model`] on a checkpoint file.
pub fn evaluate_checkpoint(
    checkpoint: &Path,
    data: &Path,
    out: Option<&Path>,
) -> Result<(TrainedModel, EvalReport), TrainError> {
    let tm = load_model(checkpoint)?;
    let report = evaluate_model(&tm, data, out)?;
    Ok((tm, report))
}

/// Ranking from an agent checkpoint, or from the agent stored beside a
/// model checkpoint. Writes `ranking.csv` into `out` when given.
pub fn rank_features(path: &Path, out: Option<&Path>) -> Result<Vec<RankEntry>, TrainError> {
    let c = checkpoint::read(path)?;
    let kind = c.meta.get("kind").and_then(|k| k.as_str()).unwrap_or_default().to_string();
    let agent_path = if kind == AGENT_KIND {
        path.to_path_buf()
    } else if kind == MODEL_KIND {
        let tm = super::ckpt::model_from_container(c)?;
        if !tm.config.variant.uses_rl() {
            return Err(TrainError::Config(format!("variant {} trains no masking agent", tm.config.variant)));
        }
        path.with_file_name(format!("agent_{}.bin", tm.config.variant))
    } else {
        return Err(TrainError::Config(format!("{}: not a model or agent checkpoint", path.display())));
    };
    let (agent, names) = load_agent(&agent_path)?;
    let ranking = ranking_report(&agent.counter, &names)?;
    if let Some(dir) = out {
        create_dir(dir)?;
        write_ranking_csv(&dir.join("ranking.csv"), &ranking)?;
    }
    Ok(ranking)
}

/// Runs the four-variant ablation and writes `ablation.csv` plus per-variant
/// artifacts under `<out>/<variant>/`.
pub fn run_ablation(cfg: &TrainConfig) -> Result<(AblationReport, PathBuf), TrainError> {
    cfg.validate()?;
    let ds = Dataset::load(data_dir(cfg)?, cfg)?;
    let dir = out_dir(cfg);
    create_dir(&dir)?;
    let report = ablate(cfg, &ds, Some(&dir));
    let path = dir.join("ablation.csv");
    write_ablation_csv(&path, &report, cfg.p)?;
    Ok((report, path))
}
