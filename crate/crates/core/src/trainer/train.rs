use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{evaluate_windows, Dataset, EvalReport, TrainConfig, TrainError};
use crate::data::WindowSample;
use crate::dmf::{DmfConfig, DmfError, DmfModel, DmfParameters};
use crate::numcore::{AdamState, NumError, Tensor};
use crate::rlagent::{build_state, compute_reward, ranking_report, Agent, MaskState, RankEntry};

const STREAM_DATA: u64 = 1;
const STREAM_INIT: u64 = 2;
const STREAM_Q: u64 = 3;
const STREAM_AGENT: u64 = 4;

/// Independent generator per concern, so enabling the agent never shifts
/// the data order or the model initialisation.
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// mean normalised MSE over the epoch's batches
    pub train_loss: f64,
    /// unmasked training RMSE (veh/h), when tracked
    pub train_rmse: Option<f64>,
    pub val: Option<EvalReport>,
    pub epsilon: Option<f64>,
    pub mean_reward: Option<f64>,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    EarlyStopped,
    TrainTarget,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DmfModel,
    pub agent: Option<Agent>,
    pub epochs: Vec<EpochLog>,
    /// epoch whose parameters were kept, when early stopping restored them
    pub best_epoch: Option<usize>,
    pub stop: StopReason,
    pub steps: usize,
}

impl TrainOutcome {
    pub fn ranking(&self, names: &[String]) -> Option<Result<Vec<RankEntry>, TrainError>> {
        self.agent.as_ref().map(|a| ranking_report(&a.counter, names).map_err(Into::into))
    }
}

fn batches(n: usize, size: usize) -> Vec<Vec<usize>> {
    (0..n).collect::<Vec<_>>().chunks(size).map(<[usize]>::to_vec).collect()
}

fn diverged(loss: f64, grads: &[Tensor]) -> bool {
    !loss.is_finite() || grads.iter().any(|g| !g.all_finite())
}

/// Trains `cfg.variant` on `ds.train`. Windows are grouped into batches of
/// consecutive anchors; batch order is reshuffled every epoch. RL variants
/// mask one feature per optimiser step.
pub fn train(cfg: &TrainConfig, ds: &Dataset) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if ds.train.is_empty() {
        return Err(TrainError::NoWindows("no training windows".into()));
    }
    let reg = &ds.table.registry;
    let (ft, fs) = (reg.n_temporal, reg.n_spatial);
    let dcfg = DmfConfig {
        n_temporal: ft,
        n_spatial: fs,
        hidden: cfg.hidden,
        horizon: cfg.p,
        gcn_depth: cfg.gcn_depth,
        sources: cfg.variant.sources(),
    };
    let params = DmfParameters::init(dcfg, &mut stream(cfg.seed, STREAM_INIT))?;
    let static_graph = params.config.sources.contains(&crate::dmf::GraphSource::Static).then(|| ds.static_graph.clone());
    let mut model = DmfModel::new(params, static_graph)?;
    model.check_finite = cfg.check_finite;
    let mut adam = AdamState::new(model.params.tensors(), cfg.lr);

    let groups = batches(ds.train.len(), cfg.batch_size);
    let planned = (cfg.epochs * groups.len()) as u64;
    let mut agent = if cfg.rl_active() {
        let q_seed = stream(cfg.seed, STREAM_Q).next_u64();
        let a_seed = stream(cfg.seed, STREAM_AGENT).next_u64();
        Some(Agent::new(cfg.rl.clone(), ft, fs, planned, q_seed, a_seed)?)
    } else {
        None
    };
    let mut data_rng = stream(cfg.seed, STREAM_DATA);
    let no_mask = MaskState::none(ft, fs);
    let mean_flow = ds.mean_train_flow();
    let eval_batch = cfg.batch_size.max(16);

    let started = Instant::now();
    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Vec<Tensor>, usize)> = None;
    let mut since_best = 0usize;
    let mut stop = StopReason::Completed;
    let mut steps = 0usize;

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..groups.len()).collect();
        order.shuffle(&mut data_rng);
        let mut loss_sum = 0.0;
        let mut reward_sum = 0.0;
        for (step, &g) in order.iter().enumerate() {
            let batch: Vec<&WindowSample> = groups[g].iter().map(|&i| &ds.train[i]).collect();
            let (mask, state) = match agent.as_mut() {
                Some(a) => {
                    let feats: Vec<_> = batch.iter().map(|w| &w.features).collect();
                    let s = build_state(&feats)?;
                    (a.act(&s)?, Some(s))
                }
                None => (no_mask.clone(), None),
            };
            let grad = match model.loss_and_grads(&batch, &mask) {
                Ok(g) => g,
                Err(DmfError::Num(NumError::NonFinite { .. })) => {
                    return Err(TrainError::Divergence { epoch, step: step + 1, loss: f64::NAN })
                }
                Err(e) => return Err(e.into()),
            };
            if diverged(grad.loss, &grad.grads) {
                return Err(TrainError::Divergence { epoch, step: step + 1, loss: grad.loss });
            }
            if let (Some(a), Some(s)) = (agent.as_mut(), state) {
                let r = compute_reward(grad.loss)?;
                a.observe(s, mask.action.expect("agent always masks"), r)?;
                reward_sum += r;
            }
            adam.step(model.params.tensors_mut(), &grad.grads)?;
            loss_sum += grad.loss;
            steps += 1;
        }

        let n = order.len() as f64;
        let train_rmse = match cfg.stop_train_rmse_ratio {
            Some(_) => Some(evaluate_windows(&model, &ds.normalizer, &ds.train, eval_batch)?.overall.rmse),
            None => None,
        };
        let val = if ds.val.is_empty() {
            None
        } else {
            Some(evaluate_windows(&model, &ds.normalizer, &ds.val, eval_batch)?)
        };
        let log = EpochLog {
            epoch,
            train_loss: loss_sum / n,
            train_rmse,
            val,
            epsilon: agent.as_ref().map(|a| a.epsilon.value()),
            mean_reward: agent.as_ref().map(|_| reward_sum / n),
            wall_time: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}/{}: train loss {:.5}{}{}",
            cfg.epochs,
            log.train_loss,
            log.train_rmse.map_or(String::new(), |r| format!(", train RMSE {r:.2}")),
            log.val.as_ref().map_or(String::new(), |v| format!(", val RMSE {:.2}", v.overall.rmse)),
        );
        let val_rmse = log.val.as_ref().map(|v| v.overall.rmse);
        logs.push(log);

        if let (Some(ratio), Some(r)) = (cfg.stop_train_rmse_ratio, train_rmse) {
            if r < ratio * mean_flow {
                stop = StopReason::TrainTarget;
                break;
            }
        }
        if let (Some(patience), Some(v)) = (cfg.patience, val_rmse) {
            if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                best = Some((v, model.params.tensors().to_vec(), epoch));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    stop = StopReason::EarlyStopped;
                    break;
                }
            }
        }
    }

    let mut best_epoch = None;
    if let Some((_, params, epoch)) = best {
        if stop != StopReason::TrainTarget {
            model.params.tensors_mut().clone_from_slice(&params);
            best_epoch = Some(epoch);
        }
    }
    Ok(TrainOutcome { model, agent, epochs: logs, best_epoch, stop, steps })
}

/// `epochs.csv`: overall and per-horizon validation metrics per epoch.
pub fn write_epochs_csv(path: &Path, logs: &[EpochLog], p: usize) -> Result<(), TrainError> {
    let mut header: Vec<String> = ["epoch", "train_loss", "train_rmse", "epsilon", "mean_reward"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for m in ["rmse", "mae", "mape", "r2"] {
        header.push(format!("val_{m}"));
        header.extend((1..=p).map(|h| format!("val_{m}_h{h}")));
    }
    header.push("wall_time".into());
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    let mut w = csv::Writer::from_path(path).map_err(|e| TrainError::io(path, e))?;
    w.write_record(&header).map_err(|e| TrainError::io(path, e))?;
    for l in logs {
        let mut rec = vec![l.epoch.to_string(), l.train_loss.to_string(), opt(l.train_rmse), opt(l.epsilon), opt(l.mean_reward)];
        match &l.val {
            Some(v) => {
                let pick: [fn(&crate::metrics::MetricReport) -> Option<f64>; 4] =
                    [|m| Some(m.rmse), |m| Some(m.mae), |m| m.mape, |m| m.r2];
                for f in pick {
                    rec.push(f(&v.overall).map_or_else(|| "undefined".into(), |x| x.to_string()));
                    rec.extend(v.horizons.iter().map(|m| f(m).map_or_else(|| "undefined".into(), |x| x.to_string())));
                }
            }
            None => rec.extend(std::iter::repeat_n(String::new(), 4 * (p + 1))),
        }
        rec.push(format!("{:.3}", l.wall_time));
        w.write_record(&rec).map_err(|e| TrainError::io(path, e))?;
    }
    w.flush().map_err(|e| TrainError::io(path, e))
}
