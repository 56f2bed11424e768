//! Dynamic multi-graph fusion forecaster: per-graph GCN encoders, per-node
//! attention fusion, a shared LSTM over the window and a linear head.
//!
//! Weights use the row convention: node embeddings are rows and layers
//! compute `X · W`. `W_out` is stored `p × H` and applied as `h · W_outᵀ`.

mod params;

pub use params::{DmfConfig, DmfParameters, GraphSource, ParamLayout};

use serde::Serialize;
use thiserror::Error;

use crate::data::WindowSample;
use crate::graph::{Modality, StaticGraph};
use crate::numcore::{NumError, Tape, Tensor, Var};
use crate::rlagent::MaskState;

#[derive(Debug, Error)]
pub enum DmfError {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("temporal block has {temporal} nodes, spatial block {spatial}")]
    NodeCount { temporal: usize, spatial: usize },
    #[error("window has no predicted nodes")]
    EmptyNodes,
    #[error("empty batch")]
    EmptyBatch,
    #[error("mask covers {got} features, model expects {expected}")]
    MaskWidth { expected: usize, got: usize },
    #[error("window features have width {got}, model expects {expected}")]
    FeatureWidth { expected: usize, got: usize },
    #[error("window has {got} steps and horizon {horizon}, model expects {steps} steps and horizon {expected}")]
    WindowShape { steps: usize, got: usize, expected: usize, horizon: usize },
    #[error("predicted node {0} missing from a step graph")]
    PredictedNodeInactive(String),
    #[error("static-graph variant needs a frozen graph")]
    MissingStaticGraph,
    #[error("parameter {name}: {message}")]
    Parameter { name: String, message: String },
    #[error("invalid model configuration: {0}")]
    Config(String),
}

/// Attention weights and embeddings recorded during a forward pass.
/// Rows are the predicted nodes of the batch, stacked window by window.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FusionTrace {
    pub sources: Vec<GraphSource>,
    pub steps: Vec<StepFusion>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepFusion {
    /// `[rows, sources]`; absent for single-graph models
    pub alpha: Option<Tensor>,
    /// per source, `[rows, H]`
    pub z: Vec<Tensor>,
    pub fused: Tensor,
}

impl FusionTrace {
    /// `(α_d, α_tt)` for a node at a step of a two-graph model.
    pub fn alpha_pair(&self, step: usize, row: usize) -> Option<(f64, f64)> {
        let a = self.steps.get(step)?.alpha.as_ref()?;
        (a.cols() == 2).then(|| (a.get(row, 0), a.get(row, 1)))
    }
}

/// `[N, F_t] ‖ [N, F_s]` with temporal columns first.
pub fn concat_node_features(temporal: &Tensor, spatial: &Tensor) -> Result<Tensor, DmfError> {
    let (n, ft) = temporal.dims2()?;
    let (ns, fs) = spatial.dims2()?;
    if n != ns {
        return Err(DmfError::NodeCount { temporal: n, spatial: ns });
    }
    let mut out = Vec::with_capacity(n * (ft + fs));
    for r in 0..n {
        out.extend_from_slice(temporal.row(r));
        out.extend_from_slice(spatial.row(r));
    }
    Ok(Tensor::new(vec![n, ft + fs], out)?)
}

/// `ReLU(Ã H W)`.
pub fn gcn_layer(a: &Tensor, h: &Tensor, w: &Tensor) -> Result<Tensor, DmfError> {
    let mut tape = Tape::new();
    let (a, h, w) = (tape.constant(a.clone()), tape.constant(h.clone()), tape.constant(w.clone()));
    let ah = tape.matmul(a, h)?;
    let z = gcn_var(&mut tape, ah, w)?;
    Ok(tape.value(z).clone())
}

/// Softmax attention over graphs per node. `ws` are `H × 1` score vectors.
/// Returns the fused embedding and `[N, graphs]` weights.
pub fn attention_fuse(zs: &[&Tensor], ws: &[&Tensor]) -> Result<(Tensor, Tensor), DmfError> {
    let mut tape = Tape::new();
    let zv: Vec<Var> = zs.iter().map(|z| tape.constant((*z).clone())).collect();
    let wv: Vec<Var> = ws.iter().map(|w| tape.constant((*w).clone())).collect();
    let (fused, alpha) = fuse_var(&mut tape, &zv, &wv)?;
    Ok((tape.value(fused).clone(), tape.value(alpha).clone()))
}

/// One LSTM step for a block of nodes (rows). Gate weights are ordered
/// forget, input, candidate, output.
pub fn lstm_step(
    z: &Tensor,
    h: &Tensor,
    c: &Tensor,
    w: [&Tensor; 4],
    u: [&Tensor; 4],
    b: [&Tensor; 4],
) -> Result<(Tensor, Tensor), DmfError> {
    let mut tape = Tape::new();
    let hidden = h.cols();
    let mut cat = |ts: [&Tensor; 4]| -> Result<Var, NumError> {
        let vs: Vec<Var> = ts.iter().map(|t| tape.constant((*t).clone())).collect();
        tape.concat_cols(&vs)
    };
    let (wc, uc, bc) = (cat(w)?, cat(u)?, cat(b)?);
    let zv = tape.constant(z.clone());
    let hv = tape.constant(h.clone());
    let cv = tape.constant(c.clone());
    let cell = LstmVars { w: wc, u: uc, b: bc, hidden };
    let (h2, c2) = cell.step(&mut tape, zv, Some((hv, cv)))?;
    Ok((tape.value(h2).clone(), tape.value(c2).clone()))
}

/// `h · W_outᵀ + b_out`.
pub fn predict_head(h: &Tensor, w_out: &Tensor, b_out: &Tensor) -> Result<Tensor, DmfError> {
    let mut tape = Tape::new();
    let (hv, wv, bv) = (tape.constant(h.clone()), tape.constant(w_out.clone()), tape.constant(b_out.clone()));
    let y = head_var(&mut tape, hv, wv, bv)?;
    Ok(tape.value(y).clone())
}

fn gcn_var(tape: &mut Tape, ah: Var, w: Var) -> Result<Var, NumError> {
    let x = tape.matmul(ah, w)?;
    tape.relu(x)
}

fn fuse_var(tape: &mut Tape, zs: &[Var], ws: &[Var]) -> Result<(Var, Var), NumError> {
    let logits: Vec<Var> = zs.iter().zip(ws).map(|(&z, &w)| tape.matmul(z, w)).collect::<Result<_, _>>()?;
    let stacked = tape.concat_cols(&logits)?;
    let alpha = tape.softmax(stacked, 1)?;
    let mut fused = None;
    for (g, &z) in zs.iter().enumerate() {
        let a = tape.slice_cols(alpha, g, 1)?;
        let term = tape.mul_col(z, a)?;
        fused = Some(match fused {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    Ok((fused.ok_or(NumError::Empty { op: "attention" })?, alpha))
}

fn head_var(tape: &mut Tape, h: Var, w_out: Var, b_out: Var) -> Result<Var, NumError> {
    let wt = tape.transpose(w_out)?;
    let y = tape.matmul(h, wt)?;
    tape.add_row(y, b_out)
}

/// Concatenated gate weights `[f | i | c̃ | o]`.
struct LstmVars {
    w: Var,
    u: Var,
    b: Var,
    hidden: usize,
}

impl LstmVars {
    fn step(&self, tape: &mut Tape, z: Var, state: Option<(Var, Var)>) -> Result<(Var, Var), NumError> {
        let n = self.hidden;
        let mut pre = tape.matmul(z, self.w)?;
        if let Some((h, _)) = state {
            let rec = tape.matmul(h, self.u)?;
            pre = tape.add(pre, rec)?;
        }
        let pre = tape.add_row(pre, self.b)?;
        let f = tape.slice_cols(pre, 0, n)?;
        let f = tape.sigmoid(f)?;
        let i = tape.slice_cols(pre, n, n)?;
        let i = tape.sigmoid(i)?;
        let g = tape.slice_cols(pre, 2 * n, n)?;
        let g = tape.tanh(g)?;
        let o = tape.slice_cols(pre, 3 * n, n)?;
        let o = tape.sigmoid(o)?;
        let ig = tape.mul(i, g)?;
        let c = match state {
            Some((_, c_prev)) => {
                let fc = tape.mul(f, c_prev)?;
                tape.add(fc, ig)?
            }
            None => ig,
        };
        let tc = tape.tanh(c)?;
        let h = tape.mul(o, tc)?;
        Ok((h, c))
    }
}

/// Masked `H_t` for every step-graph node, in snapshot order.
fn step_features(window: &WindowSample, step: usize, mask: &MaskState) -> Tensor {
    let f = &window.features;
    let (ft, fs) = (f.n_temporal(), f.n_spatial());
    let rows = &window.step_rows[step];
    let mut out = vec![0.0; rows.len() * (ft + fs)];
    for (k, &r) in rows.iter().enumerate() {
        let dst = &mut out[k * (ft + fs)..(k + 1) * (ft + fs)];
        let (tdst, sdst) = dst.split_at_mut(ft);
        mask.apply_temporal(f.temporal_row(r, step), tdst);
        mask.apply_spatial(f.spatial.row(r), sdst);
    }
    Tensor::new(vec![rows.len(), ft + fs], out).expect("step feature shape")
}

fn step_adjacency(
    window: &WindowSample,
    step: usize,
    source: GraphSource,
    static_graph: Option<&StaticGraph>,
) -> Result<Option<Tensor>, DmfError> {
    let snap = &window.snapshots[step];
    Ok(match source {
        GraphSource::Distance => Some(snap.normalized(Modality::Distance).clone()),
        GraphSource::TravelTime => Some(snap.normalized(Modality::TravelTime).clone()),
        GraphSource::Static => {
            let g = static_graph.ok_or(DmfError::MissingStaticGraph)?;
            let ids: Vec<&str> =
                window.step_rows[step].iter().map(|&r| window.features.detector_ids[r].as_str()).collect();
            Some(g.restricted(&ids))
        }
        GraphSource::Identity => None,
    })
}

/// Positions of the predicted nodes within each step graph.
fn predicted_positions(window: &WindowSample) -> Result<Vec<Vec<usize>>, DmfError> {
    let n = window.features.nodes.len();
    window
        .step_rows
        .iter()
        .map(|rows| {
            let mut pos = vec![usize::MAX; n];
            for (k, &r) in rows.iter().enumerate() {
                pos[r] = k;
            }
            window
                .predict
                .iter()
                .map(|&r| match pos[r] {
                    usize::MAX => Err(DmfError::PredictedNodeInactive(window.features.detector_ids[r].clone())),
                    k => Ok(k),
                })
                .collect()
        })
        .collect()
}

fn check_batch(cfg: &DmfConfig, batch: &[&WindowSample], mask: &MaskState) -> Result<(), DmfError> {
    if batch.is_empty() {
        return Err(DmfError::EmptyBatch);
    }
    if mask.m_temp.len() != cfg.n_temporal || mask.m_spatial.len() != cfg.n_spatial {
        return Err(DmfError::MaskWidth { expected: cfg.n_features(), got: mask.n_features() });
    }
    let steps = batch[0].features.steps;
    for w in batch {
        let f = &w.features;
        if f.n_temporal() != cfg.n_temporal || f.n_spatial() != cfg.n_spatial {
            return Err(DmfError::FeatureWidth { expected: cfg.n_features(), got: f.n_temporal() + f.n_spatial() });
        }
        if w.predict.is_empty() {
            return Err(DmfError::EmptyNodes);
        }
        if f.steps != steps || w.horizon() != cfg.horizon || w.snapshots.len() != steps || w.step_rows.len() != steps {
            return Err(DmfError::WindowShape { steps, got: f.steps, expected: cfg.horizon, horizon: w.horizon() });
        }
    }
    Ok(())
}

/// Records the full forward pass for `batch` on `tape`, given parameter
/// vars in layout order. Returns `[Σ predicted nodes, p]` predictions.
pub fn forward_on_tape(
    tape: &mut Tape,
    cfg: &DmfConfig,
    layout: &ParamLayout,
    params: &[Var],
    batch: &[&WindowSample],
    mask: &MaskState,
    static_graph: Option<&StaticGraph>,
    record: bool,
) -> Result<(Var, Option<FusionTrace>), DmfError> {
    check_batch(cfg, batch, mask)?;
    let positions: Vec<Vec<Vec<usize>>> = batch.iter().map(|w| predicted_positions(w)).collect::<Result<_, _>>()?;
    let steps = batch[0].features.steps;

    let cat4 = |tape: &mut Tape, idx: [usize; 4]| tape.concat_cols(&idx.map(|k| params[k]));
    let cell = LstmVars {
        w: cat4(tape, layout.w)?,
        u: cat4(tape, layout.u)?,
        b: cat4(tape, layout.b)?,
        hidden: cfg.hidden,
    };
    let attn: Vec<Var> = layout.attn.iter().map(|&k| params[k]).collect();

    let mut trace = record.then(|| FusionTrace { sources: cfg.sources.clone(), steps: Vec::with_capacity(steps) });
    let mut state: Option<(Var, Var)> = None;
    for s in 0..steps {
        let feats: Vec<Tensor> = batch.iter().map(|w| step_features(w, s, mask)).collect();
        let mut zs = Vec::with_capacity(cfg.sources.len());
        for (g, &source) in cfg.sources.iter().enumerate() {
            let adj: Vec<Option<Tensor>> =
                batch.iter().map(|w| step_adjacency(w, s, source, static_graph)).collect::<Result<_, _>>()?;
            let w0 = params[layout.gcn[g][0]];
            let z = if cfg.gcn_depth == 1 {
                // single layer: aggregate, keep predicted rows, then one batched product
                let mut rows = Vec::with_capacity(batch.len());
                for (k, h) in feats.iter().enumerate() {
                    let ah = match &adj[k] {
                        Some(a) => a.matmul(h)?,
                        None => h.clone(),
                    };
                    rows.push(ah.select_rows(&positions[k][s]));
                }
                let x = tape.constant(Tensor::concat_rows(&rows)?);
                gcn_var(tape, x, w0)?
            } else {
                let mut parts = Vec::with_capacity(batch.len());
                for (k, h) in feats.iter().enumerate() {
                    let a = adj[k].clone().map(|a| tape.constant(a));
                    let mut cur = tape.constant(h.clone());
                    for &wk in &layout.gcn[g] {
                        let agg = match a {
                            Some(a) => tape.matmul(a, cur)?,
                            None => cur,
                        };
                        cur = gcn_var(tape, agg, params[wk])?;
                    }
                    parts.push(tape.select_rows(cur, &positions[k][s])?);
                }
                tape.concat_rows(&parts)?
            };
            zs.push(z);
        }
        let (fused, alpha) = if zs.len() == 1 {
            (zs[0], None)
        } else {
            let (f, a) = fuse_var(tape, &zs, &attn)?;
            (f, Some(a))
        };
        if let Some(tr) = trace.as_mut() {
            tr.steps.push(StepFusion {
                alpha: alpha.map(|a| tape.value(a).clone()),
                z: zs.iter().map(|&z| tape.value(z).clone()).collect(),
                fused: tape.value(fused).clone(),
            });
        }
        state = Some(cell.step(tape, fused, state)?);
    }
    let (h, _) = state.expect("at least one step");
    let y = head_var(tape, h, params[layout.w_out], params[layout.b_out])?;
    Ok((y, trace))
}

/// Mean squared error between `pred` and a constant target.
pub fn mse_on_tape(tape: &mut Tape, pred: Var, target: Tensor) -> Result<Var, NumError> {
    let t = tape.constant(target);
    let d = tape.sub(pred, t)?;
    let sq = tape.mul(d, d)?;
    tape.mean(sq)
}

/// Stacked normalised targets of a batch, matching the forward row order.
pub fn batch_targets(batch: &[&WindowSample]) -> Result<Tensor, NumError> {
    let parts: Vec<Tensor> = batch.iter().map(|w| w.target.clone()).collect();
    Tensor::concat_rows(&parts)
}

/// Parameters plus the frozen graph used by the static baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct DmfModel {
    pub params: DmfParameters,
    pub static_graph: Option<StaticGraph>,
    /// fail on the first non-finite intermediate during training passes
    pub check_finite: bool,
}

/// Loss, stacked predictions and per-parameter gradients of one batch.
#[derive(Debug, Clone)]
pub struct BatchGrad {
    pub loss: f64,
    pub pred: Tensor,
    pub grads: Vec<Tensor>,
}

impl DmfModel {
    pub fn new(params: DmfParameters, static_graph: Option<StaticGraph>) -> Result<Self, DmfError> {
        if params.config.sources.contains(&GraphSource::Static) && static_graph.is_none() {
            return Err(DmfError::MissingStaticGraph);
        }
        Ok(DmfModel { params, static_graph, check_finite: false })
    }

    pub fn config(&self) -> &DmfConfig {
        &self.params.config
    }

    /// Predictions for the predicted nodes of every window, stacked.
    pub fn predict(&self, batch: &[&WindowSample], mask: &MaskState) -> Result<(Tensor, FusionTrace), DmfError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.params.tensors().iter().map(|t| tape.constant(t.clone())).collect();
        let (y, trace) = forward_on_tape(
            &mut tape,
            self.config(),
            self.params.layout(),
            &vars,
            batch,
            mask,
            self.static_graph.as_ref(),
            true,
        )?;
        Ok((tape.value(y).clone(), trace.unwrap_or_default()))
    }

    /// `[predicted nodes, p]` normalised predictions for one window.
    pub fn forward(&self, window: &WindowSample, mask: &MaskState) -> Result<(Tensor, FusionTrace), DmfError> {
        self.predict(&[window], mask)
    }

    /// MSE loss and gradients w.r.t. every parameter, in layout order.
    pub fn loss_and_grads(&self, batch: &[&WindowSample], mask: &MaskState) -> Result<BatchGrad, DmfError> {
        let mut tape = if self.check_finite { Tape::with_finite_checks() } else { Tape::new() };
        let vars: Vec<Var> = self.params.tensors().iter().map(|t| tape.param(t.clone())).collect();
        let (y, _) = forward_on_tape(
            &mut tape,
            self.config(),
            self.params.layout(),
            &vars,
            batch,
            mask,
            self.static_graph.as_ref(),
            false,
        )?;
        let loss = mse_on_tape(&mut tape, y, batch_targets(batch)?)?;
        let loss_value = tape.value(loss).data()[0];
        let pred = tape.value(y).clone();
        let mut g = tape.backward(loss)?;
        let grads = vars.iter().map(|&v| g.take(v)).collect();
        Ok(BatchGrad { loss: loss_value, pred, grads })
    }
}
