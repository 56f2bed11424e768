use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use super::{TrainConfig, TrainError};
use crate::checkpoint::{self, CheckpointError, Container};
use crate::data::{FeatureRegistry, Normalizer};
use crate::dmf::{DmfConfig, DmfModel, DmfParameters};
use crate::graph::StaticGraph;
use crate::numcore::Tensor;
use crate::rlagent::Agent;

pub const MODEL_KIND: &str = "model";
pub const AGENT_KIND: &str = "agent";

/// A trained forecaster with everything needed to score new data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: TrainConfig,
    pub registry: FeatureRegistry,
    pub normalizer: Normalizer,
    pub model: DmfModel,
}

fn bad(msg: impl Into<String>) -> TrainError {
    TrainError::Checkpoint(CheckpointError::Tensor { name: String::new(), message: msg.into() })
}

fn field<T: DeserializeOwned>(meta: &Value, key: &str) -> Result<T, TrainError> {
    let v = meta.get(key).ok_or_else(|| bad(format!("header lacks {key}")))?;
    serde_json::from_value(v.clone()).map_err(|e| bad(format!("header field {key}: {e}")))
}

fn check_kind(meta: &Value, kind: &str) -> Result<(), TrainError> {
    match meta.get("kind").and_then(Value::as_str) {
        Some(k) if k == kind => Ok(()),
        other => Err(bad(format!("expected a {kind} checkpoint, found {}", other.unwrap_or("unknown")))),
    }
}

pub fn save_model(path: &Path, tm: &TrainedModel) -> Result<(), TrainError> {
    let meta = json!({
        "kind": MODEL_KIND,
        "variant": tm.config.variant,
        "config": tm.config,
        "config_hash": tm.config.hash(),
        "dmf": tm.model.config(),
        "registry": tm.registry,
        "normalizer": tm.normalizer,
        "static_ids": tm.model.static_graph.as_ref().map(|g| &g.ids),
    });
    let mut tensors: Vec<(String, &Tensor)> = tm.model.params.named().map(|(n, t)| (format!("dmf.{n}"), t)).collect();
    if let Some(g) = &tm.model.static_graph {
        tensors.push(("static.adjacency".into(), &g.adjacency));
    }
    Ok(checkpoint::write(path, &meta, &tensors)?)
}

pub fn model_from_container(mut c: Container) -> Result<TrainedModel, TrainError> {
    check_kind(&c.meta, MODEL_KIND)?;
    let config: TrainConfig = field(&c.meta, "config")?;
    let hash: String = field(&c.meta, "config_hash")?;
    if hash != config.hash() {
        return Err(bad("config hash does not match the stored config"));
    }
    let dcfg: DmfConfig = field(&c.meta, "dmf")?;
    let registry: FeatureRegistry = field(&c.meta, "registry")?;
    let normalizer: Normalizer = field(&c.meta, "normalizer")?;
    let static_ids: Option<Vec<String>> = field(&c.meta, "static_ids")?;
    if registry.n_temporal != dcfg.n_temporal || registry.n_spatial != dcfg.n_spatial {
        return Err(bad("registry width differs from model input width"));
    }
    let static_graph = match static_ids {
        Some(ids) => {
            let adjacency = c.take("static.adjacency").ok_or_else(|| bad("missing static.adjacency"))?;
            if adjacency.shape() != [ids.len(), ids.len()] {
                return Err(bad("static adjacency shape differs from its id list"));
            }
            Some(StaticGraph { ids, adjacency })
        }
        None => None,
    };
    let params = DmfParameters::from_named(dcfg, c.take_prefixed("dmf."))?;
    if let Some((name, _)) = c.tensors.first() {
        return Err(bad(format!("unexpected tensor {name}")));
    }
    let model = DmfModel::new(params, static_graph)?;
    Ok(TrainedModel { config, registry, normalizer, model })
}

pub fn load_model(path: &Path) -> Result<TrainedModel, TrainError> {
    model_from_container(checkpoint::read(path)?)
}

pub fn save_agent(path: &Path, agent: &Agent, feature_names: &[String]) -> Result<(), TrainError> {
    let (mut meta, tensors) = agent.checkpoint_parts();
    meta["feature_names"] = json!(feature_names);
    Ok(checkpoint::write(path, &meta, &tensors)?)
}

/// Agent plus the feature names its counters refer to.
pub fn load_agent(path: &Path) -> Result<(Agent, Vec<String>), TrainError> {
    let c = checkpoint::read(path)?;
    check_kind(&c.meta, AGENT_KIND)?;
    let names: Vec<String> = field(&c.meta, "feature_names")?;
    let agent = Agent::from_checkpoint(c)?;
    if names.len() != agent.n_features() {
        return Err(bad("feature name count differs from agent width"));
    }
    Ok((agent, names))
}
