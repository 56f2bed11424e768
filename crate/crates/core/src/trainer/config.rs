use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::TrainError;
use crate::dmf::GraphSource;
use crate::graph::GraphOptions;
use crate::rlagent::RlConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    RlDmf,
    DmfNoRl,
    RlDglDistance,
    RlDglTraveltime,
    LstmOnly,
    StaticGcnLstm,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::RlDmf,
        Variant::DmfNoRl,
        Variant::RlDglDistance,
        Variant::RlDglTraveltime,
        Variant::LstmOnly,
        Variant::StaticGcnLstm,
    ];

    /// Ablation order: single-graph variants, fusion without RL, full model.
    pub const ABLATION: [Variant; 4] =
        [Variant::RlDglDistance, Variant::RlDglTraveltime, Variant::DmfNoRl, Variant::RlDmf];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::RlDmf => "rl_dmf",
            Variant::DmfNoRl => "dmf_no_rl",
            Variant::RlDglDistance => "rl_dgl_distance",
            Variant::RlDglTraveltime => "rl_dgl_traveltime",
            Variant::LstmOnly => "lstm_only",
            Variant::StaticGcnLstm => "static_gcn_lstm",
        }
    }

    pub fn sources(self) -> Vec<GraphSource> {
        match self {
            Variant::RlDmf | Variant::DmfNoRl => vec![GraphSource::Distance, GraphSource::TravelTime],
            Variant::RlDglDistance => vec![GraphSource::Distance],
            Variant::RlDglTraveltime => vec![GraphSource::TravelTime],
            Variant::LstmOnly => vec![GraphSource::Identity],
            Variant::StaticGcnLstm => vec![GraphSource::Static],
        }
    }

    pub fn uses_rl(self) -> bool {
        matches!(self, Variant::RlDmf | Variant::RlDglDistance | Variant::RlDglTraveltime)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown variant {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: Variant,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub l: usize,
    pub p: usize,
    pub hidden: usize,
    pub gcn_depth: usize,
    pub train_frac: f64,
    /// early-stopping patience on validation RMSE; `None` trains all epochs
    pub patience: Option<usize>,
    /// keep only the first `n` training windows
    pub max_windows: Option<usize>,
    /// stop once training RMSE falls below this fraction of mean training flow
    pub stop_train_rmse_ratio: Option<f64>,
    /// keep every feature active even for RL variants
    pub disable_rl: bool,
    pub check_finite: bool,
    pub rl: RlConfig,
    pub graph: GraphOptions,
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::RlDmf,
            epochs: 200,
            batch_size: 32,
            lr: 1e-3,
            seed: 42,
            l: 6,
            p: 6,
            hidden: 64,
            gcn_depth: 1,
            train_frac: 0.9,
            patience: Some(50),
            max_windows: None,
            stop_train_rmse_ratio: None,
            disable_rl: false,
            check_finite: false,
            rl: RlConfig::default(),
            graph: GraphOptions::default(),
            data_dir: None,
            out_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        let cfg: TrainConfig = serde_json::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a JSON config; relative `data_dir`/`out_dir` resolve against the
    /// config file's directory.
    pub fn from_file(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path).map_err(|source| TrainError::Io { path: path.into(), source })?;
        let mut cfg = Self::from_json(&text).map_err(|e| TrainError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.data_dir, &mut cfg.out_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.l == 0 || self.p == 0 {
            return bad("l and p must be at least 1");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.hidden == 0 || self.gcn_depth == 0 {
            return bad("epochs, batch_size, hidden and gcn_depth must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return bad("train_frac must lie strictly between 0 and 1");
        }
        if self.patience == Some(0) || self.max_windows == Some(0) {
            return bad("patience and max_windows must be positive when set");
        }
        if self.stop_train_rmse_ratio.is_some_and(|r| !(r > 0.0)) {
            return bad("stop_train_rmse_ratio must be positive");
        }
        if !(self.graph.w_floor > 0.0 && self.graph.w_floor <= 1.0) || !(self.graph.speed_floor > 0.0) {
            return bad("graph w_floor must lie in (0, 1] and speed_floor be positive");
        }
        self.rl.validate().map_err(|e| TrainError::Config(e.to_string()))
    }

    pub fn rl_active(&self) -> bool {
        self.variant.uses_rl() && !self.disable_rl
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        TrainConfig { variant, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_partial_json() {
        let c = TrainConfig::from_json(r#"{"variant": "dmf_no_rl", "epochs": 3, "rl": {"gamma": 0.5}}"#).unwrap();
        assert_eq!(c.variant, Variant::DmfNoRl);
        assert_eq!(c.epochs, 3);
        assert_eq!(c.rl.gamma, 0.5);
        assert_eq!(c.rl.batch_size, 64);
        assert_eq!((c.l, c.p, c.hidden), (6, 6, 64));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(TrainConfig::from_json(r#"{"l": 0}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"variant": "nope"}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"unknown_field": 1}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"train_frac": 1.0}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"rl": {"gamma": 2.0}}"#).is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = TrainConfig::default();
        assert_eq!(a.hash(), TrainConfig::default().hash());
        assert_eq!(a.hash().len(), 64);
        assert_ne!(a.hash(), TrainConfig { seed: 1, ..a.clone() }.hash());
        let round = TrainConfig::from_json(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(round.hash(), a.hash());
    }

    #[test]
    fn variant_table() {
        assert!(Variant::RlDmf.uses_rl() && !Variant::DmfNoRl.uses_rl());
        assert_eq!(Variant::RlDglDistance.sources().len(), 1);
        assert_eq!("static_gcn_lstm".parse::<Variant>().unwrap(), Variant::StaticGcnLstm);
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
    }
}
