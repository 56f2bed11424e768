//! Double-DQN feature masking with prioritised replay. Each training step
//! the agent masks one input feature; how often each feature gets masked
//! yields the importance ranking.

mod agent;
mod mask;
mod qnet;
mod ranking;
mod replay;
mod state;

pub use agent::{compute_reward, select_action, Agent, EpsilonSchedule, RlConfig};
pub use mask::{apply_mask, MaskState};
pub use qnet::{argmax, ddqn_target, train_q, Mlp, QNetworks, QUpdate, MLP_NAMES, Q_HIDDEN};
pub use ranking::{ranking_report, read_ranking_csv, write_ranking_csv, MaskCounter, RankEntry};
pub use replay::{ReplayBuffer, ReplaySample, Transition, PRIORITY_EPS};
pub use state::build_state;

use thiserror::Error;

use crate::numcore::NumError;

#[derive(Debug, Error)]
pub enum RlError {
    #[error("action {action} outside 0..{n}")]
    ActionRange { action: usize, n: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("replay buffer is empty")]
    EmptyReplay,
    #[error("expected {expected} features, got {got}")]
    StateWidth { expected: usize, got: usize },
    #[error("no masking actions recorded")]
    NoActions,
    #[error("non-finite loss {0}")]
    NonFiniteLoss(f64),
    #[error("invalid agent configuration: {0}")]
    Config(String),
    #[error("agent checkpoint: {0}")]
    Checkpoint(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Num(#[from] NumError),
}
