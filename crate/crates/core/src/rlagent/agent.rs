use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    apply_mask, argmax, ddqn_target, train_q, MaskCounter, MaskState, Mlp, QNetworks, QUpdate, ReplayBuffer, RlError,
    Transition, MLP_NAMES, PRIORITY_EPS, Q_HIDDEN,
};
use crate::checkpoint::Container;
use crate::numcore::{AdamState, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlConfig {
    pub gamma: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub target_sync: u64,
    pub alpha: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    pub lr: f64,
    pub eps_start: f64,
    pub eps_decay: f64,
    pub eps_min: f64,
    pub q_hidden: usize,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            gamma: 0.95,
            buffer_capacity: 10_000,
            batch_size: 64,
            target_sync: 100,
            alpha: 0.6,
            beta_start: 0.4,
            beta_end: 1.0,
            lr: 1e-3,
            eps_start: 1.0,
            eps_decay: 0.995,
            eps_min: 0.05,
            q_hidden: Q_HIDDEN,
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |m: &str| Err(RlError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if self.buffer_capacity == 0 || self.batch_size == 0 || self.target_sync == 0 || self.q_hidden == 0 {
            return bad("buffer capacity, batch size, target sync and Q hidden width must be positive");
        }
        if !(0.0..=1.0).contains(&self.eps_start) || !(0.0..=1.0).contains(&self.eps_min) {
            return bad("epsilon bounds must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.eps_decay) {
            return bad("epsilon decay must lie in [0, 1]");
        }
        if !(self.lr > 0.0) || self.alpha < 0.0 || self.beta_start < 0.0 || self.beta_end < 0.0 {
            return bad("learning rate must be positive and replay exponents non-negative");
        }
        Ok(())
    }
}

/// `ε(n) = max(ε_min, ε_start · decayⁿ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub decay: f64,
    pub min: f64,
    pub step: u64,
}

impl EpsilonSchedule {
    pub fn new(start: f64, decay: f64, min: f64) -> Self {
        EpsilonSchedule { start, decay, min, step: 0 }
    }

    pub fn at(&self, n: u64) -> f64 {
        self.min.max(self.start * self.decay.powf(n as f64))
    }

    pub fn value(&self) -> f64 {
        self.at(self.step)
    }

    pub fn advance(&mut self) {
        self.step += 1;
    }
}

/// ε-greedy choice over `0..q.len()`; greedy ties go to the lowest index.
pub fn select_action<R: Rng>(q: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if rng.gen::<f64>() < epsilon {
        rng.gen_range(0..q.len())
    } else {
        argmax(q)
    }
}

/// `r = −loss`.
pub fn compute_reward(loss: f64) -> Result<f64, RlError> {
    if !loss.is_finite() {
        return Err(RlError::NonFiniteLoss(loss));
    }
    Ok(-loss)
}

/// The masking agent: Q-networks, replay, exploration and counters.
#[derive(Debug, Clone)]
pub struct Agent {
    pub config: RlConfig,
    pub n_temporal: usize,
    pub n_spatial: usize,
    pub q: QNetworks,
    pub buffer: ReplayBuffer,
    pub epsilon: EpsilonSchedule,
    pub counter: MaskCounter,
    adam: AdamState,
    rng: ChaCha8Rng,
    pending: Option<(Vec<f64>, usize, f64)>,
    updates: u64,
    planned_steps: u64,
}

impl Agent {
    /// `q_seed` initialises the networks; `seed` drives exploration and
    /// replay sampling. `planned_steps` sets the β anneal length.
    pub fn new(
        config: RlConfig,
        n_temporal: usize,
        n_spatial: usize,
        planned_steps: u64,
        q_seed: u64,
        seed: u64,
    ) -> Result<Self, RlError> {
        config.validate()?;
        let nf = n_temporal + n_spatial;
        if nf == 0 {
            return Err(RlError::Config("no features to mask".into()));
        }
        let q = QNetworks::init(nf, config.q_hidden, &mut ChaCha8Rng::seed_from_u64(q_seed));
        Ok(Agent {
            adam: AdamState::new(&q.online.params, config.lr),
            buffer: ReplayBuffer::new(config.buffer_capacity, config.alpha),
            epsilon: EpsilonSchedule::new(config.eps_start, config.eps_decay, config.eps_min),
            counter: MaskCounter::new(nf),
            rng: ChaCha8Rng::seed_from_u64(seed),
            pending: None,
            updates: 0,
            planned_steps: planned_steps.max(1),
            config,
            n_temporal,
            n_spatial,
            q,
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_temporal + self.n_spatial
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Linearly annealed IS exponent.
    pub fn beta(&self) -> f64 {
        let frac = (self.updates as f64 / self.planned_steps as f64).min(1.0);
        self.config.beta_start + (self.config.beta_end - self.config.beta_start) * frac
    }

    /// Picks the feature to mask for this step and counts it.
    pub fn act(&mut self, state: &[f64]) -> Result<MaskState, RlError> {
        if state.len() != self.n_features() {
            return Err(RlError::StateWidth { expected: self.n_features(), got: state.len() });
        }
        let eps = self.epsilon.value();
        let q = self.q.online.q_values(state)?;
        let a = select_action(&q, eps, &mut self.rng);
        self.epsilon.advance();
        self.counter.record(a);
        apply_mask(a, self.n_temporal, self.n_spatial)
    }

    /// Records this step's reward. The previous step's transition is
    /// completed with `state` as its successor, stored, and one DDQN update
    /// runs on a replay batch.
    pub fn observe(&mut self, state: Vec<f64>, action: usize, reward: f64) -> Result<Option<QUpdate>, RlError> {
        if !reward.is_finite() {
            return Err(RlError::NonFiniteLoss(reward));
        }
        if let Some((s, a, r)) = self.pending.take() {
            self.buffer.push(Transition { s, a, r, s_next: state.clone(), priority: 1.0 });
        }
        self.pending = Some((state, action, reward));
        if self.buffer.is_empty() {
            return Ok(None);
        }
        self.learn().map(Some)
    }

    fn learn(&mut self) -> Result<QUpdate, RlError> {
        let beta = self.beta();
        let batch = self.buffer.sample(self.config.batch_size, beta, &mut self.rng)?;
        let nf = self.n_features();
        let mut states = Vec::with_capacity(batch.transitions.len() * nf);
        let mut targets = Vec::with_capacity(batch.transitions.len());
        let mut actions = Vec::with_capacity(batch.transitions.len());
        for t in &batch.transitions {
            states.extend_from_slice(&t.s);
            actions.push(t.a);
            targets.push(ddqn_target(t.r, &t.s_next, self.config.gamma, &self.q)?);
        }
        let states = Tensor::new(vec![batch.transitions.len(), nf], states)?;
        let up = train_q(&mut self.q, &mut self.adam, &states, &actions, &targets, &batch.weights)?;
        for (&i, d) in batch.indices.iter().zip(&up.td_errors) {
            self.buffer.update_priority(i, d.abs() + PRIORITY_EPS);
        }
        self.updates += 1;
        if self.updates % self.config.target_sync == 0 {
            self.q.sync();
        }
        Ok(up)
    }

    /// Header metadata and named tensors for an agent checkpoint.
    pub fn checkpoint_parts(&self) -> (Value, Vec<(String, &Tensor)>) {
        let meta = json!({
            "kind": "agent",
            "config": self.config,
            "n_temporal": self.n_temporal,
            "n_spatial": self.n_spatial,
            "epsilon": self.epsilon,
            "counter": self.counter,
            "updates": self.updates,
        });
        let mut tensors = Vec::new();
        for (prefix, net) in [("online.", &self.q.online), ("target.", &self.q.target)] {
            for (name, t) in MLP_NAMES.iter().zip(&net.params) {
                tensors.push((format!("{prefix}{name}"), t));
            }
        }
        (meta, tensors)
    }

    /// Restores networks, schedule position and counters. Replay contents
    /// and optimiser moments are not persisted.
    pub fn from_checkpoint(mut c: Container) -> Result<Self, RlError> {
        let config: RlConfig = meta_field(&c.meta, "config")?;
        let n_temporal: usize = meta_field(&c.meta, "n_temporal")?;
        let n_spatial: usize = meta_field(&c.meta, "n_spatial")?;
        let epsilon: EpsilonSchedule = meta_field(&c.meta, "epsilon")?;
        let counter: MaskCounter = meta_field(&c.meta, "counter")?;
        let updates: u64 = meta_field(&c.meta, "updates")?;
        let mut net = |prefix: &str| -> Result<Mlp, RlError> {
            let params = MLP_NAMES
                .iter()
                .map(|n| c.take(&format!("{prefix}{n}")).ok_or_else(|| RlError::Checkpoint(format!("missing {prefix}{n}"))))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Mlp { params })
        };
        let online = net("online.")?;
        let target = net("target.")?;
        let nf = n_temporal + n_spatial;
        if online.n_features() != nf || counter.counts.len() != nf {
            return Err(RlError::Checkpoint("feature count mismatch".into()));
        }
        let mut agent = Agent::new(config, n_temporal, n_spatial, 1, 0, 0)?;
        agent.adam = AdamState::new(&online.params, agent.config.lr);
        agent.q = QNetworks { online, target };
        agent.epsilon = epsilon;
        agent.counter = counter;
        agent.updates = updates;
        Ok(agent)
    }
}

fn meta_field<T: serde::de::DeserializeOwned>(meta: &Value, key: &str) -> Result<T, RlError> {
    let v = meta.get(key).ok_or_else(|| RlError::Checkpoint(format!("missing {key}")))?;
    serde_json::from_value(v.clone()).map_err(|e| RlError::Checkpoint(format!("{key}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn schedule_matches_closed_form() {
        let mut e = EpsilonSchedule::new(1.0, 0.995, 0.05);
        for n in 0..2000u64 {
            assert_eq!(e.value(), 0.05f64.max(0.995f64.powf(n as f64)));
            let before = e.value();
            e.advance();
            assert!(e.value() <= before);
        }
        assert_eq!(e.value(), 0.05);
        assert_eq!(EpsilonSchedule::new(1.0, 0.995, 0.05).value(), 1.0);
    }

    #[test]
    fn greedy_and_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_action(&[1.0, 3.0, 2.0], 0.0, &mut rng), 1);
        assert_eq!(select_action(&[2.0, 2.0, 0.0], 0.0, &mut rng), 0);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = [0.0, 10.0, 0.0, 0.0, 0.0, 0.0];
        let mut counts = [0usize; 6];
        for _ in 0..10_000 {
            counts[select_action(&q, 1.0, &mut rng)] += 1;
        }
        let e = 10_000.0 / 6.0;
        let stat: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        let p = 1.0 - ChiSquared::new(5.0).unwrap().cdf(stat);
        assert!(p > 0.001, "{counts:?}");
    }

    #[test]
    fn reward_is_negated_loss() {
        assert_eq!(compute_reward(0.25).unwrap(), -0.25);
        assert_eq!(compute_reward(0.0).unwrap(), -0.0);
        assert!(compute_reward(0.1).unwrap() > compute_reward(0.2).unwrap());
        assert!(compute_reward(f64::NAN).is_err());
    }

    fn small_config() -> RlConfig {
        RlConfig { q_hidden: 16, batch_size: 8, target_sync: 5, ..RlConfig::default() }
    }

    #[test]
    fn one_mask_per_step_and_deferred_storage() {
        let mut a = Agent::new(small_config(), 3, 2, 100, 1, 2).unwrap();
        let mut s = vec![0.1, 0.2, 0.3, 0.4, 0.5];
        assert!(a.act(&s[..4]).is_err());
        for step in 0..12 {
            let m = a.act(&s).unwrap();
            let off = (0..5).filter(|&k| !m.keeps(k)).count();
            assert_eq!(off, 1);
            let up = a.observe(s.clone(), m.action.unwrap(), -0.1 * step as f64).unwrap();
            assert_eq!(up.is_some(), step > 0);
            assert_eq!(a.buffer.len(), step);
            s[0] += 0.01;
        }
        assert_eq!(a.counter.total, 12);
        assert_eq!(a.updates(), 11);
        // stored successor is the next observed state
        assert_eq!(a.buffer.get(0).s_next, a.buffer.get(1).s);
        // synced every five updates
        assert_ne!(a.q.online, a.q.target);
        assert!(a.beta() > 0.4 && a.beta() < 1.0);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut a = Agent::new(small_config(), 2, 1, 10, 3, 4).unwrap();
        let s = vec![0.0, 1.0, 2.0];
        for _ in 0..3 {
            let m = a.act(&s).unwrap();
            a.observe(s.clone(), m.action.unwrap(), -1.0).unwrap();
        }
        let (meta, tensors) = a.checkpoint_parts();
        let bytes = crate::checkpoint::encode(&meta, &tensors).unwrap();
        let b = Agent::from_checkpoint(crate::checkpoint::decode(&bytes).unwrap()).unwrap();
        assert_eq!(b.q, a.q);
        assert_eq!(b.counter, a.counter);
        assert_eq!(b.epsilon, a.epsilon);
        assert_eq!(b.updates(), a.updates());
    }
}
