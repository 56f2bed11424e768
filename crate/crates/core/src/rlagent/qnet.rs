use rand::Rng;

use super::RlError;
use crate::numcore::{AdamState, NumError, Tape, Tensor, Var};

/// Hidden width of both Q-network layers.
pub const Q_HIDDEN: usize = 128;

/// `F → 128 → 128 → F` ReLU MLP, stored as `[w1, b1, w2, b2, w3, b3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub params: Vec<Tensor>,
}

pub const MLP_NAMES: [&str; 6] = ["w1", "b1", "w2", "b2", "w3", "b3"];

impl Mlp {
    pub fn init<R: Rng>(n_features: usize, hidden: usize, rng: &mut R) -> Self {
        let dims = [(n_features, hidden), (hidden, hidden), (hidden, n_features)];
        let mut params = Vec::with_capacity(6);
        for (fan_in, out) in dims {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut draw = |n: usize| (0..n).map(|_| rng.gen_range(-bound..=bound)).collect::<Vec<f64>>();
            params.push(Tensor::new(vec![fan_in, out], draw(fan_in * out)).expect("weight shape"));
            params.push(Tensor::new(vec![1, out], draw(out)).expect("bias shape"));
        }
        Mlp { params }
    }

    pub fn n_features(&self) -> usize {
        self.params[0].rows()
    }

    pub fn hidden(&self) -> usize {
        self.params[0].cols()
    }

    /// Records `Q(S)` for a `[batch, F]` state matrix.
    pub fn forward_on_tape(tape: &mut Tape, p: &[Var], states: Var) -> Result<Var, NumError> {
        let mut x = states;
        for layer in 0..3 {
            let z = tape.matmul(x, p[2 * layer])?;
            let z = tape.add_row(z, p[2 * layer + 1])?;
            x = if layer < 2 { tape.relu(z)? } else { z };
        }
        Ok(x)
    }

    /// Q-values for a batch of states, one row each.
    pub fn q_batch(&self, states: &Tensor) -> Result<Tensor, NumError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.params.iter().map(|t| tape.constant(t.clone())).collect();
        let s = tape.constant(states.clone());
        let q = Self::forward_on_tape(&mut tape, &vars, s)?;
        Ok(tape.value(q).clone())
    }

    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>, NumError> {
        Ok(self.q_batch(&Tensor::row_vector(state))?.into_data())
    }
}

/// Online and target networks.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetworks {
    pub online: Mlp,
    pub target: Mlp,
}

impl QNetworks {
    /// Target starts as a copy of the online network.
    pub fn init<R: Rng>(n_features: usize, hidden: usize, rng: &mut R) -> Self {
        let online = Mlp::init(n_features, hidden, rng);
        QNetworks { target: online.clone(), online }
    }

    pub fn sync(&mut self) {
        self.target = self.online.clone();
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// `r + γ · Q_target(s', argmax_a Q_online(s', a))`.
pub fn ddqn_target(r: f64, s_next: &[f64], gamma: f64, q: &QNetworks) -> Result<f64, RlError> {
    if gamma == 0.0 {
        return Ok(r);
    }
    let a_star = argmax(&q.online.q_values(s_next)?);
    let q_next = q.target.q_values(s_next)?[a_star];
    Ok(r + gamma * q_next)
}

/// Outcome of one Q-network update.
#[derive(Debug, Clone, PartialEq)]
pub struct QUpdate {
    pub loss: f64,
    /// `y − Q(s, a; θ)` before the update
    pub td_errors: Vec<f64>,
}

/// One Adam step on the importance-weighted mean squared TD error.
pub fn train_q(
    q: &mut QNetworks,
    adam: &mut AdamState,
    states: &Tensor,
    actions: &[usize],
    targets: &[f64],
    weights: &[f64],
) -> Result<QUpdate, RlError> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = q.online.params.iter().map(|t| tape.param(t.clone())).collect();
    let s = tape.constant(states.clone());
    let qs = Mlp::forward_on_tape(&mut tape, &vars, s)?;
    let q_sa = tape.gather(qs, actions)?;
    let y = tape.constant(Tensor::column_vector(targets));
    let w = tape.constant(Tensor::column_vector(weights));
    let d = tape.sub(y, q_sa)?;
    let td_errors = tape.value(d).data().to_vec();
    let sq = tape.mul(d, d)?;
    let weighted = tape.mul(sq, w)?;
    let loss = tape.mean(weighted)?;
    let loss_value = tape.value(loss).data()[0];
    let mut g = tape.backward(loss)?;
    let grads: Vec<Tensor> = vars.iter().map(|&v| g.take(v)).collect();
    adam.step(&mut q.online.params, &grads)?;
    Ok(QUpdate { loss: loss_value, td_errors })
}
