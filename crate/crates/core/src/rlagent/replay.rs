use rand::Rng;
use serde::{Deserialize, Serialize};

use super::RlError;

/// Floor added to |TD error| so every stored transition stays sampleable.
pub const PRIORITY_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: usize,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub priority: f64,
}

/// Binary sum tree over `capacity` leaves.
#[derive(Debug, Clone)]
struct SumTree {
    capacity: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    fn new(capacity: usize) -> Self {
        SumTree { capacity, nodes: vec![0.0; 2 * capacity.next_power_of_two()] }
    }

    fn leaves(&self) -> usize {
        self.nodes.len() / 2
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves() + i]
    }

    fn set(&mut self, i: usize, value: f64) {
        let mut k = self.leaves() + i;
        self.nodes[k] = value;
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Leaf whose cumulative mass interval contains `mass`.
    fn find(&self, mut mass: f64, len: usize) -> usize {
        let mut k = 1;
        while k < self.leaves() {
            let left = self.nodes[2 * k];
            if mass < left {
                k *= 2;
            } else {
                mass -= left;
                k = 2 * k + 1;
            }
        }
        // rounding can step past the last filled leaf
        (k - self.leaves()).min(len - 1).min(self.capacity - 1)
    }
}

/// Draws from a prioritised buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplaySample {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    pub transitions: Vec<Transition>,
}

/// Ring buffer with proportional prioritised sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    pub capacity: usize,
    pub alpha: f64,
    items: Vec<Transition>,
    tree: SumTree,
    next: usize,
    max_priority: f64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, alpha: f64) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer { capacity, alpha, items: Vec::new(), tree: SumTree::new(capacity), next: 0, max_priority: 1.0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// Stores a transition at the highest priority seen so far, overwriting
    /// the oldest once full.
    pub fn push(&mut self, mut t: Transition) -> usize {
        t.priority = self.max_priority;
        self.insert(t)
    }

    /// Stores a transition with its own priority.
    pub fn push_with_priority(&mut self, t: Transition) -> usize {
        self.max_priority = self.max_priority.max(t.priority);
        self.insert(t)
    }

    fn insert(&mut self, t: Transition) -> usize {
        let i = self.next;
        self.tree.set(i, t.priority.powf(self.alpha));
        if i < self.items.len() {
            self.items[i] = t;
        } else {
            self.items.push(t);
        }
        self.next = (self.next + 1) % self.capacity;
        i
    }

    /// Sampling probability `p_i^α / Σ_j p_j^α`.
    pub fn probability(&self, i: usize) -> f64 {
        self.tree.get(i) / self.tree.total()
    }

    pub fn update_priority(&mut self, i: usize, priority: f64) {
        self.items[i].priority = priority;
        self.max_priority = self.max_priority.max(priority);
        self.tree.set(i, priority.powf(self.alpha));
    }

    /// Independent proportional draws (so a batch larger than the buffer
    /// repeats items) with weights `(N·P(i))^{-β}` scaled by their maximum.
    pub fn sample<R: Rng>(&self, batch: usize, beta: f64, rng: &mut R) -> Result<ReplaySample, RlError> {
        if self.items.is_empty() {
            return Err(RlError::EmptyReplay);
        }
        let total = self.tree.total();
        let n = self.items.len() as f64;
        let mut indices = Vec::with_capacity(batch);
        let mut weights = Vec::with_capacity(batch);
        for _ in 0..batch {
            let i = self.tree.find(rng.gen::<f64>() * total, self.items.len());
            indices.push(i);
            weights.push((n * self.probability(i)).powf(-beta));
        }
        let max = weights.iter().cloned().fold(0.0, f64::max);
        for w in &mut weights {
            *w /= max;
        }
        let transitions = indices.iter().map(|&i| self.items[i].clone()).collect();
        Ok(ReplaySample { indices, weights, transitions })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn tr(a: usize, priority: f64) -> Transition {
        Transition { s: vec![0.0], a, r: 0.0, s_next: vec![0.0], priority }
    }

    fn chi2_p(counts: &[usize], probs: &[f64]) -> f64 {
        let n: usize = counts.iter().sum();
        let stat: f64 = counts
            .iter()
            .zip(probs)
            .map(|(&c, &p)| {
                let e = p * n as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
    }

    #[test]
    fn proportional_formula() {
        let mut b = ReplayBuffer::new(8, 1.0);
        b.push_with_priority(tr(0, 3.0));
        b.push_with_priority(tr(1, 1.0));
        assert!((b.probability(0) - 0.75).abs() < 1e-15);
        assert!((b.probability(1) - 0.25).abs() < 1e-15);
        let mut a = ReplayBuffer::new(8, 0.5);
        a.push_with_priority(tr(0, 4.0));
        a.push_with_priority(tr(1, 1.0));
        assert!((a.probability(0) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn equal_priorities_sample_uniformly() {
        let mut b = ReplayBuffer::new(16, 0.6);
        for k in 0..5 {
            b.push(tr(k, 1.0));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = b.sample(10_000, 0.4, &mut rng).unwrap();
        let mut counts = [0usize; 5];
        s.indices.iter().for_each(|&i| counts[i] += 1);
        assert!(chi2_p(&counts, &[0.2; 5]) > 0.001, "{counts:?}");
        assert!(s.weights.iter().all(|&w| (w - 1.0).abs() < 1e-12));
    }

    #[test]
    fn skewed_priorities_follow_alpha() {
        let mut b = ReplayBuffer::new(16, 0.6);
        let pr = [0.5, 1.0, 4.0, 2.0];
        for (k, &p) in pr.iter().enumerate() {
            b.push_with_priority(tr(k, p));
        }
        let z: f64 = pr.iter().map(|p: &f64| p.powf(0.6)).sum();
        let probs: Vec<f64> = pr.iter().map(|p| p.powf(0.6) / z).collect();
        let s = b.sample(10_000, 0.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut counts = [0usize; 4];
        s.indices.iter().for_each(|&i| counts[i] += 1);
        assert!(chi2_p(&counts, &probs) > 0.001, "{counts:?}");
        // β = 0 → unit weights
        assert!(s.weights.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn is_weights_normalised_by_max() {
        let mut b = ReplayBuffer::new(4, 1.0);
        b.push_with_priority(tr(0, 3.0));
        b.push_with_priority(tr(1, 1.0));
        let s = b.sample(200, 1.0, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        for (&i, &w) in s.indices.iter().zip(&s.weights) {
            // (2·P)^-1: 2/3 for the heavy item, 2 for the light one → normalised 1/3 and 1
            let expect = if i == 0 { 1.0 / 3.0 } else { 1.0 };
            assert!((w - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn ring_overwrite_and_oversized_batch() {
        let mut b = ReplayBuffer::new(3, 0.6);
        for k in 0..5 {
            b.push(tr(k, 1.0));
        }
        assert_eq!(b.len(), 3);
        let actions: Vec<usize> = (0..3).map(|i| b.get(i).a).collect();
        assert_eq!(actions, vec![3, 4, 2]);
        let s = b.sample(10, 0.5, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(s.indices.len(), 10);
        assert!(ReplayBuffer::new(2, 0.6).sample(1, 0.5, &mut ChaCha8Rng::seed_from_u64(3)).is_err());
    }

    #[test]
    fn new_items_get_max_priority() {
        let mut b = ReplayBuffer::new(4, 1.0);
        b.push(tr(0, 0.0));
        b.update_priority(0, 5.0);
        b.push(tr(1, 0.0));
        assert_eq!(b.get(1).priority, 5.0);
    }
}
