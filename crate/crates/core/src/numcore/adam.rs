use serde::{Deserialize, Serialize};

use super::{NumError, Tensor};

/// Adam optimiser state for an ordered list of parameter tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &[Tensor], lr: f64) -> Self {
        Self::with_betas(params, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(params: &[Tensor], lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        AdamState { lr, beta1, beta2, eps, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update applied in place.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<(), NumError> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(NumError::ParamCount { expected: self.m.len(), got: params.len().min(grads.len()) });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(NumError::shape("adam_step", p.shape(), g.shape()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *pi -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = vec![Tensor::scalar(0.5)];
        let mut adam = AdamState::new(&p, 1e-3);
        adam.step(&mut p, &[Tensor::scalar(1.0)]).unwrap();
        // m̂ = 1, v̂ = 1 → Δ = -lr·1/(1+1e-8)
        let expected = 0.5 - 1e-3 / (1.0 + 1e-8);
        assert!((p[0].data()[0] - expected).abs() < 1e-15);
        assert!((p[0].data()[0] - 0.5 + 0.001).abs() < 1e-10);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn zero_gradient_is_identity() {
        let init = vec![Tensor::from_rows(&[[1.0, -2.0], [3.0, 0.25]])];
        let mut p = init.clone();
        let mut adam = AdamState::new(&p, 0.1);
        for _ in 0..5 {
            adam.step(&mut p, &[Tensor::zeros(&[2, 2])]).unwrap();
        }
        assert_eq!(p, init);
        assert_eq!(adam.step_count(), 5);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = vec![Tensor::zeros(&[2])];
        let mut adam = AdamState::new(&p, 0.1);
        assert!(adam.step(&mut p, &[Tensor::zeros(&[3])]).is_err());
    }

    #[test]
    fn repeated_runs_identical() {
        let run = || {
            let mut p = vec![Tensor::row_vector(&[0.3, -0.7, 1.1])];
            let mut adam = AdamState::new(&p, 0.01);
            for k in 0..20 {
                let g = p[0].map(|x| 2.0 * x + k as f64 * 0.01);
                adam.step(&mut p, &[g]).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }
}
