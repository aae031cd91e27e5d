//! Adam and the learning-rate schedule.

use super::TrainError;
use crate::num::Real;

/// Standard Adam with bias correction (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
#[derive(Debug, Clone)]
pub struct AdamState<F> {
    m: Vec<F>,
    v: Vec<F>,
    t: u64,
}

impl<F: Real> AdamState<F> {
    pub fn new(n: usize) -> Self {
        AdamState { m: vec![F::zero(); n], v: vec![F::zero(); n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [F], grads: &[F], lr: F) -> Result<(), TrainError> {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        let beta1 = F::of(0.9);
        let beta2 = F::of(0.999);
        let eps = F::of(1e-8);
        self.t += 1;
        let bc1 = F::one() - F::of(0.9f64.powi(self.t as i32));
        let bc2 = F::one() - F::of(0.999f64.powi(self.t as i32));
        for i in 0..params.len() {
            let g = grads[i];
            if !g.is_finite() {
                return Err(TrainError::NanGradient { index: i });
            }
            self.m[i] = beta1 * self.m[i] + (F::one() - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (F::one() - beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Exponential decay `base·factor^epoch`, clipped below at `min_lr`.
pub fn lr_schedule(epoch: usize, base_lr: f64, factor: f64, min_lr: f64) -> f64 {
    assert!(factor > 0.0 && factor <= 1.0);
    (base_lr * factor.powi(epoch as i32)).max(min_lr)
}
