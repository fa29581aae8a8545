use alloc::string::ToString;
use alloc::vec::Vec;

use super::{ParamStore, Tensor, TensorError};
use crate::math;

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 4e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for every parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &ParamStore, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor> = params
            .tensors()
            .iter()
            .map(|p| Tensor::zeros_like_shape(p.shape()))
            .collect();
        AdamState {
            config,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update. Parameters are left untouched when any
    /// gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor]) -> Result<(), TensorError> {
        if grads.len() != params.len() {
            return Err(TensorError::InvalidShape {
                shape: super::Shape::scalar(),
                len: grads.len(),
            });
        }
        for (id, g) in params.ids().zip(grads) {
            if g.shape() != params.get(id).shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "adam_step",
                    left: params.get(id).shape(),
                    right: g.shape(),
                });
            }
            if !g.is_finite() {
                return Err(TensorError::NonFiniteGradient(params.name(id).to_string()));
            }
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - math::pow(beta1, self.t as f64);
        let bc2 = 1.0 - math::pow(beta2, self.t as f64);
        for (k, id) in params.ids().enumerate().collect::<Vec<_>>() {
            let g = grads[k].data();
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            let p = params.get_mut(id).data_mut();
            for j in 0..p.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p[j] -= lr * mhat / (math::sqrt(vhat) + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut ps = ParamStore::new();
        ps.add("w", Tensor::row(vec![1.0]));
        let mut adam = AdamState::new(&ps, AdamConfig::with_lr(0.004));
        adam.step(&mut ps, &[Tensor::row(vec![1.0])]).unwrap();
        // m̂ = 1, v̂ = 1 after bias correction
        let expected = 1.0 - 0.004 / (1.0 + 1e-8);
        assert!((ps.tensors()[0].item() - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut ps = ParamStore::new();
        ps.add("w", Tensor::row(vec![0.3, -0.2]));
        let before = ps.clone();
        let mut adam = AdamState::new(&ps, AdamConfig::default());
        for _ in 0..5 {
            adam.step(&mut ps, &[Tensor::row(vec![0.0, 0.0])]).unwrap();
        }
        assert_eq!(ps, before);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut ps = ParamStore::new();
        ps.add("w", Tensor::row(vec![0.3]));
        let mut adam = AdamState::new(&ps, AdamConfig::default());
        let err = adam.step(&mut ps, &[Tensor::row(vec![f64::NAN])]).unwrap_err();
        assert_eq!(err, TensorError::NonFiniteGradient("w".into()));
        assert_eq!(adam.steps(), 0);
    }
}
