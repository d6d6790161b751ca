use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParamStore};
use super::tensor::Tensor;
use super::AutodiffError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 1e-6,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam with weight decay folded into the gradient as an L2 term.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor> = store
            .iter()
            .map(|(_, t)| Tensor::new(t.shape().to_vec(), vec![0.0; t.len()]).expect("valid shape"))
            .collect();
        Self {
            config,
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<(), AutodiffError> {
        if grads.len() != store.len() || self.first.len() != store.len() {
            return Err(AutodiffError::ParamCount {
                expected: store.len(),
                got: grads.len(),
            });
        }
        for id in store.ids() {
            if !grads.get(id).is_finite() {
                return Err(AutodiffError::NonFiniteGradient(store.name(id).to_string()));
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            weight_decay,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for id in store.ids() {
            let g = grads.get(id).data();
            let m = self.first[id.0].data_mut();
            let v = self.second[id.0].data_mut();
            let p = store.get_mut(id).data_mut();
            for i in 0..p.len() {
                let gi = g[i] + weight_decay * p[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= lr * mhat / (vhat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}
