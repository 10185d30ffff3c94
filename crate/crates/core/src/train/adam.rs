use serde::{Deserialize, Serialize};

use crate::autograd::Grads;
use crate::model::ParamStore;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected adaptive-moment optimizer over a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: i32,
}

impl Adam {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor> = store.tensors().iter().map(|t| Tensor::zeros(&t.shape)).collect();
        Adam {
            config,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    /// One update with learning rate `lr`; parameters with `trainable[i] ==
    /// false` are left untouched.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads, lr: f64, trainable: &[bool]) {
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for (i, p) in store.tensors_mut().iter_mut().enumerate() {
            if !trainable[i] {
                continue;
            }
            let g = &grads.0[i].data;
            let m = &mut self.m[i].data;
            let v = &mut self.v[i].data;
            for j in 0..p.data.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                p.data[j] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::new(vec![3], vec![1.0, -2.0, 0.5]));
        let mut adam = Adam::new(&store, AdamConfig::default());
        let grads = Grads(vec![Tensor::new(vec![3], vec![0.3, -4.0, 0.0])]);
        adam.step(&mut store, &grads, 0.1, &[true]);
        let w = &store.tensors()[0].data;
        assert!((w[0] - 0.9).abs() < 1e-6);
        assert!((w[1] - -1.9).abs() < 1e-6);
        assert_eq!(w[2], 0.5);
    }

    #[test]
    fn frozen_parameters_stay_put() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::full(&[2], 1.0));
        let mut adam = Adam::new(&store, AdamConfig::default());
        let grads = Grads(vec![Tensor::full(&[2], 1.0)]);
        adam.step(&mut store, &grads, 0.1, &[false]);
        assert_eq!(store.tensors()[0].data, vec![1.0, 1.0]);
    }
}
