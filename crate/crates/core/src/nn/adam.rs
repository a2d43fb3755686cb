use serde::{Deserialize, Serialize};

use crate::nn::params::ParamStore;
use crate::nn::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Adam with bias correction; moments share the parameter store's layout.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    m: ParamStore<T>,
    v: ParamStore<T>,
    steps: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParamStore<T>) -> Self {
        Adam {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn moments(&self) -> (&ParamStore<T>, &ParamStore<T>) {
        (&self.m, &self.v)
    }

    /// Restores saved moments (for resuming).
    pub fn restore(config: AdamConfig, m: ParamStore<T>, v: ParamStore<T>, steps: u64) -> Self {
        assert!(m.same_layout(&v));
        Adam { config, m, v, steps }
    }

    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &ParamStore<T>) {
        assert!(params.same_layout(grads), "gradient layout differs from parameters");
        assert!(params.same_layout(&self.m), "optimizer state layout differs from parameters");
        self.steps += 1;
        let c = self.config;
        let t = self.steps as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let step_size = T::lit(c.lr / bc1);
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (one_b1, one_b2) = (T::lit(1.0 - c.beta1), T::lit(1.0 - c.beta2));
        let eps = T::lit(c.eps);
        let wd = T::lit(c.weight_decay);
        let inv_sqrt_bc2 = T::lit(1.0 / bc2.sqrt());
        for id in grads.ids().collect::<Vec<_>>() {
            let g = grads.get(id).data();
            let m = self.m.get_mut(id).data_mut();
            let v = self.v.get_mut(id).data_mut();
            let p = params.get_mut(id).data_mut();
            for i in 0..g.len() {
                let gi = g[i] + wd * p[i];
                m[i] = b1 * m[i] + one_b1 * gi;
                v[i] = b2 * v[i] + one_b2 * gi * gi;
                p[i] = p[i] - step_size * m[i] / (v[i].sqrt() * inv_sqrt_bc2 + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut p = ParamStore::<f64>::new();
        let id = p.add("w", Tensor::from_vec(&[3], vec![1.0, -1.0, 0.5]).unwrap());
        let mut g = p.zeros_like();
        g.get_mut(id).data_mut().copy_from_slice(&[2.0, -0.3, 0.0]);
        let mut opt = Adam::new(AdamConfig::with_lr(0.01), &p);
        opt.step(&mut p, &g);
        let w = p.get(id).data();
        assert!((w[0] - 0.99).abs() < 1e-6);
        assert!((w[1] + 0.99).abs() < 1e-6);
        assert_eq!(w[2], 0.5);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut p = ParamStore::<f64>::new();
        let id = p.add("w", Tensor::from_vec(&[2], vec![3.0, -2.0]).unwrap());
        let mut opt = Adam::new(AdamConfig::with_lr(0.05), &p);
        for _ in 0..2000 {
            let mut g = p.zeros_like();
            let w = p.get(id).data().to_vec();
            g.get_mut(id).data_mut().copy_from_slice(&[2.0 * (w[0] - 1.0), 2.0 * (w[1] + 0.5)]);
            opt.step(&mut p, &g);
        }
        let w = p.get(id).data();
        assert!((w[0] - 1.0).abs() < 1e-3 && (w[1] + 0.5).abs() < 1e-3);
    }
}
