use std::f64::consts::PI;

use crate::params::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            betas: (0.8, 0.9),
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Adam with bias-corrected moments and decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(store: &ParamStore, config: AdamWConfig) -> Self {
        let zeros: Vec<Vec<f64>> = store.ids().map(|id| vec![0.0; store.grad(id).len()]).collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore, lr: f64) {
        self.step += 1;
        let (b1, b2) = self.config.betas;
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let ids: Vec<_> = store.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let g = store.grad(id).to_vec();
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            let w = store.value_mut(id).data_mut();
            for i in 0..w.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                w[i] -= lr * (mhat / (vhat.sqrt() + self.config.eps) + self.config.weight_decay * w[i]);
            }
        }
    }
}

/// Cosine decay from `base` at step 0 to 0 at `total`.
pub fn cosine_lr(base: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    let t = step.min(total) as f64 / total as f64;
    0.5 * base * (1.0 + (PI * t).cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::tensor::Tensor;

    #[test]
    fn one_step_descends_on_square() {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::scalar(1.0)).unwrap();
        let mut g = Graph::new();
        let w = g.param(&s, id);
        let l = g.square(w);
        let grads = g.backward(l).unwrap();
        g.accumulate(&grads, &mut s);
        let mut opt = AdamW::new(&s, AdamWConfig::default());
        opt.step(&mut s, 0.1);
        assert!(s.value(id).data()[0] < 1.0);
    }

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(2e-4, 0, 100), 2e-4);
        assert!((cosine_lr(2e-4, 50, 100) - 1e-4).abs() < 1e-18);
        assert!(cosine_lr(2e-4, 100, 100).abs() < 1e-20);
    }
}
