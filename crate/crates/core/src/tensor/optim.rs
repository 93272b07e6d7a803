use super::{ParamStore, Real, Tensor};
use serde::{Deserialize, Serialize};

/// Adam hyper-parameters with a step-decay learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 coefficient added to the gradient before the moment updates.
    pub weight_decay: f64,
    /// Multiplier applied to the learning rate every `decay_period` epochs.
    pub decay_factor: f64,
    pub decay_period: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
            decay_factor: 0.1,
            decay_period: 10,
        }
    }
}

impl AdamConfig {
    /// Learning rate in effect during `epoch` (0-based).
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        let periods = epoch.checked_div(self.decay_period).unwrap_or(0);
        self.lr * self.decay_factor.powi(periods as i32)
    }
}

/// Adam optimizer state: first/second moments per parameter and a step
/// counter.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    config: AdamConfig,
    lr: f64,
    step: u64,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Real> Adam<F> {
    pub fn new(config: AdamConfig, store: &ParamStore<F>) -> Self {
        let zeros: Vec<Vec<F>> = store
            .entries()
            .iter()
            .map(|e| {
                if e.trainable {
                    vec![F::zero(); e.value.numel()]
                } else {
                    Vec::new()
                }
            })
            .collect();
        Self {
            config,
            lr: config.lr,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies the step-decay schedule for the given 0-based epoch.
    pub fn set_epoch(&mut self, epoch: usize) {
        self.lr = self.config.lr_at_epoch(epoch);
    }

    /// One update of every trainable parameter that has a gradient.
    pub fn step(&mut self, store: &mut ParamStore<F>, grads: &[Option<Tensor<F>>]) {
        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (F::from_f64_lossy(c.beta1), F::from_f64_lossy(c.beta2));
        let (one_b1, one_b2) = (F::from_f64_lossy(1.0 - c.beta1), F::from_f64_lossy(1.0 - c.beta2));
        let wd = F::from_f64_lossy(c.weight_decay);
        let step_size = F::from_f64_lossy(self.lr / bc1);
        let inv_bc2_sqrt = F::from_f64_lossy(1.0 / bc2.sqrt());
        let eps = F::from_f64_lossy(c.eps);

        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let i = id.index();
            if !store.entry(id).trainable {
                continue;
            }
            let Some(g) = grads.get(i).and_then(|g| g.as_ref()) else {
                continue;
            };
            let p = store.get_mut(id).data_mut();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for k in 0..p.len() {
                let gk = g.data()[k] + wd * p[k];
                m[k] = b1 * m[k] + one_b1 * gk;
                v[k] = b2 * v[k] + one_b2 * gk * gk;
                p[k] -= step_size * m[k] / (v[k].sqrt() * inv_bc2_sqrt + eps);
            }
        }
    }
}
