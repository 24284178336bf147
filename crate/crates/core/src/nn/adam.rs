//! Adam with classical (coupled) L2 weight decay, gated by a trainable mask.

use serde::{Deserialize, Serialize};

use crate::mask::TaskMask;
use crate::nn::params::{Gradients, ParameterStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Added to the gradient as `weight_decay * param` before the moment updates.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Self {
            config,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update of every entry selected by `trainable`.
    ///
    /// Entries outside `trainable` are neither read nor written, so their
    /// parameter values and moments stay bit-identical.
    pub fn step(&mut self, params: &mut ParameterStore, grads: &Gradients, trainable: &TaskMask) {
        assert_eq!(params.len(), grads.values().len(), "gradient/parameter length");
        assert_eq!(params.len(), trainable.len(), "mask/parameter length");
        assert_eq!(params.len(), self.m.len(), "optimizer state length");
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            weight_decay,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let values = params.values_mut();
        for (i, on) in trainable.iter().enumerate() {
            if !on {
                continue;
            }
            let g = grads.values()[i] + weight_decay * values[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            values[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::Architecture;

    fn tiny() -> (ParameterStore, Gradients) {
        let arch = Architecture::new(1, 1);
        let mut p = ParameterStore::zeros(arch);
        p.values_mut().iter_mut().enumerate().for_each(|(i, v)| *v = 0.1 * i as f64);
        let mut g = Gradients::zeros(arch);
        g.values_mut().iter_mut().for_each(|v| *v = 1.0);
        (p, g)
    }

    #[test]
    fn nothing_trainable_is_bit_exact_noop() {
        let (mut p, g) = tiny();
        let before = p.clone();
        let mut st = AdamState::new(AdamConfig::default(), p.len());
        let none = TaskMask::empty(p.len());
        for _ in 0..10 {
            st.step(&mut p, &g, &none);
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let (mut p, g) = tiny();
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let before = p.values()[0];
        let mut st = AdamState::new(cfg, p.len());
        let mut only_first = TaskMask::empty(p.len());
        only_first.set(0, true);
        st.step(&mut p, &g, &only_first);
        // m_hat / sqrt(v_hat) = 1 on the first step
        let delta = p.values()[0] - before;
        assert!((delta + 0.01).abs() < 1e-9, "delta = {delta}");
    }

    #[test]
    fn frozen_entry_survives_large_gradients() {
        let (mut p, mut g) = tiny();
        g.values_mut().iter_mut().for_each(|v| *v = 1e6);
        let frozen = p.values()[3];
        let mut trainable = TaskMask::full(p.len());
        trainable.set(3, false);
        let mut st = AdamState::new(AdamConfig::default(), p.len());
        for _ in 0..100 {
            st.step(&mut p, &g, &trainable);
        }
        assert_eq!(p.values()[3].to_bits(), frozen.to_bits());
        assert_ne!(p.values()[2], 0.2);
    }

    #[test]
    fn weight_decay_only_touches_trainable_entries() {
        let (mut p, _) = tiny();
        let g = Gradients::zeros(p.arch());
        let mut trainable = TaskMask::empty(p.len());
        trainable.set(5, true);
        let before = p.clone();
        let mut st = AdamState::new(AdamConfig::default(), p.len());
        st.step(&mut p, &g, &trainable);
        for i in 0..p.len() {
            if i == 5 {
                assert!(p.values()[i] < before.values()[i]);
            } else {
                assert_eq!(p.values()[i], before.values()[i]);
            }
        }
    }
}
