use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::{DenseNetwork, GradientSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn new(learning_rate: f64, beta1: f64) -> Self {
        AdamConfig {
            learning_rate,
            beta1,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// Moment accumulators for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first: GradientSet,
    second: GradientSet,
    pub step: u64,
}

impl AdamState {
    pub fn new(net: &DenseNetwork, config: AdamConfig) -> Self {
        AdamState {
            config,
            first: GradientSet::zeros_like(net),
            second: GradientSet::zeros_like(net),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of `net` in place.
pub fn adam_step(net: &mut DenseNetwork, grads: &GradientSet, state: &mut AdamState) -> Result<()> {
    if !grads.matches(net) || !state.first.matches(net) {
        return Err(Error::shape("gradients shaped like the network", "mismatched gradient set"));
    }
    state.step += 1;
    let AdamConfig {
        learning_rate: lr,
        beta1: b1,
        beta2: b2,
        epsilon: eps,
    } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let update = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        let denom = v_hat.sqrt() + eps;
        if denom > 0.0 {
            *p -= lr * m_hat / denom;
        }
    };
    for (((layer, g), m), v) in net
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.first.layers)
        .zip(&mut state.second.layers)
    {
        Zip::from(&mut layer.weights)
            .and(&g.weights)
            .and(&mut m.weights)
            .and(&mut v.weights)
            .for_each(update);
        Zip::from(&mut layer.biases)
            .and(&g.biases)
            .and(&mut m.biases)
            .and(&mut v.biases)
            .for_each(update);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{chain_specs, init_network, Activation};

    fn ones_like(net: &DenseNetwork, value: f64) -> GradientSet {
        let mut g = GradientSet::zeros_like(net);
        for l in &mut g.layers {
            l.weights.fill(value);
            l.biases.fill(value);
        }
        g
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut net = init_network(&chain_specs(&[3, 2], Activation::Identity), 0).unwrap();
        let before = net.flatten();
        let mut state = AdamState::new(&net, AdamConfig::default());
        let g = ones_like(&net, 1.0);
        adam_step(&mut net, &g, &mut state).unwrap();
        for (a, b) in net.flatten().iter().zip(&before) {
            assert!((a - b + 0.001).abs() < 1e-10);
        }
        assert_eq!(state.step, 1);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut net = init_network(&chain_specs(&[3, 2], Activation::Relu), 0).unwrap();
        let before = net.clone();
        let mut state = AdamState::new(&net, AdamConfig::default());
        let g = GradientSet::zeros_like(&net);
        adam_step(&mut net, &g, &mut state).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn zero_betas_give_sign_descent() {
        let mut net = init_network(&chain_specs(&[1, 1], Activation::Identity), 0).unwrap();
        let cfg = AdamConfig {
            learning_rate: 0.05,
            beta1: 0.0,
            beta2: 0.0,
            epsilon: 0.0,
        };
        let mut state = AdamState::new(&net, cfg);
        for g in [3.7, -0.02, 120.0] {
            let before = net.flatten();
            let grads = ones_like(&net, g);
            adam_step(&mut net, &grads, &mut state).unwrap();
            for (a, b) in net.flatten().iter().zip(&before) {
                assert!((b - a - 0.05 * g.signum()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_trajectories() {
        let run = || {
            let mut net = init_network(&chain_specs(&[2, 3, 1], Activation::Sigmoid), 9).unwrap();
            let mut state = AdamState::new(&net, AdamConfig::new(0.01, 0.5));
            for k in 0..5 {
                let g = ones_like(&net, k as f64 - 2.0);
                adam_step(&mut net, &g, &mut state).unwrap();
            }
            net
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch() {
        let mut a = init_network(&chain_specs(&[2, 3], Activation::Identity), 0).unwrap();
        let b = init_network(&chain_specs(&[2, 4], Activation::Identity), 0).unwrap();
        let mut state = AdamState::new(&a, AdamConfig::default());
        assert!(adam_step(&mut a, &GradientSet::zeros_like(&b), &mut state).is_err());
    }
}
