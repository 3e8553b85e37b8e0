use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Element, Parameter, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if !ok {
            return Err(Error::invalid(format!("invalid Adam settings {self:?}")));
        }
        Ok(())
    }
}

/// Moment estimates for one model, in parameter order. Moments are kept in
/// `f64` whatever the parameter precision.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Tensor<f64>>,
    pub v: Vec<Tensor<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

/// One Adam update from the gradients stored in `params`.
///
/// Every gradient is checked before anything is written, so a non-finite
/// gradient leaves parameters and moments untouched.
pub fn adam_step<T: Element>(params: &mut [&mut Parameter<T>], state: &mut AdamState) -> Result<()> {
    state.config.validate()?;
    for p in params.iter() {
        if !p.grad.is_finite() {
            return Err(Error::NonFinite(format!("gradient of {}", p.name)));
        }
    }
    if state.m.is_empty() {
        state.m = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        state.v = state.m.clone();
    }
    if state.m.len() != params.len() {
        return Err(Error::invalid(format!(
            "optimizer tracks {} parameters, model has {}",
            state.m.len(),
            params.len()
        )));
    }
    for (p, m) in params.iter().zip(&state.m) {
        if p.value.shape() != m.shape() {
            return Err(Error::ShapeMismatch {
                context: "adam moment vs parameter",
                left: m.shape().to_vec(),
                right: p.value.shape().to_vec(),
            });
        }
    }
    state.t += 1;
    let AdamConfig {
        learning_rate: lr,
        beta1: b1,
        beta2: b2,
        epsilon: eps,
    } = state.config;
    let c1 = 1.0 - b1.powi(state.t.min(i32::MAX as u64) as i32);
    let c2 = 1.0 - b2.powi(state.t.min(i32::MAX as u64) as i32);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let grads: Vec<f64> = p.grad.data().iter().map(|g| g.as_f64()).collect();
        for (((w, g), mi), vi) in p
            .value
            .data_mut()
            .iter_mut()
            .zip(grads)
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = b1 * *mi + (1.0 - b1) * g;
            *vi = b2 * *vi + (1.0 - b2) * g * g;
            let step = lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
            *w = T::from_f64(w.as_f64() - step);
        }
    }
    Ok(())
}
