use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::GeneratorParams;
use crate::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment buffers plus the step counter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub step: u64,
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
}

/// Hyperparameters of a single update; `Default` is the standard setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: BETA1,
            beta2: BETA2,
            eps: EPSILON,
        }
    }
}

impl AdamState {
    /// Zeroed moments matching every tensor in `params`.
    pub fn for_params(params: &GeneratorParams) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|(k, t)| (k.clone(), Tensor::zeros(t.shape())))
                .collect()
        };
        AdamState {
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }
}

/// One bias-corrected Adam update. Parameters without a gradient entry are
/// treated as having zero gradient.
pub fn adam_step(
    params: &mut GeneratorParams,
    grads: &BTreeMap<String, Tensor>,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    adam_step_with(params, grads, state, lr, AdamConfig::default())
}

pub fn adam_step_with(
    params: &mut GeneratorParams,
    grads: &BTreeMap<String, Tensor>,
    state: &mut AdamState,
    lr: f64,
    cfg: AdamConfig,
) -> Result<()> {
    for (name, p) in params.iter() {
        let ok = |buf: &BTreeMap<String, Tensor>| buf.get(name).is_some_and(|b| b.shape() == p.shape());
        if !ok(&state.m) || !ok(&state.v) {
            return Err(Error::InvalidArgument(format!(
                "optimizer state does not match parameter {name}"
            )));
        }
        if let Some(g) = grads.get(name) {
            if g.shape() != p.shape() {
                return Err(Error::shape("adam_step", g.shape(), p.shape()));
            }
        }
    }
    if let Some(extra) = grads.keys().find(|k| params.get(k).is_none()) {
        return Err(Error::InvalidArgument(format!("gradient for unknown parameter {extra}")));
    }

    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (name, p) in params.iter_mut() {
        let m = state.m.get_mut(name).expect("checked above").data_mut();
        let v = state.v.get_mut(name).expect("checked above").data_mut();
        let g = grads.get(name).map(Tensor::data);
        for i in 0..m.len() {
            let gi = g.map_or(0.0, |g| g[i]);
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            let update = lr * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.eps);
            p.data_mut()[i] -= update;
        }
    }
    Ok(())
}
