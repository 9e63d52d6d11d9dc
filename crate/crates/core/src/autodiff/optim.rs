use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::error::{Error, Result};

/// AdamW hyperparameters. Defaults follow the usual DETR fine-tuning setup:
/// base rate 1e-4 and a global gradient-norm clamp of 0.1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global L2 norm the gradient is clipped to; `None` disables clipping.
    pub grad_clip: Option<f64>,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
            grad_clip: Some(0.1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub grad_norm: f64,
    /// Factor applied to the raw gradient (1 when no clipping happened).
    pub clip_scale: f64,
}

/// One AdamW update from the gradients accumulated in `store`.
///
/// The gradient is first rescaled so its global norm is at most
/// `grad_clip`; weight decay is decoupled from the adaptive step. Gradients
/// are left in place; callers zero them between iterations.
pub fn adamw_step(store: &mut ParamStore, cfg: &AdamWConfig) -> Result<StepStats> {
    if !(cfg.lr >= 0.0) {
        return Err(Error::Config(format!("learning rate must be >= 0, got {}", cfg.lr)));
    }
    for (_, p) in store.iter() {
        if !p.grad().is_finite() {
            return Err(Error::NonFiniteGradient(p.name().to_string()));
        }
    }
    let grad_norm = store.grad_norm();
    let clip_scale = match cfg.grad_clip {
        Some(max) if grad_norm > max && grad_norm > 0.0 => max / grad_norm,
        _ => 1.0,
    };

    for p in store.params_mut() {
        p.step += 1;
        let t = p.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let values = p.value.data_mut();
        let grads = p.grad.data();
        let m = p.first_moment.data_mut();
        let v = p.second_moment.data_mut();
        for i in 0..values.len() {
            let g = grads[i] * clip_scale;
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            values[i] -= cfg.lr * cfg.weight_decay * values[i];
            values[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(StepStats {
        grad_norm,
        clip_scale,
    })
}
