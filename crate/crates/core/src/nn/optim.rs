use std::f64::consts::PI;

use super::{GradientSet, ParameterSet};
use crate::error::{MudasError, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment accumulators, one flat vector per trainable
/// tensor, plus the number of updates taken.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn zeros_like(params: &ParameterSet) -> Self {
        let shapes: Vec<usize> = params.trainable().iter().map(|(_, t)| t.len()).collect();
        Self {
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(params: &mut ParameterSet, grads: &GradientSet, lr: f64) -> Result<()> {
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(MudasError::config(format!("learning rate must be > 0, got {lr}")));
    }
    let names: Vec<String> = params.trainable().into_iter().map(|(n, _)| n).collect();
    let grad_tensors = grads.tensors();
    if grad_tensors.len() != names.len() {
        return Err(MudasError::shape("gradient tensors", names.len(), grad_tensors.len()));
    }
    for ((name, g), (_, p)) in names.iter().zip(&grad_tensors).zip(params.trainable()) {
        if g.len() != p.len() {
            return Err(MudasError::shape("gradient tensor", p.len(), g.len()));
        }
        if let Some((i, v)) = g.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(MudasError::NonFinite {
                name: name.clone(),
                detail: format!("gradient entry {i} is {v}"),
            });
        }
    }

    if params.optimizer.first.len() != names.len() || params.optimizer.second.len() != names.len() {
        return Err(MudasError::shape(
            "adam moments",
            names.len(),
            params.optimizer.first.len(),
        ));
    }
    let mut state = std::mem::take(&mut params.optimizer);
    state.step += 1;
    let t = state.step as i32;
    let correction1 = 1.0 - ADAM_BETA1.powi(t);
    let correction2 = 1.0 - ADAM_BETA2.powi(t);
    for (((p, g), m), v) in params
        .trainable_mut()
        .into_iter()
        .zip(grad_tensors)
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        for i in 0..p.len() {
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
            let m_hat = m[i] / correction1;
            let v_hat = v[i] / correction2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    params.optimizer = state;
    Ok(())
}

/// Cosine decay from `lr_max` at step 0 to `lr_min` at `total_steps`.
pub fn cosine_lr(step: u64, total_steps: u64, lr_max: f64, lr_min: f64) -> Result<f64> {
    if total_steps == 0 {
        return Err(MudasError::config("total_steps must be >= 1"));
    }
    if lr_max < lr_min {
        return Err(MudasError::config("lr_max must be >= lr_min"));
    }
    let progress = step.min(total_steps) as f64 / total_steps as f64;
    Ok(lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (PI * progress).cos()))
}
