//! Bias-corrected Adam over a stack of weight rows.

use crate::error::{ConsensusError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moments shaped like the parameters, plus the number of
/// updates taken.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn zeros_like(params: &[Vec<f64>]) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|r| vec![0.0; r.len()]).collect();
        Self { first: zeros.clone(), second: zeros, t: 0 }
    }
}

fn check_shape(expected: &[Vec<f64>], found: &[Vec<f64>]) -> Result<()> {
    if expected.len() != found.len() {
        return Err(ConsensusError::DimensionMismatch { expected: expected.len(), found: found.len() });
    }
    for (a, b) in expected.iter().zip(found) {
        if a.len() != b.len() {
            return Err(ConsensusError::DimensionMismatch { expected: a.len(), found: b.len() });
        }
    }
    Ok(())
}

/// One Adam step on `params`, followed by `max(., 0)` when `project` is set.
///
/// Parameters and state are left untouched if the step would produce a
/// non-finite value.
pub fn adam_update(state: &mut AdamState, params: &mut [Vec<f64>], grads: &[Vec<f64>], cfg: &AdamConfig, project: bool) -> Result<()> {
    check_shape(params, grads)?;
    check_shape(params, &state.first)?;
    let t = state.t + 1;
    let bias1 = 1.0 - cfg.beta1.powi(t as i32);
    let bias2 = 1.0 - cfg.beta2.powi(t as i32);
    let mut next = state.clone();
    next.t = t;
    let mut updated = params.to_vec();
    for (r, row) in updated.iter_mut().enumerate() {
        for (e, p) in row.iter_mut().enumerate() {
            let grad = grads[r][e];
            let m = cfg.beta1 * state.first[r][e] + (1.0 - cfg.beta1) * grad;
            let v = cfg.beta2 * state.second[r][e] + (1.0 - cfg.beta2) * grad * grad;
            let mut value = *p - cfg.learning_rate * (m / bias1) / ((v / bias2).sqrt() + cfg.eps);
            if project {
                value = value.max(0.0);
            }
            if !value.is_finite() || !m.is_finite() || !v.is_finite() {
                return Err(ConsensusError::NonFinite(format!(
                    "adam step {t}: layer {r}, edge {e}, grad {grad}, param {}",
                    *p
                )));
            }
            next.first[r][e] = m;
            next.second[r][e] = v;
            *p = value;
        }
    }
    *state = next;
    params.clone_from_slice(&updated);
    Ok(())
}
