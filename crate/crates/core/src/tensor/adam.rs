//! Bias-corrected Adam updates.

use crate::error::{Error, Result};

/// Optimizer constants. The defaults are the usual
/// beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8.
#[derive(Clone, Copy, Debug)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamParams {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamParams { learning_rate, ..Default::default() }
    }
}

/// Per-parameter-array state: step count and both moment accumulators.
#[derive(Clone, Debug)]
pub struct AdamState {
    step: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState { step: 0, first: vec![0.0; len], second: vec![0.0; len] }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update of `values` in place.
pub fn adam_step(
    params: &AdamParams,
    state: &mut AdamState,
    values: &mut [f64],
    grad: &[f64],
) -> Result<()> {
    if grad.len() != values.len() || state.first.len() != values.len() {
        return Err(Error::Contract(format!(
            "adam_step: parameter has {} values, gradient {}, state {}",
            values.len(),
            grad.len(),
            state.first.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - params.beta1.powi(t);
    let bias2 = 1.0 - params.beta2.powi(t);
    for i in 0..values.len() {
        let g = grad[i];
        state.first[i] = params.beta1 * state.first[i] + (1.0 - params.beta1) * g;
        state.second[i] = params.beta2 * state.second[i] + (1.0 - params.beta2) * g * g;
        let m_hat = state.first[i] / bias1;
        let v_hat = state.second[i] / bias2;
        values[i] -= params.learning_rate * m_hat / (v_hat.sqrt() + params.epsilon);
    }
    Ok(())
}
