//! Adam optimizer over a flat parameter vector.

use crate::error::{contract, numeric, shape, Result};

/// First/second moment estimates plus the step counter, over one flat
/// parameter vector. Hyperparameters are the cited defaults.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update in place.
///
/// The effective gradient is `grads + l1 * sign(params)`; with `lr == 0`
/// the parameters are left untouched (moments and the step counter still
/// advance).
pub fn adam_step(
    state: &mut AdamState,
    params: &mut [f64],
    grads: &[f64],
    lr: f64,
    l1: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(shape(format!(
            "adam_step: params {} / grads {} / state {} lengths differ",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if lr < 0.0 || l1 < 0.0 {
        return Err(contract(format!(
            "adam_step: lr {lr} and l1 {l1} must be nonnegative"
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(numeric(format!(
            "adam_step: non-finite gradient at parameter index {i}"
        )));
    }

    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i] + l1 * params[i].signum() * if params[i] == 0.0 { 0.0 } else { 1.0 };
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}
