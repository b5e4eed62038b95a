//! Adam optimizer state and update rule with bias correction.

use super::{NeuralError, ParameterSet};

#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f32>,
    v: Vec<f32>,
    t: u64,
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl AdamState {
    pub fn new(param_len: usize, learning_rate: f32) -> Self {
        Self {
            m: vec![0.0; param_len],
            v: vec![0.0; param_len],
            t: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn timestep(&self) -> u64 {
        self.t
    }
}

/// One Adam update: `p -= lr * m_hat / (sqrt(v_hat) + eps)` with
/// bias-corrected moment estimates.
pub fn adam_step(
    params: &mut ParameterSet,
    grads: &[f32],
    state: &mut AdamState,
) -> Result<(), NeuralError> {
    if grads.len() != params.len() {
        return Err(NeuralError::LengthMismatch {
            what: "gradients",
            expected: params.len(),
            got: grads.len(),
        });
    }
    if state.m.len() != params.len() {
        return Err(NeuralError::LengthMismatch {
            what: "optimizer moments",
            expected: params.len(),
            got: state.m.len(),
        });
    }
    state.t += 1;
    let c1 = (1.0 - (state.beta1 as f64).powi(state.t as i32)) as f32;
    let c2 = (1.0 - (state.beta2 as f64).powi(state.t as i32)) as f32;
    let (b1, b2) = (state.beta1, state.beta2);
    let (lr, eps) = (state.learning_rate, state.epsilon);
    for (((p, &g), m), v) in params
        .values_mut()
        .iter_mut()
        .zip(grads)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
