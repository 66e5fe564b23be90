use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
    config: AdamConfig,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
            config,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }
}

pub(crate) fn check_gradients(params_len: usize, grads: &[f64], state: &AdamState) -> Result<()> {
    if grads.len() != params_len || state.first_moment.len() != params_len {
        return Err(Error::dim(
            "adam_step",
            format!("{params_len} gradients and moments"),
            format!("{} gradients, {} moments", grads.len(), state.first_moment.len()),
        ));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("adam_step gradient"));
    }
    Ok(())
}

/// One bias-corrected Adam update. On error the parameters and the state are
/// left untouched.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    check_gradients(params.len(), grads, state)?;
    apply(params, grads, state, lr);
    Ok(())
}

pub(crate) fn apply(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) {
    let AdamConfig { beta1, beta2, epsilon } = state.config;
    state.step_count += 1;
    let t = state.step_count as i32;
    let correction1 = 1.0 - beta1.powi(t);
    let correction2 = 1.0 - beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        let m = beta1 * state.first_moment[i] + (1.0 - beta1) * g;
        let v = beta2 * state.second_moment[i] + (1.0 - beta2) * g * g;
        state.first_moment[i] = m;
        state.second_moment[i] = v;
        let m_hat = m / correction1;
        let v_hat = v / correction2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.5, -2.0];
        let mut s = AdamState::new(2, AdamConfig::default());
        adam_step(&mut p, &[0.0, 0.0], &mut s, 0.1).unwrap();
        assert_eq!(p, vec![1.5, -2.0]);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn first_step_magnitude_is_lr() {
        let mut p = vec![0.0];
        let mut s = AdamState::new(1, AdamConfig::default());
        adam_step(&mut p, &[1.0], &mut s, 0.1).unwrap();
        assert!((p[0] + 0.1).abs() < 1e-7);
    }

    #[test]
    fn matches_scalar_oracle_on_quadratic() {
        // independent scalar Adam, f(x) = x², grad 2x
        let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8f64, 0.1f64);
        let (mut x, mut m, mut v) = (5.0f64, 0.0f64, 0.0f64);
        let mut expected = Vec::new();
        for t in 1..=10 {
            let g = 2.0 * x;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= lr * mh / (vh.sqrt() + eps);
            expected.push(x);
        }

        let mut p = vec![5.0];
        let mut s = AdamState::new(1, AdamConfig::default());
        for e in expected {
            let g = [2.0 * p[0]];
            adam_step(&mut p, &g, &mut s, lr).unwrap();
            assert!((p[0] - e).abs() < 1e-12);
        }
        assert_eq!(s.step_count(), 10);
        assert!(s.second_moment().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn non_finite_gradient_is_rejected_untouched() {
        let mut p = vec![1.0, 2.0];
        let mut s = AdamState::new(2, AdamConfig::default());
        let before = s.clone();
        assert!(matches!(
            adam_step(&mut p, &[0.5, f64::NAN], &mut s, 0.1),
            Err(Error::NonFinite(_))
        ));
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(s, before);
    }
}
