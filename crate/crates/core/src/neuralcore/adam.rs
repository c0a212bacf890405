//! Adam without weight decay, and the per-epoch exponential learning-rate decay.

use serde::{Deserialize, Serialize};

use super::Real;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for one parameter array.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<R> {
    pub m: Vec<R>,
    pub v: Vec<R>,
    pub t: u64,
}

impl<R: Real> AdamState<R> {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![R::zero(); len],
            v: vec![R::zero(); len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
///
/// The whole array is rejected, untouched, if any gradient is non-finite.
pub fn adam_step<R: Real>(
    name: &str,
    params: &mut [R],
    grads: &[R],
    state: &mut AdamState<R>,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::shape(
            "adam_step",
            format!("{} parameters, gradients and moments for {name}", params.len()),
            format!("{} gradients, {} moments", grads.len(), state.m.len()),
        ));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient of {name}[{i}]")));
    }
    state.t += 1;
    let t = state.t as i32;
    let b1 = R::from_f64_lossy(cfg.beta1);
    let b2 = R::from_f64_lossy(cfg.beta2);
    let one = R::one();
    let bias1 = R::from_f64_lossy(1.0 - cfg.beta1.powi(t));
    let bias2 = R::from_f64_lossy(1.0 - cfg.beta2.powi(t));
    let lr = R::from_f64_lossy(lr);
    let eps = R::from_f64_lossy(cfg.eps);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// `lr0 * gamma^epoch`.
pub fn lr_schedule(epoch: usize, lr0: f64, gamma: f64) -> f64 {
    lr0 * gamma.powi(epoch as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![0.5f64, -1.0, 2.0];
        let mut s = AdamState::new(3);
        adam_step("w", &mut p, &[0.0; 3], &mut s, 1e-3, &AdamConfig::default()).unwrap();
        assert_eq!(p, vec![0.5, -1.0, 2.0]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let mut p = vec![0.0f64; 4];
        let g = [3.0, -0.02, 1e-3, -250.0];
        let mut s = AdamState::new(4);
        adam_step("w", &mut p, &g, &mut s, 1e-3, &AdamConfig::default()).unwrap();
        for (pi, gi) in p.iter().zip(g) {
            // |g| / (|g| + eps) differs from 1 by at most eps / |g|
            assert!((pi + 1e-3 * gi.signum()).abs() < 1e-3 * 1e-5, "{pi}");
        }
    }

    #[test]
    fn repeated_steps_are_bounded_by_lr() {
        let mut p = vec![0.0f64; 2];
        let mut s = AdamState::new(2);
        let cfg = AdamConfig::default();
        let mut prev = p.clone();
        for _ in 0..2 {
            adam_step("w", &mut p, &[0.7, -4.0], &mut s, 1e-3, &cfg).unwrap();
            for (a, b) in p.iter().zip(&prev) {
                assert!((a - b).abs() <= 1e-3 * (1.0 + 1e-6));
            }
            prev = p.clone();
        }
        assert_eq!(s.t, 2);
        assert!(s.v.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = vec![1.0f32; 3];
        let mut s = AdamState::new(3);
        let err = adam_step("bn2.gamma", &mut p, &[0.0, f32::NAN, 1.0], &mut s, 1e-3, &AdamConfig::default())
            .unwrap_err()
            .to_string();
        assert!(err.contains("bn2.gamma[1]"), "{err}");
        assert_eq!(p, vec![1.0; 3]);
        assert_eq!(s.t, 0);
    }

    #[test]
    fn schedule_values() {
        assert_eq!(lr_schedule(0, 1e-3, 0.8), 1e-3);
        assert!((lr_schedule(1, 1e-3, 0.8) - 8e-4).abs() < 1e-18);
        assert!((lr_schedule(2, 1e-3, 0.8) - 6.4e-4).abs() < 1e-18);
    }
}
