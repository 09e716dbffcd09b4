use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::nn::mlp::{GradientVector, ParameterVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..AdamConfig::default()
        }
    }
}

/// Moment estimates for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        AdamState {
            config,
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
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

    /// One bias-corrected Adam update. A gradient containing a non-finite
    /// value leaves both the parameters and the state untouched and returns
    /// [`Error::NonFinite`].
    pub fn step(&mut self, params: &mut ParameterVector, grads: &GradientVector) -> Result<()> {
        check_len("adam parameters", self.first_moment.len(), params.len())?;
        check_len("adam gradient", self.first_moment.len(), grads.len())?;
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient"));
        }
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let moments = self.first_moment.iter_mut().zip(self.second_moment.iter_mut());
        for ((p, &g), (m, v)) in params.as_mut_slice().iter_mut().zip(grads.as_slice()).zip(moments) {
            *m = flush(beta1 * *m + (1.0 - beta1) * g);
            *v = flush(beta2 * *v + (1.0 - beta2) * g * g);
            *p -= learning_rate * (*m / c1) / ((*v / c2).sqrt() + epsilon);
        }
        Ok(())
    }
}

/// Moments of parameters whose gradient stays zero decay geometrically into
/// the subnormal range, where arithmetic is very slow. Such values are
/// replaced by zero; the effect on any update is below 1e-300.
#[inline]
fn flush(x: f64) -> f64 {
    if x.abs() < f64::MIN_POSITIVE {
        0.0
    } else {
        x
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step(
    params: &mut ParameterVector,
    grads: &GradientVector,
    state: &mut AdamState,
) -> Result<()> {
    state.step(params, grads)
}

/// Scales all gradients jointly so their combined L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [&mut GradientVector], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let factor = max_norm / norm;
        for g in grads.iter_mut() {
            g.scale(factor);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(v: &[f64]) -> ParameterVector {
        ParameterVector::from_vec(v.to_vec()).unwrap()
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = params(&[0.5, -1.0]);
        let mut state = AdamState::new(2, AdamConfig::default());
        state.step(&mut p, &GradientVector::from_vec(vec![1.0, -2.0])).unwrap();
        let before_m: Vec<f64> = state.first_moment().to_vec();
        let mut fresh = params(&[0.5, -1.0]);
        let mut fresh_state = AdamState::new(2, AdamConfig::default());
        for _ in 0..5 {
            fresh_state
                .step(&mut fresh, &GradientVector::zeros(2))
                .unwrap();
        }
        assert_eq!(fresh.as_slice(), &[0.5, -1.0]);
        assert_eq!(fresh_state.step_count(), 5);
        state.step(&mut p, &GradientVector::zeros(2)).unwrap();
        for (a, b) in state.first_moment().iter().zip(&before_m) {
            assert!(a.abs() < b.abs());
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let lr = 0.01;
        let mut p = params(&[0.0, 0.0, 0.0]);
        let mut state = AdamState::new(3, AdamConfig::with_learning_rate(lr));
        state
            .step(&mut p, &GradientVector::from_vec(vec![3.0, -0.2, 1e-3]))
            .unwrap();
        for (x, sign) in p.as_slice().iter().zip([1.0, -1.0, 1.0]) {
            assert!((x + lr * sign).abs() < lr * 1e-4, "{x}");
        }
        assert_eq!(state.step_count(), 1);
    }

    /// Scalar reference written independently of the vector implementation.
    fn scalar_adam(grads: &[f64], lr: f64) -> Vec<f64> {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut x, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        let mut out = Vec::new();
        for (k, g) in grads.iter().enumerate() {
            let t = (k + 1) as f64;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powf(t));
            let vh = v / (1.0 - b2.powf(t));
            x -= lr * mh / (vh.sqrt() + eps);
            out.push(x);
        }
        out
    }

    #[test]
    fn three_steps_match_scalar_reference() {
        let grads = [1.0, 1.0, -1.0];
        let expected = scalar_adam(&grads, 0.01);
        let mut p = params(&[0.0]);
        let mut state = AdamState::new(1, AdamConfig::with_learning_rate(0.01));
        for (g, want) in grads.iter().zip(expected) {
            state.step(&mut p, &GradientVector::from_vec(vec![*g])).unwrap();
            assert!((p.as_slice()[0] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_gradient_skips_update() {
        let mut p = params(&[1.0, 2.0]);
        let mut state = AdamState::new(2, AdamConfig::default());
        let res = state.step(&mut p, &GradientVector::from_vec(vec![f64::NAN, 1.0]));
        assert!(matches!(res, Err(Error::NonFinite(_))));
        assert_eq!(p.as_slice(), &[1.0, 2.0]);
        assert_eq!(state.step_count(), 0);
        assert!(state.second_moment().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn global_norm_clipping() {
        let mut a = GradientVector::from_vec(vec![3.0, 0.0]);
        let mut b = GradientVector::from_vec(vec![0.0, 4.0]);
        let norm = clip_global_norm(&mut [&mut a, &mut b], 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        assert!((a.as_slice()[0] - 0.6).abs() < 1e-12);
        assert!((b.as_slice()[1] - 0.8).abs() < 1e-12);
        let mut c = GradientVector::from_vec(vec![0.1]);
        clip_global_norm(&mut [&mut c], 1.0);
        assert_eq!(c.as_slice(), &[0.1]);
    }
}
