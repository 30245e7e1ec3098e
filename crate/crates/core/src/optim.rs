//! First-order optimizer shared by the network trainers and the
//! data-consistency updates.

use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use crate::error::{invalid_arg, shape_err};
use crate::Result;

/// Adam state: first/second moment estimates, a step counter, and the usual
/// hyperparameters. Generic over the scalar so the same update serves f64
/// latents and f32 network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Float> {
    m: Vec<T>,
    v: Vec<T>,
    step: usize,
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Float> AdamState<T> {
    /// Defaults: beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8.
    pub fn new(num_params: usize, learning_rate: T) -> Self {
        Self {
            m: vec![T::zero(); num_params],
            v: vec![T::zero(); num_params],
            step: 0,
            learning_rate,
            beta1: T::from(0.9).unwrap(),
            beta2: T::from(0.999).unwrap(),
            epsilon: T::from(1e-8).unwrap(),
        }
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    /// One bias-corrected Adam update, in place.
    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(shape_err!(
                "adam: {} params, {} grads, state for {}",
                params.len(),
                grads.len(),
                self.m.len()
            ));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(invalid_arg!("adam: non-finite gradient at step {}", self.step + 1));
        }
        self.step += 1;
        let one = T::one();
        let bc1 = one - self.beta1.powi(self.step as i32);
        let bc2 = one - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] = params[i] - self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut adam = AdamState::<f64>::new(3, 0.1);
        let mut p = [1.0, -2.0, 0.5];
        adam.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, [1.0, -2.0, 0.5]);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_on_quadratic_matches_hand_evaluation() {
        // f(x) = x^2 at x = 1: g = 2, bias-corrected m_hat = 2, v_hat = 4,
        // so the first update is lr * 2 / (2 + eps) ~= lr.
        let mut adam = AdamState::<f64>::new(1, 0.1);
        let mut x = [1.0];
        let g = [2.0 * x[0]];
        adam.step(&mut x, &g).unwrap();
        assert!((x[0] - 0.9).abs() < 1e-8, "x = {}", x[0]);
    }

    #[test]
    fn converges_on_quadratic() {
        let mut adam = AdamState::<f64>::new(1, 0.1);
        let mut x = [1.0];
        for _ in 0..500 {
            let g = [2.0 * x[0]];
            adam.step(&mut x, &g).unwrap();
        }
        assert!(x[0].abs() < 1e-3, "x = {}", x[0]);
    }

    #[test]
    fn rejects_bad_input() {
        let mut adam = AdamState::<f64>::new(2, 0.1);
        let mut p = [0.0, 0.0];
        assert!(adam.step(&mut p, &[1.0]).is_err());
        assert!(adam.step(&mut p, &[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let mut adam = AdamState::<f32>::new(1, 0.1);
        let mut x = [1.0f32];
        for _ in 0..500 {
            let g = [2.0 * x[0]];
            adam.step(&mut x, &g).unwrap();
        }
        assert!(x[0].abs() < 1e-3);
    }
}
