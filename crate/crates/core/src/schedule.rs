//! Variance-preserving noise schedules.

use alloc::vec::Vec;

use crate::error::invalid_arg;
use crate::{Error, Result};

/// Discrete VP schedule: `beta_t` for `t = 1..=T`, `alpha_t = 1 - beta_t`, and
/// the cumulative products `alpha_bar_t` with the convention `alpha_bar_0 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    beta: Vec<f64>,      // index t-1 holds beta_t
    alpha_bar: Vec<f64>, // index t holds alpha_bar_t, alpha_bar[0] = 1
}

impl NoiseSchedule {
    /// Linear beta ramp from `beta_start` to `beta_end`, endpoints inclusive.
    pub fn linear(num_steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if num_steps < 1 {
            return Err(invalid_arg!("schedule needs at least one step"));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(invalid_arg!(
                "betas must satisfy 0 < start <= end < 1, got [{beta_start}, {beta_end}]"
            ));
        }
        let beta: Vec<f64> = if num_steps == 1 {
            alloc::vec![beta_start]
        } else {
            (0..num_steps)
                .map(|i| {
                    beta_start + (beta_end - beta_start) * i as f64 / (num_steps - 1) as f64
                })
                .collect()
        };
        let mut alpha_bar = Vec::with_capacity(num_steps + 1);
        alpha_bar.push(1.0);
        let mut prod = 1.0;
        for &b in &beta {
            prod *= 1.0 - b;
            alpha_bar.push(prod);
        }
        Ok(Self { beta, alpha_bar })
    }

    /// The default training schedule: 1000 steps, beta from 1e-4 to 0.02.
    pub fn default_linear() -> Self {
        Self::linear(1000, 1e-4, 0.02).expect("canonical parameters are valid")
    }

    pub fn num_steps(&self) -> usize {
        self.beta.len()
    }

    /// `beta_t`, valid for `1 <= t <= T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    /// `alpha_t = 1 - beta_t`, valid for `1 <= t <= T`.
    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.beta[t - 1]
    }

    /// `alpha_bar_t`, valid for `0 <= t <= T` with `alpha_bar_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub(crate) fn check_step(&self, t: usize, allow_zero: bool) -> Result<()> {
        let lo = usize::from(!allow_zero);
        if t < lo || t > self.num_steps() {
            return Err(Error::StepOutOfRange { t, max: self.num_steps() });
        }
        Ok(())
    }
}
