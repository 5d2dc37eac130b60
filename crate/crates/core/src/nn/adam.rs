use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::Param;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are bound to parameter position,
/// so every call must pass the same parameters in the same order.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    skipped: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            skipped: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Number of updates refused because a gradient was not finite.
    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    /// Applies one update from the accumulated gradients and zeroes them.
    /// Returns `Ok(false)` and leaves values untouched if any gradient entry is
    /// NaN or infinite.
    pub fn step(&mut self, params: &mut [&mut Param]) -> Result<bool> {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Array2::zeros(p.value.raw_dim())).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len()
            || self.m.iter().zip(params.iter()).any(|(m, p)| m.dim() != p.value.dim())
        {
            return Err(Error::shape("optimizer parameter layout changed between steps"));
        }
        if params.iter().any(|p| p.grad.iter().any(|g| !g.is_finite())) {
            self.skipped += 1;
            params.iter_mut().for_each(|p| p.zero_grad());
            return Ok(false);
        }
        self.step += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.config;
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            ndarray::Zip::from(&mut p.value)
                .and(&mut p.grad)
                .and(m)
                .and(v)
                .for_each(|w, g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * *g;
                    *v = b2 * *v + (1.0 - b2) * *g * *g;
                    *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                    *g = 0.0;
                });
        }
        Ok(true)
    }
}
