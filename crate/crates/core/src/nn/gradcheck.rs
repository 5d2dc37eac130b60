//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Mode, Sequential, Tensor2};
use crate::{Error, Result};

/// Something with a flat parameter vector and a deterministic scalar loss.
pub trait Differentiable {
    fn param_count(&self) -> usize;
    fn param(&self, index: usize) -> f64;
    fn set_param(&mut self, index: usize, value: f64);
    /// Loss at the current parameters. Must be a deterministic function of them.
    fn loss(&mut self) -> Result<f64>;
    /// Loss and the full analytic gradient.
    fn loss_and_gradient(&mut self) -> Result<(f64, Vec<f64>)>;
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub samples: usize,
    pub step: f64,
    /// Lower bound on the denominator `|analytic| + |numeric|`.
    pub floor: f64,
    /// Further lower bound as a fraction of the largest analytic gradient
    /// entry. Entries far below that scale are dominated by the rounding
    /// error of the difference quotient and are judged absolutely.
    pub scale_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            samples: 100,
            step: 1e-4,
            floor: 1e-7,
            scale_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub indices: Vec<usize>,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub relative_errors: Vec<f64>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.relative_errors.iter().copied().fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<(usize, f64, f64)> {
        let k = (0..self.relative_errors.len())
            .max_by(|&a, &b| self.relative_errors[a].total_cmp(&self.relative_errors[b]))?;
        Some((self.indices[k], self.analytic[k], self.numeric[k]))
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(floor)
}

/// Compares the analytic gradient against `(L(p + h) - L(p - h)) / 2h` on a
/// random subset of parameters.
pub fn check_gradients(
    target: &mut dyn Differentiable,
    config: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let n = target.param_count();
    if n == 0 {
        return Err(Error::invalid("nothing to check: zero parameters"));
    }
    let (_, grad) = target.loss_and_gradient()?;
    if grad.len() != n {
        return Err(Error::shape(format!(
            "gradient has {} entries for {n} parameters",
            grad.len()
        )));
    }
    let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let floor = config.floor.max(config.scale_floor * scale);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut indices = sample(&mut rng, n, config.samples.min(n)).into_vec();
    indices.sort_unstable();
    let h = config.step;
    let mut report = GradCheckReport {
        indices: indices.clone(),
        analytic: Vec::with_capacity(indices.len()),
        numeric: Vec::with_capacity(indices.len()),
        relative_errors: Vec::with_capacity(indices.len()),
    };
    for &i in &indices {
        let original = target.param(i);
        target.set_param(i, original + h);
        let plus = target.loss()?;
        target.set_param(i, original - h);
        let minus = target.loss()?;
        target.set_param(i, original);
        let numeric = (plus - minus) / (2.0 * h);
        report.analytic.push(grad[i]);
        report.numeric.push(numeric);
        report
            .relative_errors
            .push(relative_error(grad[i], numeric, floor));
    }
    Ok(report)
}

/// Network under test with the loss `sum(weights * net(input))`.
///
/// Either the network parameters or the input entries are the variables.
/// Dropout masks are drawn once on construction and then replayed.
pub struct NetProbe {
    pub net: Sequential,
    pub input: Tensor2,
    pub weights: Tensor2,
    pub wrt_input: bool,
    mode: Mode,
}

impl NetProbe {
    pub fn new(mut net: Sequential, input: Tensor2, seed: u64, wrt_input: bool) -> Result<Self> {
        let out = net.forward(&input, Mode::Train)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = Tensor2::from_shape_fn(out.raw_dim(), |_| rng.random_range(-1.0..1.0));
        Ok(NetProbe {
            net,
            input,
            weights,
            wrt_input,
            mode: Mode::Replay,
        })
    }

    /// Evaluation-mode variant (running statistics, no dropout).
    pub fn eval_mode(mut self) -> Self {
        self.mode = Mode::Eval;
        self
    }
}

impl Differentiable for NetProbe {
    fn param_count(&self) -> usize {
        if self.wrt_input {
            self.input.len()
        } else {
            self.net.param_count()
        }
    }

    fn param(&self, index: usize) -> f64 {
        if self.wrt_input {
            self.input.as_slice().expect("standard layout")[index]
        } else {
            self.net.flat_params()[index]
        }
    }

    fn set_param(&mut self, index: usize, value: f64) {
        if self.wrt_input {
            self.input.as_slice_mut().expect("standard layout")[index] = value;
        } else {
            *self.net.flat_param_mut(index).expect("index in range") = value;
        }
    }

    fn loss(&mut self) -> Result<f64> {
        let out = self.net.forward(&self.input, self.mode)?;
        Ok((&out * &self.weights).sum())
    }

    fn loss_and_gradient(&mut self) -> Result<(f64, Vec<f64>)> {
        let loss = self.loss()?;
        self.net.zero_grad();
        let dx = self.net.backward(&self.weights)?;
        let grad = if self.wrt_input {
            dx.iter().copied().collect()
        } else {
            self.net.flat_grads()
        };
        Ok((loss, grad))
    }
}
