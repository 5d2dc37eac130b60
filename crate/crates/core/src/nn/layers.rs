use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Mode, Param, Tensor2};
use crate::{Error, Result};

/// `y = x W^T + b`, `W` is `out x in`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor2>,
}

impl Dense {
    /// Kaiming-normal weights (`std = sqrt(2 / fan_in)`), zero bias.
    pub fn kaiming(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, (2.0 / inputs as f64).sqrt()).expect("positive std");
        let w = Array2::from_shape_fn((outputs, inputs), |_| normal.sample(rng));
        Self::from_weights(w, Array2::zeros((1, outputs)))
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self::from_weights(Array2::zeros((outputs, inputs)), Array2::zeros((1, outputs)))
    }

    /// `weight` is `out x in`, `bias` is `1 x out`.
    pub fn from_weights(weight: Array2<f64>, bias: Array2<f64>) -> Self {
        assert_eq!(bias.dim(), (1, weight.nrows()), "bias must be 1 x out");
        Dense {
            weight: Param::new(weight),
            bias: Param::new(bias),
            input: None,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.nrows()
    }

    fn compute(&self, x: &Tensor2) -> Result<Tensor2> {
        if x.ncols() != self.inputs() {
            return Err(Error::shape(format!(
                "dense layer expects {} inputs, got {}",
                self.inputs(),
                x.ncols()
            )));
        }
        Ok(x.dot(&self.weight.value.t()) + &self.bias.value)
    }

    fn forward(&mut self, x: &Tensor2) -> Result<Tensor2> {
        let y = self.compute(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor2) -> Result<Tensor2> {
        let x = self.input.as_ref().ok_or(Error::MissingForward)?;
        self.weight.grad += &grad.t().dot(x);
        self.bias.grad += &grad.sum_axis(Axis(0)).insert_axis(Axis(0));
        Ok(grad.dot(&self.weight.value))
    }
}

/// Per-feature batch normalization with learned scale and shift.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Array2<f64>,
    pub running_var: Array2<f64>,
    pub epsilon: f64,
    pub momentum: f64,
    cache: Option<(Tensor2, Array2<f64>)>,
    // statistics of the cached pass did not depend on the batch
    eval_cached: bool,
}

impl BatchNorm {
    pub fn new(features: usize) -> Self {
        BatchNorm {
            gamma: Param::new(Array2::ones((1, features))),
            beta: Param::new(Array2::zeros((1, features))),
            running_mean: Array2::zeros((1, features)),
            running_var: Array2::ones((1, features)),
            epsilon: 1e-5,
            momentum: 0.1,
            cache: None,
            eval_cached: false,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.value.ncols()
    }

    fn check(&self, x: &Tensor2) -> Result<()> {
        if x.ncols() != self.features() {
            return Err(Error::shape(format!(
                "batch norm expects {} features, got {}",
                self.features(),
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Normalized input and `1 / sqrt(var + eps)` using running statistics.
    fn eval_normalize(&self, x: &Tensor2) -> (Tensor2, Array2<f64>) {
        let inv_std = self.running_var.mapv(|v| 1.0 / (v + self.epsilon).sqrt());
        ((x - &self.running_mean) * &inv_std, inv_std)
    }

    fn infer(&self, x: &Tensor2) -> Result<Tensor2> {
        self.check(x)?;
        let (x_hat, _) = self.eval_normalize(x);
        Ok(x_hat * &self.gamma.value + &self.beta.value)
    }

    fn forward(&mut self, x: &Tensor2, mode: Mode) -> Result<Tensor2> {
        self.check(x)?;
        let (x_hat, inv_std) = match mode {
            Mode::Eval => self.eval_normalize(x),
            Mode::Train | Mode::Replay => {
                let n = x.nrows();
                if n < 2 {
                    return Err(Error::shape("batch norm needs at least 2 rows in train mode"));
                }
                let mean = x.mean_axis(Axis(0)).expect("non-empty").insert_axis(Axis(0));
                let centered = x - &mean;
                let var = centered
                    .mapv(|v| v * v)
                    .mean_axis(Axis(0))
                    .expect("non-empty")
                    .insert_axis(Axis(0));
                if mode == Mode::Train {
                    let m = self.momentum;
                    let unbiased = &var * (n as f64 / (n as f64 - 1.0));
                    self.running_mean = &self.running_mean * (1.0 - m) + &mean * m;
                    self.running_var = &self.running_var * (1.0 - m) + unbiased * m;
                }
                let inv_std = var.mapv(|v| 1.0 / (v + self.epsilon).sqrt());
                (centered * &inv_std, inv_std)
            }
        };
        let y = &x_hat * &self.gamma.value + &self.beta.value;
        self.cache = Some((x_hat, inv_std));
        self.eval_cached = mode == Mode::Eval;
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor2) -> Result<Tensor2> {
        let (x_hat, inv_std) = self.cache.as_ref().ok_or(Error::MissingForward)?;
        self.gamma.grad += &(grad * x_hat).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.beta.grad += &grad.sum_axis(Axis(0)).insert_axis(Axis(0));
        let g_hat = grad * &self.gamma.value;
        if self.eval_cached {
            return Ok(g_hat * inv_std);
        }
        let n = grad.nrows() as f64;
        let sum_g = g_hat.sum_axis(Axis(0)).insert_axis(Axis(0));
        let sum_gx = (&g_hat * x_hat).sum_axis(Axis(0)).insert_axis(Axis(0));
        Ok((g_hat * n - sum_g - x_hat * &sum_gx) * inv_std / n)
    }
}

/// Inverted dropout: kept units are scaled by `1 / (1 - rate)`.
#[derive(Clone, Debug)]
pub struct Dropout {
    pub rate: f64,
    rng: ChaCha8Rng,
    mask: Option<Tensor2>,
}

impl Dropout {
    pub fn new(rate: f64, seed: u64) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        Dropout {
            rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
            mask: None,
        }
    }

    fn forward(&mut self, x: &Tensor2, mode: Mode) -> Tensor2 {
        if mode == Mode::Eval || self.rate == 0.0 {
            self.mask = None;
            return x.clone();
        }
        let reuse = mode == Mode::Replay
            && self.mask.as_ref().is_some_and(|m| m.dim() == x.dim());
        if !reuse {
            let keep = 1.0 - self.rate;
            let scale = 1.0 / keep;
            let rng = &mut self.rng;
            self.mask = Some(Array2::from_shape_fn(x.raw_dim(), |_| {
                if rng.random::<f64>() < keep {
                    scale
                } else {
                    0.0
                }
            }));
        }
        x * self.mask.as_ref().expect("mask set")
    }

    fn backward(&self, grad: &Tensor2) -> Tensor2 {
        match &self.mask {
            Some(mask) => grad * mask,
            None => grad.clone(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Relu {
    mask: Option<Array2<bool>>,
}

impl Relu {
    fn forward(&mut self, x: &Tensor2) -> Tensor2 {
        self.mask = Some(x.mapv(|v| v > 0.0));
        x.mapv(|v| v.max(0.0))
    }

    fn backward(&self, grad: &Tensor2) -> Result<Tensor2> {
        let mask = self.mask.as_ref().ok_or(Error::MissingForward)?;
        let mut out = grad.clone();
        out.zip_mut_with(mask, |g, &m| {
            if !m {
                *g = 0.0;
            }
        });
        Ok(out)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Sigmoid {
    output: Option<Tensor2>,
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl Sigmoid {
    fn forward(&mut self, x: &Tensor2) -> Tensor2 {
        let y = x.mapv(sigmoid);
        self.output = Some(y.clone());
        y
    }

    fn backward(&self, grad: &Tensor2) -> Result<Tensor2> {
        let y = self.output.as_ref().ok_or(Error::MissingForward)?;
        Ok(grad * &y.mapv(|s| s * (1.0 - s)))
    }
}

/// `y = x + inner(x)`; `inner` is typically two
/// (dense, batch norm, ReLU, dropout) stages.
#[derive(Clone, Debug)]
pub struct ResidualBlock {
    pub inner: Sequential,
}

impl ResidualBlock {
    pub fn new(width: usize, dropout: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut layers = Vec::with_capacity(8);
        for _ in 0..2 {
            layers.push(Layer::Dense(Dense::kaiming(width, width, rng)));
            layers.push(Layer::BatchNorm(BatchNorm::new(width)));
            layers.push(Layer::Relu(Relu::default()));
            layers.push(Layer::Dropout(Dropout::new(dropout, rng.random())));
        }
        ResidualBlock {
            inner: Sequential::new(layers),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Layer {
    Dense(Dense),
    BatchNorm(BatchNorm),
    Relu(Relu),
    Dropout(Dropout),
    Sigmoid(Sigmoid),
    Residual(ResidualBlock),
}

impl Layer {
    fn forward(&mut self, x: &Tensor2, mode: Mode) -> Result<Tensor2> {
        match self {
            Layer::Dense(l) => l.forward(x),
            Layer::BatchNorm(l) => l.forward(x, mode),
            Layer::Relu(l) => Ok(l.forward(x)),
            Layer::Dropout(l) => Ok(l.forward(x, mode)),
            Layer::Sigmoid(l) => Ok(l.forward(x)),
            Layer::Residual(b) => Ok(x + &b.inner.forward(x, mode)?),
        }
    }

    fn infer(&self, x: &Tensor2) -> Result<Tensor2> {
        match self {
            Layer::Dense(l) => l.compute(x),
            Layer::BatchNorm(l) => l.infer(x),
            Layer::Relu(_) => Ok(x.mapv(|v| v.max(0.0))),
            Layer::Dropout(_) => Ok(x.clone()),
            Layer::Sigmoid(_) => Ok(x.mapv(sigmoid)),
            Layer::Residual(b) => Ok(x + &b.inner.infer(x)?),
        }
    }

    fn backward(&mut self, grad: &Tensor2) -> Result<Tensor2> {
        match self {
            Layer::Dense(l) => l.backward(grad),
            Layer::BatchNorm(l) => l.backward(grad),
            Layer::Relu(l) => l.backward(grad),
            Layer::Dropout(l) => Ok(l.backward(grad)),
            Layer::Sigmoid(l) => l.backward(grad),
            Layer::Residual(b) => Ok(grad + &b.inner.backward(grad)?),
        }
    }

    fn collect_params<'a>(&'a self, out: &mut Vec<&'a Param>) {
        match self {
            Layer::Dense(l) => out.extend([&l.weight, &l.bias]),
            Layer::BatchNorm(l) => out.extend([&l.gamma, &l.beta]),
            Layer::Residual(b) => b.inner.layers.iter().for_each(|l| l.collect_params(out)),
            _ => {}
        }
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        match self {
            Layer::Dense(l) => out.extend([&mut l.weight, &mut l.bias]),
            Layer::BatchNorm(l) => out.extend([&mut l.gamma, &mut l.beta]),
            Layer::Residual(b) => b
                .inner
                .layers
                .iter_mut()
                .for_each(|l| l.collect_params_mut(out)),
            _ => {}
        }
    }

    fn collect_state<'a>(&'a self, out: &mut Vec<&'a Array2<f64>>) {
        match self {
            Layer::Dense(l) => out.extend([&l.weight.value, &l.bias.value]),
            Layer::BatchNorm(l) => out.extend([
                &l.gamma.value,
                &l.beta.value,
                &l.running_mean,
                &l.running_var,
            ]),
            Layer::Residual(b) => b.inner.layers.iter().for_each(|l| l.collect_state(out)),
            _ => {}
        }
    }

    fn collect_state_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Array2<f64>>) {
        match self {
            Layer::Dense(l) => out.extend([&mut l.weight.value, &mut l.bias.value]),
            Layer::BatchNorm(l) => out.extend([
                &mut l.gamma.value,
                &mut l.beta.value,
                &mut l.running_mean,
                &mut l.running_var,
            ]),
            Layer::Residual(b) => b
                .inner
                .layers
                .iter_mut()
                .for_each(|l| l.collect_state_mut(out)),
            _ => {}
        }
    }
}

/// Ordered stack of layers. Parameter and checkpoint order is declaration
/// order, depth first.
#[derive(Clone, Debug)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Sequential { layers }
    }

    pub fn forward(&mut self, x: &Tensor2, mode: Mode) -> Result<Tensor2> {
        let mut h = self.layers.first_mut().map_or_else(|| Ok(x.clone()), |l| l.forward(x, mode))?;
        for layer in self.layers.iter_mut().skip(1) {
            h = layer.forward(&h, mode)?;
        }
        Ok(h)
    }

    /// Evaluation-mode forward pass without touching any cached state.
    pub fn infer(&self, x: &Tensor2) -> Result<Tensor2> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.infer(&h)?;
        }
        Ok(h)
    }

    /// Back-propagates `grad` (w.r.t. the last forward output), accumulating
    /// parameter gradients, and returns the gradient w.r.t. the input.
    pub fn backward(&mut self, grad: &Tensor2) -> Result<Tensor2> {
        let mut g = grad.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut out = Vec::new();
        self.layers.iter().for_each(|l| l.collect_params(&mut out));
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        self.layers
            .iter_mut()
            .for_each(|l| l.collect_params_mut(&mut out));
        out
    }

    /// Parameters followed by running statistics, in checkpoint order.
    pub fn state(&self) -> Vec<&Array2<f64>> {
        let mut out = Vec::new();
        self.layers.iter().for_each(|l| l.collect_state(&mut out));
        out
    }

    pub fn state_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = Vec::new();
        self.layers
            .iter_mut()
            .for_each(|l| l.collect_state_mut(&mut out));
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    pub fn input_width(&self) -> Option<usize> {
        self.layers.iter().find_map(|l| match l {
            Layer::Dense(d) => Some(d.inputs()),
            Layer::BatchNorm(b) => Some(b.features()),
            Layer::Residual(r) => r.inner.input_width(),
            _ => None,
        })
    }

    /// Flat parameter vector in [`Sequential::params`] order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.params()
            .iter()
            .flat_map(|p| p.value.iter().copied())
            .collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.params()
            .iter()
            .flat_map(|p| p.grad.iter().copied())
            .collect()
    }

    /// Mutable access to the `index`-th scalar of the flat parameter vector.
    pub fn flat_param_mut(&mut self, mut index: usize) -> Option<&mut f64> {
        for p in self.params_mut() {
            if index < p.len() {
                return p.value.iter_mut().nth(index);
            }
            index -= p.len();
        }
        None
    }
}
