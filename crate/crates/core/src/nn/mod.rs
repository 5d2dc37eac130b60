//! Small feed-forward networks with hand-written reverse-mode gradients.
//!
//! Every layer caches what its backward pass needs during [`Sequential::forward`];
//! [`Sequential::infer`] is the pure evaluation-mode path and caches nothing.
//! Batches are row-major `rows = samples`, `cols = features`.

mod adam;
mod checkpoint;
pub mod gradcheck;
mod layers;

use ndarray::Array2;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{read_checkpoint, read_checkpoint_bytes, write_checkpoint, write_checkpoint_bytes, CHECKPOINT_VERSION};
pub use layers::{BatchNorm, Dense, Dropout, Layer, Relu, ResidualBlock, Sequential, Sigmoid};

/// Batch of feature rows.
pub type Tensor2 = Array2<f64>;

/// Forward-pass mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, fresh dropout masks, running statistics updated.
    Train,
    /// Like `Train` but dropout reuses its previous masks and running
    /// statistics stay untouched, so repeated passes are deterministic.
    /// Used by finite-difference checks.
    Replay,
    /// Running statistics, no dropout. Activations are still cached.
    Eval,
}

/// A trainable tensor and its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
}

impl Param {
    pub fn new(value: Array2<f64>) -> Self {
        let grad = Array2::zeros(value.raw_dim());
        Param { value, grad }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

pub(crate) fn check_finite(t: &Tensor2, what: &str) -> crate::Result<()> {
    if t.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(crate::Error::NonFinite(what.to_string()))
    }
}
