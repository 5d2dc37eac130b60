//! Per-coordinate standardization of network inputs and targets.

use ndarray::Axis;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::nn::Tensor2;
use crate::{Error, Result};

/// Standard deviations at or below this are treated as zero.
const MIN_STD: f64 = 1e-9;

/// Mean and standard deviation of one coordinate block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl CoordStats {
    /// Column statistics of `data` (population std).
    pub fn fit(data: &Tensor2) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::invalid("cannot fit statistics on an empty set"));
        }
        let mean = data.mean_axis(Axis(0)).expect("non-empty");
        let std = data.std_axis(Axis(0), 0.0);
        Ok(CoordStats {
            mean: mean.to_vec(),
            std: std.to_vec(),
        })
    }

    pub fn identity(width: usize) -> Self {
        CoordStats {
            mean: vec![0.0; width],
            std: vec![1.0; width],
        }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    /// Divisor actually used for column `i`: zero-variance columns are only
    /// shifted.
    pub fn scale(&self, i: usize) -> f64 {
        if self.std[i] > MIN_STD {
            self.std[i]
        } else {
            1.0
        }
    }

    fn check(&self, t: &Tensor2) -> Result<()> {
        if t.ncols() != self.width() {
            return Err(Error::shape(format!(
                "statistics cover {} coordinates, data has {}",
                self.width(),
                t.ncols()
            )));
        }
        Ok(())
    }

    pub fn normalize(&self, t: &Tensor2) -> Result<Tensor2> {
        self.check(t)?;
        let mut out = t.clone();
        for mut row in out.rows_mut() {
            for (i, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[i]) / self.scale(i);
            }
        }
        Ok(out)
    }

    pub fn denormalize(&self, t: &Tensor2) -> Result<Tensor2> {
        self.check(t)?;
        let mut out = t.clone();
        for mut row in out.rows_mut() {
            for (i, v) in row.iter_mut().enumerate() {
                *v = *v * self.scale(i) + self.mean[i];
            }
        }
        Ok(out)
    }

    /// Gradient w.r.t. normalized values given the gradient w.r.t. the
    /// denormalized ones.
    pub fn denormalize_grad(&self, grad: &Tensor2) -> Result<Tensor2> {
        self.check(grad)?;
        let mut out = grad.clone();
        for mut row in out.rows_mut() {
            for (i, v) in row.iter_mut().enumerate() {
                *v *= self.scale(i);
            }
        }
        Ok(out)
    }
}

/// Training-split statistics for 2D inputs and 3D targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub input: CoordStats,
    pub output: CoordStats,
}

impl NormStats {
    pub fn fit(inputs2d: &Tensor2, targets3d: &Tensor2) -> Result<Self> {
        if inputs2d.nrows() != targets3d.nrows() {
            return Err(Error::shape("input and target row counts differ"));
        }
        Ok(NormStats {
            input: CoordStats::fit(inputs2d)?,
            output: CoordStats::fit(targets3d)?,
        })
    }

    pub fn identity(joints: usize) -> Self {
        NormStats {
            input: CoordStats::identity(2 * joints),
            output: CoordStats::identity(3 * joints),
        }
    }

    pub fn normalize_2d(&self, t: &Tensor2) -> Result<Tensor2> {
        self.input.normalize(t)
    }

    pub fn denormalize_2d(&self, t: &Tensor2) -> Result<Tensor2> {
        self.input.denormalize(t)
    }

    pub fn normalize_3d(&self, t: &Tensor2) -> Result<Tensor2> {
        self.output.normalize(t)
    }

    pub fn denormalize_3d(&self, t: &Tensor2) -> Result<Tensor2> {
        self.output.denormalize(t)
    }

    /// 16 hex digits of the SHA-256 of every statistic's bit pattern.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for block in [&self.input, &self.output] {
            h.update((block.width() as u64).to_le_bytes());
            for v in block.mean.iter().chain(&block.std) {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
