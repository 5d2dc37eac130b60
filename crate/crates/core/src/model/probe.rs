//! Finite-difference probe over every generator weight of a pipeline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BatchForward, Pipeline, PipelineTransforms, StageGrads};
use crate::nn::gradcheck::Differentiable;
use crate::nn::{Mode, Tensor2};
use crate::Result;

/// Loss `sum(w * stage)` over the four pipeline intermediates, with the
/// transforms and dropout masks of one initial training pass held fixed.
pub struct PipelineProbe {
    pipe: Pipeline,
    x: Tensor2,
    fixed: PipelineTransforms,
    weights: [Tensor2; 4],
}

impl PipelineProbe {
    pub fn new(mut pipe: Pipeline, x: Tensor2, seed: u64) -> Result<Self> {
        let first = pipe.forward(&x, Mode::Train, None)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = std::array::from_fn(|_| {
            Tensor2::from_shape_fn(first.initial.raw_dim(), |_| rng.random_range(-1e-2..1e-2))
        });
        Ok(PipelineProbe {
            pipe,
            x,
            fixed: first.transforms,
            weights,
        })
    }

    fn loss_of(&self, out: &BatchForward) -> f64 {
        let parts = [&out.initial, &out.global_refined, &out.canonical_refined, &out.final_pose];
        parts.iter().zip(&self.weights).map(|(a, w)| (*a * w).sum()).sum()
    }

    fn locate(&mut self, mut i: usize) -> &mut f64 {
        for net in self.pipe.nets.generator_mut() {
            let n = net.param_count();
            if i < n {
                return net.flat_param_mut(i).expect("index within network");
            }
            i -= n;
        }
        panic!("parameter index out of range")
    }
}

impl Differentiable for PipelineProbe {
    fn param_count(&self) -> usize {
        self.pipe.nets.generator().iter().map(|n| n.param_count()).sum()
    }

    fn param(&self, i: usize) -> f64 {
        let mut i = i;
        for net in self.pipe.nets.generator() {
            let n = net.param_count();
            if i < n {
                return net.flat_params()[i];
            }
            i -= n;
        }
        panic!("parameter index out of range")
    }

    fn set_param(&mut self, i: usize, v: f64) {
        *self.locate(i) = v;
    }

    fn loss(&mut self) -> Result<f64> {
        let fixed = self.fixed.clone();
        let out = self.pipe.forward(&self.x, Mode::Replay, Some(&fixed))?;
        Ok(self.loss_of(&out))
    }

    fn loss_and_gradient(&mut self) -> Result<(f64, Vec<f64>)> {
        let loss = self.loss()?;
        self.pipe.nets.zero_grad();
        let [a, b, c, d] = self.weights.clone();
        self.pipe.backward(&StageGrads {
            initial: Some(a),
            global_refined: Some(b),
            canonical_refined: Some(c),
            final_pose: Some(d),
        })?;
        let grad = self.pipe.nets.generator().iter().flat_map(|n| n.flat_grads()).collect();
        Ok((loss, grad))
    }
}
