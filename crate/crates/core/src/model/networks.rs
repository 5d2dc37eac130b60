use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, Scheme};
use crate::nn::{BatchNorm, Dense, Dropout, Layer, Mode, Param, Relu, ResidualBlock, Sequential, Sigmoid, Tensor2};
use crate::skeleton::SkeletonTopology;
use crate::{Error, Result};

/// `2J -> width`, residual blocks, `width -> 3J`.
pub fn base_network(joints: usize, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Sequential {
    let w = cfg.base_width;
    let mut layers = vec![
        Layer::Dense(Dense::kaiming(2 * joints, w, rng)),
        Layer::BatchNorm(BatchNorm::new(w)),
        Layer::Relu(Relu::default()),
        Layer::Dropout(Dropout::new(cfg.dropout, rng.random())),
    ];
    for _ in 0..cfg.base_blocks {
        layers.push(Layer::Residual(ResidualBlock::new(w, cfg.dropout, rng)));
    }
    layers.push(Layer::Dense(Dense::kaiming(w, 3 * joints, rng)));
    Sequential::new(layers)
}

/// Residual refiner over `width` coordinates. The last layer starts at zero,
/// so a fresh refiner is the identity map.
pub fn refiner_network(width: usize, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Sequential {
    let [h1, h2] = cfg.refiner_widths;
    let inner = Sequential::new(vec![
        Layer::Dense(Dense::kaiming(width, h1, rng)),
        Layer::BatchNorm(BatchNorm::new(h1)),
        Layer::Relu(Relu::default()),
        Layer::Dropout(Dropout::new(cfg.dropout, rng.random())),
        Layer::Dense(Dense::kaiming(h1, h2, rng)),
        Layer::BatchNorm(BatchNorm::new(h2)),
        Layer::Relu(Relu::default()),
        Layer::Dropout(Dropout::new(cfg.dropout, rng.random())),
        Layer::Dense(Dense::zeros(h2, width)),
    ]);
    Sequential::new(vec![Layer::Residual(ResidualBlock { inner })])
}

/// Dense/ReLU stack ending in a single sigmoid score.
pub fn discriminator_network(input: usize, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Sequential {
    let mut layers = Vec::new();
    let mut width = input;
    for &w in &cfg.disc_widths {
        layers.push(Layer::Dense(Dense::kaiming(width, w, rng)));
        layers.push(Layer::Relu(Relu::default()));
        width = w;
    }
    layers.push(Layer::Dense(Dense::kaiming(width, 1, rng)));
    layers.push(Layer::Sigmoid(Sigmoid::default()));
    Sequential::new(layers)
}

/// Identifies one generator network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Base,
    Global,
    Part(usize),
}

/// All trainable networks of one pipeline.
#[derive(Clone, Debug)]
pub struct Networks {
    pub base: Sequential,
    pub global: Option<Sequential>,
    pub parts: Vec<Sequential>,
    pub disc: Option<Sequential>,
}

impl Networks {
    /// Generator networks come from one seeded stream in the order base,
    /// global, parts; the discriminator uses a separate stream so enabling it
    /// never changes generator initialization.
    pub fn new(topo: &SkeletonTopology, scheme: Scheme, cfg: &ModelConfig, seed: u64) -> Self {
        let j = topo.joint_count();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = base_network(j, cfg, &mut rng);
        let global = scheme
            .has_global_stage()
            .then(|| refiner_network(3 * j, cfg, &mut rng));
        let parts = if scheme.has_part_stage() {
            topo.parts()
                .iter()
                .map(|p| refiner_network(3 * p.joints.len(), cfg, &mut rng))
                .collect()
        } else {
            Vec::new()
        };
        let disc = scheme.adversary().map(|_| {
            let mut drng = ChaCha8Rng::seed_from_u64(seed);
            drng.set_stream(1);
            discriminator_network(3 * j, cfg, &mut drng)
        });
        Networks {
            base,
            global,
            parts,
            disc,
        }
    }

    pub fn get(&self, stage: Stage) -> Result<&Sequential> {
        match stage {
            Stage::Base => Ok(&self.base),
            Stage::Global => self.global.as_ref().ok_or_else(|| Error::invalid("scheme has no global refiner")),
            Stage::Part(k) => self
                .parts
                .get(k)
                .ok_or_else(|| Error::invalid(format!("scheme has no refiner for part {k}"))),
        }
    }

    pub fn get_mut(&mut self, stage: Stage) -> Result<&mut Sequential> {
        match stage {
            Stage::Base => Ok(&mut self.base),
            Stage::Global => self
                .global
                .as_mut()
                .ok_or_else(|| Error::invalid("scheme has no global refiner")),
            Stage::Part(k) => self
                .parts
                .get_mut(k)
                .ok_or_else(|| Error::invalid(format!("scheme has no refiner for part {k}"))),
        }
    }

    pub fn forward(&mut self, stage: Stage, x: &Tensor2, mode: Mode) -> Result<Tensor2> {
        self.get_mut(stage)?.forward(x, mode)
    }

    pub fn infer(&self, stage: Stage, x: &Tensor2) -> Result<Tensor2> {
        self.get(stage)?.infer(x)
    }

    /// Generator networks in checkpoint order.
    pub fn generator(&self) -> Vec<&Sequential> {
        let mut out = vec![&self.base];
        out.extend(self.global.iter());
        out.extend(self.parts.iter());
        out
    }

    pub fn generator_mut(&mut self) -> Vec<&mut Sequential> {
        let mut out = vec![&mut self.base];
        out.extend(self.global.iter_mut());
        out.extend(self.parts.iter_mut());
        out
    }

    /// Parameters of the generator networks, excluding the base network when
    /// `include_base` is false.
    pub fn generator_params_mut(&mut self, include_base: bool) -> Vec<&mut Param> {
        let mut out = Vec::new();
        for (i, net) in self.generator_mut().into_iter().enumerate() {
            if i > 0 || include_base {
                out.extend(net.params_mut());
            }
        }
        out
    }

    /// Every network including the discriminator, in checkpoint order.
    pub fn all(&self) -> Vec<&Sequential> {
        let mut out = self.generator();
        out.extend(self.disc.iter());
        out
    }

    pub fn all_mut(&mut self) -> Vec<&mut Sequential> {
        let mut out = vec![&mut self.base];
        out.extend(self.global.iter_mut());
        out.extend(self.parts.iter_mut());
        out.extend(self.disc.iter_mut());
        out
    }

    pub fn zero_grad(&mut self) {
        self.all_mut().into_iter().for_each(Sequential::zero_grad);
    }
}
