//! Losses, normalization and the alternating adversarial training loop.

mod data;
mod losses;
mod normalize;
mod trainer;

use serde::{Deserialize, Serialize};

pub use data::TrainingSet;
pub use losses::{bce, discriminator_loss, generator_loss, pose_loss, BCE_CLAMP};
pub use normalize::{CoordStats, NormStats};
pub use trainer::{EpochRecord, Trainer};

use crate::model::ModelConfig;
use crate::{Error, Result};

/// Which frames map ground truth into a refinement stage's coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupervisionFrames {
    /// The frames the prediction itself went through, so a perfect stage
    /// output maps back onto the ground truth exactly.
    Estimate,
    /// Frames rebuilt from the ground-truth joints.
    GroundTruth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the adversarial generator term.
    pub lambda: f64,
    pub generator_lr: f64,
    pub discriminator_lr: f64,
    pub batch_size: usize,
    /// L2-only epochs for the base network before joint training.
    pub pretrain_epochs: usize,
    /// Joint training epochs.
    pub epochs: usize,
    pub seed: u64,
    /// Discriminator updates per generator update.
    pub disc_updates_per_batch: usize,
    /// Length unit of the pose loss; `l2_pose` is reported in this unit squared.
    pub loss_unit_mm: f64,
    pub supervision: SupervisionFrames,
    /// When false the discriminator is never queried or updated.
    pub adversarial: bool,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.001,
            generator_lr: 1e-3,
            discriminator_lr: 1e-4,
            batch_size: 64,
            pretrain_epochs: 50,
            epochs: 50,
            seed: 0,
            disc_updates_per_batch: 1,
            loss_unit_mm: 100.0,
            supervision: SupervisionFrames::Estimate,
            adversarial: true,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config("lambda must be finite and non-negative".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2".into()));
        }
        if !(self.generator_lr > 0.0 && self.discriminator_lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.disc_updates_per_batch == 0 {
            return Err(Error::Config("disc_updates_per_batch must be at least 1".into()));
        }
        if !(self.loss_unit_mm > 0.0 && self.loss_unit_mm.is_finite()) {
            return Err(Error::Config("loss_unit_mm must be positive".into()));
        }
        self.model.validate()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Epoch-mean losses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    /// Pose loss in `pose_unit_mm` squared.
    pub l2_pose: f64,
    /// Generator BCE in nats (0 without a discriminator).
    pub generator_adv: f64,
    /// Discriminator BCE in nats (0 without a discriminator).
    pub discriminator: f64,
    /// `l2_pose + lambda * generator_adv`.
    pub total: f64,
    pub lambda: f64,
    pub pose_unit_mm: f64,
    pub batches: usize,
    /// Generator updates refused because of non-finite gradients.
    pub skipped_steps: u64,
}

impl LossReport {
    pub fn new(l2_pose: f64, generator_adv: f64, discriminator: f64, lambda: f64, pose_unit_mm: f64) -> Self {
        LossReport {
            l2_pose,
            generator_adv,
            discriminator,
            total: l2_pose + lambda * generator_adv,
            lambda,
            pose_unit_mm,
            batches: 0,
            skipped_steps: 0,
        }
    }

    pub fn l2_pose_mm2(&self) -> f64 {
        self.l2_pose * self.pose_unit_mm * self.pose_unit_mm
    }

    pub fn is_consistent(&self) -> bool {
        let parts = [self.l2_pose, self.generator_adv, self.discriminator, self.total];
        parts.iter().all(|v| v.is_finite() && *v >= 0.0)
            && (self.total - (self.l2_pose + self.lambda * self.generator_adv)).abs() <= 1e-12
    }
}
