use ndarray::{concatenate, s, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{bce, pose_loss, LossReport, NormStats, SupervisionFrames, TrainConfig, TrainingSet};
use crate::geometry::{frame_to_transform, global_frame, RigidTransform};
use crate::metrics::mpjpe_rows;
use crate::model::{pull_back_rows, transform_rows, AdversarySpace, Pipeline, Scheme, StageGrads};
use crate::nn::{Adam, AdamConfig, Mode, Tensor2};
use crate::skeleton::Pose3D;
use crate::{Error, Result};

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: String,
    pub l2: f64,
    pub l2_mm2: f64,
    pub adv_g: f64,
    pub adv_d: f64,
    pub total: f64,
    pub eval_mpjpe: Option<f64>,
}

impl EpochRecord {
    fn new(epoch: usize, phase: &str, r: &LossReport, eval_mpjpe: Option<f64>) -> Self {
        EpochRecord {
            epoch,
            phase: phase.into(),
            l2: r.l2_pose,
            l2_mm2: r.l2_pose_mm2(),
            adv_g: r.generator_adv,
            adv_d: r.discriminator,
            total: r.total,
            eval_mpjpe,
        }
    }
}

/// Owns a pipeline and its optimizers for one training run.
pub struct Trainer {
    pub pipeline: Pipeline,
    pub config: TrainConfig,
    base_opt: Adam,
    gen_opt: Adam,
    disc_opt: Adam,
    rng: ChaCha8Rng,
    pretrain_epochs_done: usize,
    epochs_done: usize,
}

/// Each row's own global canonical transform; identity when degenerate.
fn own_canonical(rows: &Tensor2, pipe: &Pipeline) -> Vec<RigidTransform> {
    let topo = pipe.topology();
    (0..rows.nrows())
        .map(|i| {
            let pose = Pose3D::from_flat(rows.row(i).as_slice().expect("standard layout"))
                .expect("finite targets");
            frame_to_transform(&global_frame(&pose, topo)).unwrap_or_default()
        })
        .collect()
}

impl Trainer {
    pub fn new(pipeline: Pipeline, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        Ok(Trainer {
            pipeline,
            base_opt: Adam::new(AdamConfig::with_lr(config.generator_lr)),
            gen_opt: Adam::new(AdamConfig::with_lr(config.generator_lr)),
            disc_opt: Adam::new(AdamConfig::with_lr(config.discriminator_lr)),
            rng: ChaCha8Rng::seed_from_u64(seed),
            config,
            pretrain_epochs_done: 0,
            epochs_done: 0,
        })
    }

    /// Fits normalization statistics on `train` and builds a fresh pipeline.
    pub fn from_data(
        train: &TrainingSet,
        topo: crate::skeleton::SkeletonTopology,
        scheme: Scheme,
        config: TrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        let stats = NormStats::fit(&train.inputs, &train.targets)?;
        let pipe = Pipeline::new(topo, scheme, config.model.clone(), stats, config.seed)?;
        Self::new(pipe, config)
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    /// Generator updates refused because of non-finite gradients.
    pub fn skipped_steps(&self) -> u64 {
        self.gen_opt.skipped() + self.base_opt.skipped()
    }

    fn batches(&mut self, n: usize) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);
        order
            .chunks(self.config.batch_size)
            .filter(|c| c.len() >= 2)
            .map(<[usize]>::to_vec)
            .collect()
    }

    fn check_stats(&self, data: &TrainingSet) -> Result<()> {
        let j3 = self.pipeline.stats().output.width();
        if data.targets.ncols() != j3 || data.inputs.ncols() != self.pipeline.stats().input.width() {
            return Err(Error::shape("data does not match the pipeline topology"));
        }
        if data.len() < 2 {
            return Err(Error::invalid("training needs at least 2 samples"));
        }
        Ok(())
    }

    /// One L2-only epoch over the base network.
    pub fn pretrain_epoch(&mut self, data: &TrainingSet) -> Result<LossReport> {
        self.check_stats(data)?;
        let unit = self.config.loss_unit_mm;
        let mut sum = 0.0;
        let batches = self.batches(data.len());
        for rows in &batches {
            let x = self.pipeline.stats().normalize_2d(&data.inputs.select(Axis(0), rows))?;
            let y = data.targets.select(Axis(0), rows);
            let out = self.pipeline.nets.base.forward(&x, Mode::Train)?;
            let pred = self.pipeline.stats().denormalize_3d(&out)?;
            let (loss, grads) = pose_loss(&[&pred], &[&y], unit)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "pretrain epoch {}: pose loss {loss}",
                    self.pretrain_epochs_done + 1
                )));
            }
            let dy = self.pipeline.stats().output.denormalize_grad(&grads[0])?;
            self.pipeline.nets.base.backward(&dy)?;
            let mut params = self.pipeline.nets.base.params_mut();
            self.base_opt.step(&mut params)?;
            sum += loss;
        }
        self.pretrain_epochs_done += 1;
        let mut r = LossReport::new(sum / batches.len().max(1) as f64, 0.0, 0.0, self.config.lambda, unit);
        r.batches = batches.len();
        r.skipped_steps = self.base_opt.skipped();
        Ok(r)
    }

    /// Runs `epochs` pretraining epochs.
    pub fn pretrain_base(&mut self, data: &TrainingSet, epochs: usize) -> Result<Vec<LossReport>> {
        (0..epochs).map(|_| self.pretrain_epoch(data)).collect()
    }

    /// One epoch of joint training: per batch a discriminator update on
    /// detached outputs, then a generator update on `L_pose + lambda * L_G`.
    pub fn train_epoch(&mut self, data: &TrainingSet) -> Result<LossReport> {
        self.check_stats(data)?;
        let unit = self.config.loss_unit_mm;
        let lambda = self.config.lambda;
        let scheme = self.pipeline.scheme();
        let adversary = scheme.adversary().filter(|_| self.config.adversarial);
        let disc_unit = self.pipeline.config().coord_unit_mm;

        let (mut l2_sum, mut g_sum, mut d_sum) = (0.0, 0.0, 0.0);
        let batches = self.batches(data.len());
        for (b, rows) in batches.iter().enumerate() {
            let x = self.pipeline.stats().normalize_2d(&data.inputs.select(Axis(0), rows))?;
            let y = data.targets.select(Axis(0), rows);
            let out = self.pipeline.forward(&x, Mode::Train, None)?;
            let n = out.rows();

            // Stage targets.
            let canon_target = if scheme.has_global_stage() || scheme.has_part_stage() {
                match self.config.supervision {
                    SupervisionFrames::Estimate => transform_rows(&y, &out.transforms.global),
                    SupervisionFrames::GroundTruth => {
                        transform_rows(&y, &self.pipeline.global_transforms(&y))
                    }
                }
            } else {
                y.clone()
            };
            let mut grads = StageGrads::default();
            let l2 = match (scheme.has_global_stage(), scheme.has_part_stage()) {
                (false, false) => {
                    let (l, mut g) = pose_loss(&[&out.initial], &[&y], unit)?;
                    grads.initial = g.pop();
                    l
                }
                (true, false) => {
                    let (l, mut g) = pose_loss(&[&out.global_refined], &[&canon_target], unit)?;
                    grads.global_refined = g.pop();
                    l
                }
                (false, true) => {
                    let (l, mut g) = pose_loss(&[&out.canonical_refined], &[&canon_target], unit)?;
                    grads.canonical_refined = g.pop();
                    l
                }
                (true, true) => {
                    let (l, mut g) = pose_loss(
                        &[&out.global_refined, &out.canonical_refined],
                        &[&canon_target, &canon_target],
                        unit,
                    )?;
                    grads.canonical_refined = g.pop();
                    grads.global_refined = g.pop();
                    l
                }
            };

            let (mut lg, mut ld) = (0.0, 0.0);
            if let Some(space) = adversary {
                // Real and fake share one view convention: with estimate
                // supervision both go through the estimate's global frame
                // (real is the stage target); with ground-truth supervision
                // each pose is expressed in its own frame, held constant.
                let fake_frames = match (space, self.config.supervision) {
                    (AdversarySpace::Canonical, SupervisionFrames::GroundTruth) => {
                        Some(own_canonical(&out.canonical_refined, &self.pipeline))
                    }
                    _ => None,
                };
                let (fake_mm, real_mm) = match (space, &fake_frames) {
                    (AdversarySpace::Canonical, Some(frames)) => (
                        transform_rows(&out.canonical_refined, frames),
                        transform_rows(&y, &own_canonical(&y, &self.pipeline)),
                    ),
                    (AdversarySpace::Canonical, None) => (out.canonical_refined.clone(), canon_target.clone()),
                    (AdversarySpace::Original, _) => (out.final_pose.clone(), y.clone()),
                };
                let fake = &fake_mm / disc_unit;
                let real = real_mm / disc_unit;
                let disc = self
                    .pipeline
                    .nets
                    .disc
                    .as_mut()
                    .ok_or_else(|| Error::invalid("scheme needs a discriminator"))?;
                for _ in 0..self.config.disc_updates_per_batch {
                    let both = concatenate(Axis(0), &[real.view(), fake.view()]).expect("same width");
                    let scores = disc.forward(&both, Mode::Train)?;
                    let (lr, gr) = bce(&scores.slice(s![..n, ..]).to_owned(), 1.0);
                    let (lf, gf) = bce(&scores.slice(s![n.., ..]).to_owned(), 0.0);
                    ld = lr + lf;
                    let g = concatenate(Axis(0), &[gr.view(), gf.view()]).expect("same width");
                    disc.backward(&g)?;
                    self.disc_opt.step(&mut disc.params_mut())?;
                }
                let scores = disc.forward(&fake, Mode::Train)?;
                let (l, g) = bce(&scores, 1.0);
                lg = l;
                let d_fake = disc.backward(&g)? / disc_unit;
                disc.zero_grad();
                if lambda > 0.0 {
                    let slot = match space {
                        AdversarySpace::Canonical => &mut grads.canonical_refined,
                        AdversarySpace::Original => &mut grads.final_pose,
                    };
                    let d_fake = match &fake_frames {
                        Some(frames) => pull_back_rows(&d_fake, frames),
                        None => d_fake,
                    };
                    let add = d_fake * lambda;
                    *slot = Some(match slot.take() {
                        Some(t) => t + add,
                        None => add,
                    });
                }
            }

            if !(l2.is_finite() && lg.is_finite() && ld.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "epoch {} batch {b}: l2 {l2}, adv_g {lg}, adv_d {ld}",
                    self.epochs_done + 1
                )));
            }
            self.pipeline.backward(&grads)?;
            let mut params = self.pipeline.nets.generator_params_mut(true);
            self.gen_opt.step(&mut params)?;
            l2_sum += l2;
            g_sum += lg;
            d_sum += ld;
        }
        self.epochs_done += 1;
        let k = batches.len().max(1) as f64;
        let mut r = LossReport::new(l2_sum / k, g_sum / k, d_sum / k, lambda, unit);
        r.batches = batches.len();
        r.skipped_steps = self.gen_opt.skipped();
        Ok(r)
    }

    /// Root-relative MPJPE (mm) of final outputs in evaluation mode.
    pub fn evaluate_mpjpe(&self, data: &TrainingSet) -> Result<f64> {
        let x = self.pipeline.stats().normalize_2d(&data.inputs)?;
        let out = self.pipeline.infer(&x)?;
        mpjpe_rows(&out.final_pose, &data.targets, self.pipeline.topology(), true)
    }

    /// Pretraining followed by joint training, calling `log` after every
    /// epoch.
    pub fn fit(
        &mut self,
        train: &TrainingSet,
        eval: Option<&TrainingSet>,
        log: &mut dyn FnMut(&EpochRecord),
    ) -> Result<Vec<EpochRecord>> {
        let mut records = Vec::new();
        for _ in 0..self.config.pretrain_epochs {
            let r = self.pretrain_epoch(train)?;
            let rec = EpochRecord::new(self.pretrain_epochs_done, "pretrain", &r, None);
            log(&rec);
            records.push(rec);
        }
        for _ in 0..self.config.epochs {
            let r = self.train_epoch(train)?;
            let eval_mpjpe = eval.map(|e| self.evaluate_mpjpe(e)).transpose()?;
            let rec = EpochRecord::new(self.epochs_done, "joint", &r, eval_mpjpe);
            log(&rec);
            records.push(rec);
        }
        Ok(records)
    }
}
