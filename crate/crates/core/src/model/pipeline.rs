use nalgebra::{Matrix3, Vector3};

use super::{AdversarySpace, FrameKind, ModelConfig, Networks, Scheme, Stage};
use crate::geometry::{frame_to_transform, global_frame, part_frame, RigidTransform};
use crate::nn::{check_finite, Mode, Tensor2};
use crate::skeleton::{PartSpec, Pose2D, Pose3D, SkeletonTopology};
use crate::train::NormStats;
use crate::{Error, Result};

/// Largest canonical-frame deviation accepted by [`Pipeline::discriminate`].
const CANONICAL_TOLERANCE: f64 = 1e-3;

/// Per-sample transforms used by one batch pass.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineTransforms {
    pub global: Vec<RigidTransform>,
    pub global_degenerate: Vec<bool>,
    /// `[sample][part]`; empty rows when the scheme has no part stage.
    pub parts: Vec<Vec<RigidTransform>>,
    pub part_degenerate: Vec<Vec<bool>>,
}

impl PipelineTransforms {
    pub fn len(&self) -> usize {
        self.global.len()
    }

    pub fn is_empty(&self) -> bool {
        self.global.is_empty()
    }

    pub fn degenerate_count(&self) -> usize {
        self.global_degenerate.iter().filter(|d| **d).count()
            + self.part_degenerate.iter().flatten().filter(|d| **d).count()
    }
}

/// Every intermediate of a batch pass, one row per sample, `3J` millimeter
/// coordinates per row.
#[derive(Clone, Debug)]
pub struct BatchForward {
    /// Base network output.
    pub initial: Tensor2,
    /// Global stage output, in the global frame.
    pub global_refined: Tensor2,
    /// Part stage output reassembled in the global frame.
    pub canonical_refined: Tensor2,
    /// `canonical_refined` mapped back to the input view.
    pub final_pose: Tensor2,
    pub transforms: PipelineTransforms,
}

impl BatchForward {
    pub fn rows(&self) -> usize {
        self.initial.nrows()
    }

    pub fn output(&self, i: usize) -> PipelineOutput {
        let pose = |t: &Tensor2| Pose3D::from_flat_unchecked(t.row(i).as_slice().expect("standard layout"));
        PipelineOutput {
            initial: pose(&self.initial),
            global_refined: pose(&self.global_refined),
            canonical_refined: pose(&self.canonical_refined),
            final_pose: pose(&self.final_pose),
            global_transform: self.transforms.global[i],
            part_transforms: self.transforms.parts[i].clone(),
            global_degenerate: self.transforms.global_degenerate[i],
            part_degenerate: self.transforms.part_degenerate[i].clone(),
        }
    }
}

/// Result of estimating one pose.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutput {
    pub initial: Pose3D,
    pub global_refined: Pose3D,
    /// Refined pose in the global canonical view; this is what the
    /// canonical-view discriminator sees.
    pub canonical_refined: Pose3D,
    pub final_pose: Pose3D,
    pub global_transform: RigidTransform,
    pub part_transforms: Vec<RigidTransform>,
    pub global_degenerate: bool,
    pub part_degenerate: Vec<bool>,
}

/// Loss gradients (per millimeter) w.r.t. the batch intermediates. Missing
/// entries count as zero.
#[derive(Clone, Debug, Default)]
pub struct StageGrads {
    pub initial: Option<Tensor2>,
    pub global_refined: Option<Tensor2>,
    pub canonical_refined: Option<Tensor2>,
    pub final_pose: Option<Tensor2>,
}

/// Root-centered, flattened 2D poses, one row each.
pub fn pose2d_rows(poses: &[Pose2D], topo: &SkeletonTopology) -> Result<Tensor2> {
    let j = topo.joint_count();
    let [l, r] = topo.root_pair();
    let mut out = Tensor2::zeros((poses.len(), 2 * j));
    for (i, p) in poses.iter().enumerate() {
        p.check(topo)?;
        let root = (p.joints()[l] + p.joints()[r]) / 2.0;
        for (k, q) in p.joints().iter().enumerate() {
            out[[i, 2 * k]] = q.x - root.x;
            out[[i, 2 * k + 1]] = q.y - root.y;
        }
    }
    Ok(out)
}

/// Root-centered, flattened 3D poses, one row each.
pub fn pose3d_rows(poses: &[Pose3D], topo: &SkeletonTopology) -> Result<Tensor2> {
    let j = topo.joint_count();
    let mut out = Tensor2::zeros((poses.len(), 3 * j));
    for (i, p) in poses.iter().enumerate() {
        p.check(topo)?;
        let c = p.root_centered(topo);
        for (k, q) in c.joints().iter().enumerate() {
            out[[i, 3 * k]] = q.x;
            out[[i, 3 * k + 1]] = q.y;
            out[[i, 3 * k + 2]] = q.z;
        }
    }
    Ok(out)
}

fn point(row: &[f64], j: usize) -> Vector3<f64> {
    Vector3::new(row[3 * j], row[3 * j + 1], row[3 * j + 2])
}

fn set_point(row: &mut [f64], j: usize, p: &Vector3<f64>) {
    row[3 * j..3 * j + 3].copy_from_slice(p.as_slice());
}

fn row_slice(t: &Tensor2, i: usize) -> &[f64] {
    t.row(i).to_slice().expect("standard layout")
}

fn row_slice_mut(t: &mut Tensor2, i: usize) -> &mut [f64] {
    t.row_mut(i).into_slice().expect("standard layout")
}

fn rotate_row(r: &Matrix3<f64>, row: &mut [f64]) {
    for c in row.chunks_exact_mut(3) {
        let v = r * Vector3::new(c[0], c[1], c[2]);
        c.copy_from_slice(v.as_slice());
    }
}

/// Applies `transforms[i]` to every joint of row `i`.
pub(crate) fn transform_rows(rows: &Tensor2, transforms: &[RigidTransform]) -> Tensor2 {
    let mut out = rows.clone();
    for (i, t) in transforms.iter().enumerate() {
        for c in row_slice_mut(&mut out, i).chunks_exact_mut(3) {
            let p = t.apply_point(&Vector3::new(c[0], c[1], c[2]));
            c.copy_from_slice(p.as_slice());
        }
    }
    out
}

/// Pulls row gradients back through `transform_rows`: applies `R_i^T` to
/// every joint of row `i`.
pub(crate) fn pull_back_rows(grads: &Tensor2, transforms: &[RigidTransform]) -> Tensor2 {
    let mut out = grads.clone();
    for (i, t) in transforms.iter().enumerate() {
        rotate_row(&t.rotation().transpose(), row_slice_mut(&mut out, i));
    }
    out
}

/// Scheme, topology, model sizes and normalization: everything a pass needs
/// besides the network weights.
#[derive(Clone, Debug)]
struct Context {
    topo: SkeletonTopology,
    scheme: Scheme,
    config: ModelConfig,
    stats: NormStats,
}

impl Context {
    fn global_transform(&self, pose: &Pose3D) -> (RigidTransform, bool) {
        if !self.scheme.has_global_stage() {
            return (RigidTransform::identity(), false);
        }
        match self.scheme.frame_kind() {
            FrameKind::TranslateOnly => (RigidTransform::translation_only(pose.root(&self.topo)), false),
            FrameKind::Rotate => match frame_to_transform(&global_frame(pose, &self.topo)) {
                Ok(t) => (t, false),
                Err(_) => (RigidTransform::identity(), true),
            },
        }
    }

    fn part_transform(&self, pose: &Pose3D, part: &PartSpec) -> (RigidTransform, bool) {
        match self.scheme.frame_kind() {
            FrameKind::TranslateOnly => (RigidTransform::translation_only(pose.joint(part.origin_joint)), false),
            FrameKind::Rotate => match frame_to_transform(&part_frame(pose, part)) {
                Ok(t) => (t, false),
                Err(_) => (RigidTransform::identity(), true),
            },
        }
    }

    fn check_fixed(&self, fixed: &PipelineTransforms, rows: usize) -> Result<()> {
        let parts = if self.scheme.has_part_stage() {
            self.topo.parts().len()
        } else {
            0
        };
        if fixed.len() != rows
            || fixed.global_degenerate.len() != rows
            || fixed.parts.len() != rows
            || fixed.part_degenerate.len() != rows
            || fixed.parts.iter().any(|p| p.len() != parts)
        {
            return Err(Error::shape("fixed transforms do not match the batch"));
        }
        Ok(())
    }

    /// One pass; `run` evaluates a network on a batch.
    fn propagate(
        &self,
        x2d: &Tensor2,
        fixed: Option<&PipelineTransforms>,
        run: &mut dyn FnMut(Stage, &Tensor2) -> Result<Tensor2>,
    ) -> Result<BatchForward> {
        let j = self.topo.joint_count();
        if x2d.ncols() != 2 * j {
            return Err(Error::shape(format!(
                "pipeline expects {} input coordinates, got {}",
                2 * j,
                x2d.ncols()
            )));
        }
        let rows = x2d.nrows();
        if let Some(f) = fixed {
            self.check_fixed(f, rows)?;
        }
        let unit = self.config.coord_unit_mm;

        let y = run(Stage::Base, x2d)?;
        check_finite(&y, "base network output")?;
        let initial = self.stats.denormalize_3d(&y)?;

        let mut transforms = match fixed {
            Some(f) => f.clone(),
            None => {
                let (global, global_degenerate) = (0..rows)
                    .map(|i| self.global_transform(&Pose3D::from_flat_unchecked(row_slice(&initial, i))))
                    .unzip();
                PipelineTransforms {
                    global,
                    global_degenerate,
                    parts: vec![Vec::new(); rows],
                    part_degenerate: vec![Vec::new(); rows],
                }
            }
        };

        let canon = transform_rows(&initial, &transforms.global);
        let global_refined = if self.scheme.has_global_stage() {
            let out = run(Stage::Global, &(canon / unit))? * unit;
            check_finite(&out, "global refiner output")?;
            out
        } else {
            canon
        };

        let mut canonical_refined = global_refined.clone();
        if self.scheme.has_part_stage() {
            if fixed.is_none() {
                for i in 0..rows {
                    let pose = Pose3D::from_flat_unchecked(row_slice(&global_refined, i));
                    let (t, d): (Vec<_>, Vec<_>) = self
                        .topo
                        .parts()
                        .iter()
                        .map(|p| self.part_transform(&pose, p))
                        .unzip();
                    transforms.parts[i] = t;
                    transforms.part_degenerate[i] = d;
                }
            }
            for (k, part) in self.topo.parts().iter().enumerate() {
                let n = part.joints.len();
                let mut local = Tensor2::zeros((rows, 3 * n));
                for i in 0..rows {
                    let t = &transforms.parts[i][k];
                    let src = row_slice(&global_refined, i);
                    let dst = row_slice_mut(&mut local, i);
                    for (a, &jt) in part.joints.iter().enumerate() {
                        set_point(dst, a, &(t.apply_point(&point(src, jt)) / unit));
                    }
                }
                let out = run(Stage::Part(k), &local)?;
                check_finite(&out, "part refiner output")?;
                for i in 0..rows {
                    let inv = transforms.parts[i][k].inverse();
                    let src = row_slice(&out, i);
                    let dst = row_slice_mut(&mut canonical_refined, i);
                    for (a, &jt) in part.joints.iter().enumerate() {
                        set_point(dst, jt, &inv.apply_point(&(point(src, a) * unit)));
                    }
                }
            }
        }

        let inverses: Vec<_> = transforms.global.iter().map(RigidTransform::inverse).collect();
        let final_pose = transform_rows(&canonical_refined, &inverses);

        Ok(BatchForward {
            initial,
            global_refined,
            canonical_refined,
            final_pose,
            transforms,
        })
    }
}

/// Networks plus the context needed to run them end to end.
#[derive(Clone, Debug)]
pub struct Pipeline {
    ctx: Context,
    pub nets: Networks,
    seed: u64,
    cache: Option<PipelineTransforms>,
}

impl Pipeline {
    pub fn new(
        topo: SkeletonTopology,
        scheme: Scheme,
        config: ModelConfig,
        stats: NormStats,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let j = topo.joint_count();
        if stats.input.width() != 2 * j || stats.output.width() != 3 * j {
            return Err(Error::shape("normalization statistics do not match the topology"));
        }
        let nets = Networks::new(&topo, scheme, &config, seed);
        Ok(Pipeline {
            ctx: Context {
                topo,
                scheme,
                config,
                stats,
            },
            nets,
            seed,
            cache: None,
        })
    }

    pub fn topology(&self) -> &SkeletonTopology {
        &self.ctx.topo
    }

    pub fn scheme(&self) -> Scheme {
        self.ctx.scheme
    }

    pub fn config(&self) -> &ModelConfig {
        &self.ctx.config
    }

    pub fn stats(&self) -> &NormStats {
        &self.ctx.stats
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Global transforms this scheme builds for each row of `poses_mm`.
    pub fn global_transforms(&self, poses_mm: &Tensor2) -> Vec<RigidTransform> {
        (0..poses_mm.nrows())
            .map(|i| self.ctx.global_transform(&Pose3D::from_flat_unchecked(row_slice(poses_mm, i))).0)
            .collect()
    }

    /// Root-centers and normalizes raw 2D poses into network input rows.
    pub fn input_rows(&self, poses: &[Pose2D]) -> Result<Tensor2> {
        self.ctx.stats.normalize_2d(&pose2d_rows(poses, &self.ctx.topo)?)
    }

    /// Training-time pass that caches activations for [`Pipeline::backward`].
    /// With `fixed` the given transforms replace the ones computed from the
    /// batch, which keeps the pass a smooth function of the weights.
    pub fn forward(
        &mut self,
        x2d: &Tensor2,
        mode: Mode,
        fixed: Option<&PipelineTransforms>,
    ) -> Result<BatchForward> {
        let nets = &mut self.nets;
        let out = self
            .ctx
            .propagate(x2d, fixed, &mut |s, t| nets.forward(s, t, mode))?;
        self.cache = Some(out.transforms.clone());
        Ok(out)
    }

    /// Evaluation-mode pass; no state is touched.
    pub fn infer(&self, x2d: &Tensor2) -> Result<BatchForward> {
        self.ctx
            .propagate(x2d, None, &mut |s, t| self.nets.infer(s, t))
    }

    /// Evaluation-mode pass with externally supplied transforms.
    pub fn infer_with(&self, x2d: &Tensor2, fixed: &PipelineTransforms) -> Result<BatchForward> {
        self.ctx
            .propagate(x2d, Some(fixed), &mut |s, t| self.nets.infer(s, t))
    }

    /// Back-propagates stage gradients into every generator network. The
    /// transforms are constants of the backward pass.
    pub fn backward(&mut self, grads: &StageGrads) -> Result<()> {
        let transforms = self.cache.as_ref().ok_or(Error::MissingForward)?;
        let ctx = &self.ctx;
        let rows = transforms.len();
        let width = 3 * ctx.topo.joint_count();
        let unit = ctx.config.coord_unit_mm;
        let take = |g: &Option<Tensor2>| -> Result<Tensor2> {
            match g {
                Some(t) if t.dim() == (rows, width) => Ok(t.clone()),
                Some(_) => Err(Error::shape("stage gradient does not match the last batch")),
                None => Ok(Tensor2::zeros((rows, width))),
            }
        };

        let mut d_canon_p = take(&grads.canonical_refined)?;
        let d_final = take(&grads.final_pose)?;
        for i in 0..rows {
            let r = transforms.global[i].rotation();
            let mut g = row_slice(&d_final, i).to_vec();
            rotate_row(r, &mut g);
            for (a, b) in row_slice_mut(&mut d_canon_p, i).iter_mut().zip(g) {
                *a += b;
            }
        }

        let mut d_canon_g = take(&grads.global_refined)?;
        if ctx.scheme.has_part_stage() {
            for j in ctx.topo.unassigned_joints() {
                for i in 0..rows {
                    let g = point(row_slice(&d_canon_p, i), j);
                    let dst = row_slice_mut(&mut d_canon_g, i);
                    set_point(dst, j, &(point(dst, j) + g));
                }
            }
            for (k, part) in ctx.topo.parts().iter().enumerate() {
                let n = part.joints.len();
                let mut d_out = Tensor2::zeros((rows, 3 * n));
                for i in 0..rows {
                    let r = transforms.parts[i][k].rotation();
                    let src = row_slice(&d_canon_p, i);
                    let dst = row_slice_mut(&mut d_out, i);
                    for (a, &jt) in part.joints.iter().enumerate() {
                        set_point(dst, a, &(r * point(src, jt) * unit));
                    }
                }
                let d_in = self.nets.get_mut(Stage::Part(k))?.backward(&d_out)?;
                for i in 0..rows {
                    let rt = transforms.parts[i][k].rotation().transpose();
                    let src = row_slice(&d_in, i);
                    let dst = row_slice_mut(&mut d_canon_g, i);
                    for (a, &jt) in part.joints.iter().enumerate() {
                        set_point(dst, jt, &(point(dst, jt) + rt * point(src, a) / unit));
                    }
                }
            }
        } else {
            d_canon_g += &d_canon_p;
        }

        let mut d_canon = if ctx.scheme.has_global_stage() {
            self.nets.get_mut(Stage::Global)?.backward(&(d_canon_g * unit))? / unit
        } else {
            d_canon_g
        };
        for i in 0..rows {
            let rt = transforms.global[i].rotation().transpose();
            rotate_row(&rt, row_slice_mut(&mut d_canon, i));
        }
        let d_initial = d_canon + take(&grads.initial)?;
        let dy = ctx.stats.output.denormalize_grad(&d_initial)?;
        self.nets.base.backward(&dy)?;
        Ok(())
    }

    pub fn estimate(&self, pose2d: &Pose2D) -> Result<PipelineOutput> {
        Ok(self.estimate_batch(std::slice::from_ref(pose2d))?.remove(0))
    }

    pub fn estimate_batch(&self, poses: &[Pose2D]) -> Result<Vec<PipelineOutput>> {
        let out = self.infer(&self.input_rows(poses)?)?;
        Ok((0..out.rows()).map(|i| out.output(i)).collect())
    }

    /// Discriminator input rows for millimeter poses.
    pub fn disc_rows(&self, poses_mm: &Tensor2) -> Tensor2 {
        poses_mm / self.ctx.config.coord_unit_mm
    }

    /// Plausibility score of one pose. For the canonical-view discriminator
    /// debug builds reject poses whose global frame is not canonical.
    pub fn discriminate(&self, pose: &Pose3D) -> Result<f64> {
        let disc = self
            .nets
            .disc
            .as_ref()
            .ok_or_else(|| Error::invalid("scheme has no discriminator"))?;
        pose.check(&self.ctx.topo)?;
        if cfg!(debug_assertions) && self.ctx.scheme.adversary() == Some(AdversarySpace::Canonical) {
            let frame = global_frame(pose, &self.ctx.topo);
            let deviation = if frame.degenerate {
                f64::INFINITY
            } else {
                frame.canonical_deviation()
            };
            if !(deviation <= CANONICAL_TOLERANCE) {
                return Err(Error::NotCanonical(deviation));
            }
        }
        let row = Tensor2::from_shape_vec((1, 3 * pose.len()), pose.to_flat()).expect("sized");
        Ok(disc.infer(&self.disc_rows(&row))?[[0, 0]])
    }
}
