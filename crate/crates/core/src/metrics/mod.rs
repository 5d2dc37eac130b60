//! Pose accuracy and plausibility metrics plus the evaluation protocols.

mod protocol;
mod report;

pub use protocol::{
    run_ablation, run_protocol, split_dataset, AblationRow, OracleModel, ProtocolModel, ProtocolReport,
    SchemeModel, SplitSpec,
};
pub use report::{evaluate, EvalOptions, EvalReport, NamedValues};

use crate::geometry::procrustes_align;
use crate::nn::Tensor2;
use crate::skeleton::{Pose3D, SkeletonTopology};
use crate::{Error, Result};

fn check_pairs(preds: &[Pose3D], gts: &[Pose3D]) -> Result<usize> {
    if preds.is_empty() {
        return Err(Error::invalid("metric needs at least one sample"));
    }
    if preds.len() != gts.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} ground-truth poses",
            preds.len(),
            gts.len()
        )));
    }
    let j = gts[0].len();
    if j == 0 || preds.iter().chain(gts).any(|p| p.len() != j) {
        return Err(Error::shape("all poses must have the same non-zero joint count"));
    }
    Ok(j)
}

fn check_topology(poses: &[Pose3D], topo: &SkeletonTopology) -> Result<()> {
    if poses.is_empty() {
        return Err(Error::invalid("metric needs at least one sample"));
    }
    poses.iter().try_for_each(|p| p.check(topo))
}

/// Mean joint error per joint index (mm).
pub fn per_joint_error(preds: &[Pose3D], gts: &[Pose3D]) -> Result<Vec<f64>> {
    let j = check_pairs(preds, gts)?;
    let mut acc = vec![0.0; j];
    for (p, g) in preds.iter().zip(gts) {
        for (k, (a, b)) in p.joints().iter().zip(g.joints()).enumerate() {
            acc[k] += (a - b).norm();
        }
    }
    let n = preds.len() as f64;
    Ok(acc.into_iter().map(|v| v / n).collect())
}

/// Mean Euclidean joint distance over samples and joints (mm). No alignment
/// is applied; see [`evaluate`] for root-relative evaluation.
pub fn mpjpe(preds: &[Pose3D], gts: &[Pose3D]) -> Result<f64> {
    let j = check_pairs(preds, gts)?;
    let mut sum = 0.0;
    for (p, g) in preds.iter().zip(gts) {
        sum += p.joints().iter().zip(g.joints()).map(|(a, b)| (a - b).norm()).sum::<f64>();
    }
    Ok(sum / (preds.len() * j) as f64)
}

/// MPJPE over row-stored poses (`3J` columns).
pub fn mpjpe_rows(preds: &Tensor2, gts: &Tensor2, topo: &SkeletonTopology, root_relative: bool) -> Result<f64> {
    let to_poses = |t: &Tensor2| -> Result<Vec<Pose3D>> {
        t.rows()
            .into_iter()
            .map(|r| {
                let p = Pose3D::from_flat(r.as_slice().expect("standard layout"))?;
                p.check(topo)?;
                Ok(if root_relative { p.root_centered(topo) } else { p })
            })
            .collect()
    };
    mpjpe(&to_poses(preds)?, &to_poses(gts)?)
}

/// MPJPE after per-sample similarity Procrustes alignment of each prediction
/// onto its ground truth.
pub fn pa_mpjpe(preds: &[Pose3D], gts: &[Pose3D]) -> Result<f64> {
    check_pairs(preds, gts)?;
    let aligned: Vec<Pose3D> = preds
        .iter()
        .zip(gts)
        .map(|(p, g)| procrustes_align(p, g).map(|(_, a)| a))
        .collect::<Result<_>>()?;
    mpjpe(&aligned, gts)
}

/// Per bone, the mean norm of the bone-vector difference (mm).
pub fn bone_error(preds: &[Pose3D], gts: &[Pose3D], topo: &SkeletonTopology) -> Result<Vec<f64>> {
    check_pairs(preds, gts)?;
    check_topology(preds, topo)?;
    check_topology(gts, topo)?;
    let n = preds.len() as f64;
    Ok(topo
        .bones()
        .iter()
        .map(|&b| {
            preds
                .iter()
                .zip(gts)
                .map(|(p, g)| (p.bone_vector(b) - g.bone_vector(b)).norm())
                .sum::<f64>()
                / n
        })
        .collect())
}

/// Per bone, the population standard deviation of predicted bone length (mm).
pub fn bone_std(preds: &[Pose3D], topo: &SkeletonTopology) -> Result<Vec<f64>> {
    check_topology(preds, topo)?;
    if preds.len() < 2 {
        return Err(Error::invalid("bone length std needs at least 2 samples"));
    }
    let n = preds.len() as f64;
    Ok(topo
        .bones()
        .iter()
        .map(|&b| {
            let lengths: Vec<f64> = preds.iter().map(|p| p.bone_vector(b).norm()).collect();
            let mean = lengths.iter().sum::<f64>() / n;
            (lengths.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect())
}

/// Per limb pair, the mean absolute left/right bone length difference (mm).
pub fn symmetry(preds: &[Pose3D], topo: &SkeletonTopology) -> Result<Vec<f64>> {
    check_topology(preds, topo)?;
    let bones = topo.bones();
    let n = preds.len() as f64;
    Ok(topo
        .limb_pairs()
        .iter()
        .map(|pair| {
            preds
                .iter()
                .map(|p| (p.bone_vector(bones[pair.left]).norm() - p.bone_vector(bones[pair.right]).norm()).abs())
                .sum::<f64>()
                / n
        })
        .collect())
}
