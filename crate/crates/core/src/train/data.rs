use crate::model::{pose2d_rows, pose3d_rows};
use crate::nn::Tensor2;
use crate::skeleton::{Pose2D, Pose3D, SkeletonTopology, SyntheticSample};
use crate::{Error, Result};

/// Paired 2D inputs and 3D targets, both root-centered and unnormalized
/// (image units and millimeters).
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub ids: Vec<u64>,
    pub inputs: Tensor2,
    pub targets: Tensor2,
    /// Synthetic view bucket per sample when known.
    pub view_buckets: Option<Vec<usize>>,
}

impl TrainingSet {
    pub fn from_poses(
        ids: Vec<u64>,
        poses2d: &[Pose2D],
        poses3d: &[Pose3D],
        topo: &SkeletonTopology,
    ) -> Result<Self> {
        if poses2d.len() != poses3d.len() || ids.len() != poses2d.len() {
            return Err(Error::shape(format!(
                "{} ids, {} 2D and {} 3D poses",
                ids.len(),
                poses2d.len(),
                poses3d.len()
            )));
        }
        let inputs = pose2d_rows(poses2d, topo)?;
        let targets = pose3d_rows(poses3d, topo)?;
        Ok(TrainingSet {
            ids,
            inputs,
            targets,
            view_buckets: None,
        })
    }

    pub fn from_samples(samples: &[SyntheticSample], topo: &SkeletonTopology) -> Result<Self> {
        let p2: Vec<_> = samples.iter().map(|s| s.pose2d.clone()).collect();
        let p3: Vec<_> = samples.iter().map(|s| s.pose3d.clone()).collect();
        let mut set = Self::from_poses(samples.iter().map(|s| s.id).collect(), &p2, &p3, topo)?;
        set.view_buckets = Some(samples.iter().map(|s| s.scene.view_bucket).collect());
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        TrainingSet {
            ids: rows.iter().map(|&i| self.ids[i]).collect(),
            inputs: self.inputs.select(ndarray::Axis(0), rows),
            targets: self.targets.select(ndarray::Axis(0), rows),
            view_buckets: self
                .view_buckets
                .as_ref()
                .map(|b| rows.iter().map(|&i| b[i]).collect()),
        }
    }

    /// Ground-truth poses (root-centered millimeters).
    pub fn target_poses(&self) -> Vec<Pose3D> {
        self.targets
            .rows()
            .into_iter()
            .map(|r| Pose3D::from_flat_unchecked(r.as_slice().expect("standard layout")))
            .collect()
    }
}
