use nalgebra::{Vector2, Vector3};

use super::SkeletonTopology;
use crate::{Error, Result};

/// 3D joint positions in millimeters, camera coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Pose3D {
    joints: Vec<Vector3<f64>>,
}

/// 2D joint positions in normalized image units.
#[derive(Clone, Debug, PartialEq)]
pub struct Pose2D {
    joints: Vec<Vector2<f64>>,
}

impl Pose3D {
    pub fn new(joints: Vec<Vector3<f64>>) -> Result<Self> {
        if let Some(j) = joints.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite(format!("3D pose joint {j}")));
        }
        Ok(Pose3D { joints })
    }

    /// Reads `[x0, y0, z0, x1, ...]`.
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if !flat.len().is_multiple_of(3) {
            return Err(Error::shape(format!(
                "3D pose needs a multiple of 3 values, got {}",
                flat.len()
            )));
        }
        Self::new(
            flat.chunks_exact(3)
                .map(|c| Vector3::new(c[0], c[1], c[2]))
                .collect(),
        )
    }

    pub(crate) fn from_flat_unchecked(flat: &[f64]) -> Self {
        Pose3D {
            joints: flat
                .chunks_exact(3)
                .map(|c| Vector3::new(c[0], c[1], c[2]))
                .collect(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.joints.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn joints(&self) -> &[Vector3<f64>] {
        &self.joints
    }

    pub fn joint(&self, j: usize) -> Vector3<f64> {
        self.joints[j]
    }

    pub fn check(&self, topo: &SkeletonTopology) -> Result<()> {
        if self.len() != topo.joint_count() {
            return Err(Error::shape(format!(
                "pose has {} joints, topology expects {}",
                self.len(),
                topo.joint_count()
            )));
        }
        Ok(())
    }

    /// Midpoint of the two root (hip) joints.
    pub fn root(&self, topo: &SkeletonTopology) -> Vector3<f64> {
        let [l, r] = topo.root_pair();
        (self.joints[l] + self.joints[r]) * 0.5
    }

    pub fn translated(&self, offset: &Vector3<f64>) -> Self {
        self.map(|p| p + offset)
    }

    pub fn root_centered(&self, topo: &SkeletonTopology) -> Self {
        self.translated(&-self.root(topo))
    }

    pub fn map(&self, f: impl FnMut(&Vector3<f64>) -> Vector3<f64>) -> Self {
        Pose3D {
            joints: self.joints.iter().map(f).collect(),
        }
    }

    pub fn bone_vector(&self, bone: (usize, usize)) -> Vector3<f64> {
        self.joints[bone.0] - self.joints[bone.1]
    }

    /// Largest per-joint distance to `other`.
    pub fn max_distance(&self, other: &Pose3D) -> f64 {
        self.joints
            .iter()
            .zip(&other.joints)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl Pose2D {
    pub fn new(joints: Vec<Vector2<f64>>) -> Result<Self> {
        if let Some(j) = joints.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite(format!("2D pose joint {j}")));
        }
        Ok(Pose2D { joints })
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if !flat.len().is_multiple_of(2) {
            return Err(Error::shape(format!(
                "2D pose needs an even number of values, got {}",
                flat.len()
            )));
        }
        Self::new(
            flat.chunks_exact(2)
                .map(|c| Vector2::new(c[0], c[1]))
                .collect(),
        )
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.joints.iter().flat_map(|p| [p.x, p.y]).collect()
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn joints(&self) -> &[Vector2<f64>] {
        &self.joints
    }

    pub fn check(&self, topo: &SkeletonTopology) -> Result<()> {
        if self.len() != topo.joint_count() {
            return Err(Error::shape(format!(
                "pose has {} joints, topology expects {}",
                self.len(),
                topo.joint_count()
            )));
        }
        Ok(())
    }
}
