use nalgebra::{Matrix3, Vector3};

use super::RigidTransform;
use crate::skeleton::{PartSpec, Pose3D, SkeletonTopology};
use crate::{Error, Result};

/// Three joints count as collinear when `|a x b| < COLLINEAR_TOLERANCE * |a| |b|`.
pub const COLLINEAR_TOLERANCE: f64 = 1e-6;

/// Plane normal `n`, in-plane axis `v` and origin of a canonical frame.
///
/// For degenerate frames the vectors are set to `+X` / `+Z` so they stay unit
/// length; the flag is what callers must look at.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CanonicalFrame {
    pub normal: Vector3<f64>,
    pub axis: Vector3<f64>,
    pub origin: Vector3<f64>,
    pub degenerate: bool,
}

impl CanonicalFrame {
    fn degenerate_at(origin: Vector3<f64>) -> Self {
        CanonicalFrame {
            normal: Vector3::x(),
            axis: Vector3::z(),
            origin,
            degenerate: true,
        }
    }

    /// Largest deviation from `n = +X`, `v = +Z`, origin at zero (mm for the
    /// origin, unitless for the vectors).
    pub fn canonical_deviation(&self) -> f64 {
        (self.normal - Vector3::x())
            .abs()
            .max()
            .max((self.axis - Vector3::z()).abs().max())
            .max(self.origin.abs().max())
    }
}

/// `edge_a x edge_b` gives the normal direction, `axis` the in-plane axis.
fn build_frame(
    edge_a: Vector3<f64>,
    edge_b: Vector3<f64>,
    axis: Vector3<f64>,
    origin: Vector3<f64>,
) -> CanonicalFrame {
    let cross = edge_a.cross(&edge_b);
    let scale = edge_a.norm() * edge_b.norm();
    let axis_len = axis.norm();
    if !(scale > 0.0) || !(axis_len > 0.0) || !(cross.norm() >= COLLINEAR_TOLERANCE * scale) {
        return CanonicalFrame::degenerate_at(origin);
    }
    let v = axis / axis_len;
    let n = cross / cross.norm();
    // Re-orthogonalize: exact for in-plane axes up to round-off, and it also
    // keeps `n` usable when the axis is only roughly in the plane.
    let n = n - v * n.dot(&v);
    let n_len = n.norm();
    if !(n_len >= COLLINEAR_TOLERANCE) {
        return CanonicalFrame::degenerate_at(origin);
    }
    CanonicalFrame {
        normal: n / n_len,
        axis: v,
        origin,
        degenerate: false,
    }
}

/// Torso frame: origin at the hip midpoint, `v` toward the chest and
/// `n = normalize((right_hip - o) x (chest - o))`.
pub fn global_frame(pose: &Pose3D, topo: &SkeletonTopology) -> CanonicalFrame {
    let [_, right_hip, chest] = topo.plane_joints();
    let origin = pose.root(topo);
    let to_chest = pose.joint(chest) - origin;
    build_frame(pose.joint(right_hip) - origin, to_chest, to_chest, origin)
}

/// Part frame: `n = normalize((p1 - p0) x (p2 - p0))` over the part's plane
/// triple, `v` along the axis pair, origin at the part's origin joint.
pub fn part_frame(pose: &Pose3D, part: &PartSpec) -> CanonicalFrame {
    let [p0, p1, p2] = part.plane_triple.map(|j| pose.joint(j));
    let [a0, a1] = part.axis_pair.map(|j| pose.joint(j));
    build_frame(p1 - p0, p2 - p0, a1 - a0, pose.joint(part.origin_joint))
}

/// Rotation with rows `n`, `v x n`, `v` and translation `origin`.
pub fn frame_to_transform(frame: &CanonicalFrame) -> Result<RigidTransform> {
    if frame.degenerate {
        return Err(Error::DegenerateFrame);
    }
    let n = frame.normal;
    let v = frame.axis;
    let y = v.cross(&n);
    let r = Matrix3::from_rows(&[n.transpose(), y.transpose(), v.transpose()]);
    Ok(RigidTransform::from_parts_unchecked(r, frame.origin))
}

/// Maps a pose into its global canonical view. Degenerate frames fall back to
/// the identity transform and report `true`.
pub fn canonicalize(pose: &Pose3D, topo: &SkeletonTopology) -> (Pose3D, RigidTransform, bool) {
    match frame_to_transform(&global_frame(pose, topo)) {
        Ok(t) => (t.apply(pose), t, false),
        Err(_) => (pose.clone(), RigidTransform::identity(), true),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ORTHONORMAL_TOLERANCE;
    use crate::skeleton::generate_synthetic;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn topo() -> SkeletonTopology {
        SkeletonTopology::default_topology()
    }

    fn with_torso(lh: [f64; 3], rh: [f64; 3], chest: [f64; 3]) -> Pose3D {
        let t = topo();
        let mut flat = vec![0.0; 3 * t.joint_count()];
        for (name, p) in [("left_hip", lh), ("right_hip", rh), ("chest", chest)] {
            let j = t.joint_index(name).unwrap();
            flat[3 * j..3 * j + 3].copy_from_slice(&p);
        }
        Pose3D::from_flat(&flat).unwrap()
    }

    #[test]
    fn hand_worked_global_frame() {
        let pose = with_torso([-1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]);
        let f = global_frame(&pose, &topo());
        assert!(!f.degenerate);
        assert!(f.origin.norm() < 1e-15);
        assert!((f.axis - Vector3::z()).norm() < 1e-15);
        // (1,0,0) x (0,0,1) = (0,-1,0)
        assert!((f.normal - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-15);

        let t = frame_to_transform(&f).unwrap();
        let chest = t.apply_point(&Vector3::new(0.0, 0.0, 1.0));
        assert!(chest.x.abs() < 1e-15 && chest.y.abs() < 1e-15 && chest.z > 0.0);
    }

    #[test]
    fn canonical_frame_gives_identity() {
        let f = CanonicalFrame {
            normal: Vector3::x(),
            axis: Vector3::z(),
            origin: Vector3::zeros(),
            degenerate: false,
        };
        assert!(frame_to_transform(&f).unwrap().is_identity(0.0));
    }

    #[test]
    fn collinear_torso_is_degenerate() {
        let pose = with_torso([-1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0]);
        let f = global_frame(&pose, &topo());
        assert!(f.degenerate);
        assert!(matches!(frame_to_transform(&f), Err(Error::DegenerateFrame)));
        let (same, t, deg) = canonicalize(&pose, &topo());
        assert!(deg);
        assert_eq!(same, pose);
        assert!(t.is_identity(0.0));
    }

    #[test]
    fn straight_arm_is_degenerate() {
        let t = topo();
        let arm = t.part("left_arm").unwrap();
        let mut flat = vec![0.0; 3 * t.joint_count()];
        for (k, &j) in arm.joints.iter().enumerate() {
            flat[3 * j] = 100.0 * k as f64;
            flat[3 * j + 1] = 50.0 * k as f64;
        }
        let pose = Pose3D::from_flat(&flat).unwrap();
        assert!(part_frame(&pose, arm).degenerate);
    }

    #[test]
    fn part_axis_follows_upper_arm() {
        let t = topo();
        let arm = t.part("left_arm").unwrap();
        let s = &generate_synthetic(11, 1, 0.0, 0.0).unwrap()[0];
        let pose = &s.scene.canonical_pose;
        let f = part_frame(pose, arm);
        let dir = (pose.joint(arm.axis_pair[1]) - pose.joint(arm.axis_pair[0])).normalize();
        assert!((f.axis - dir).norm() < 1e-12);
        assert!(f.normal.dot(&f.axis).abs() < 1e-12);
        let local = frame_to_transform(&f).unwrap();
        let elbow = local.apply_point(&pose.joint(arm.axis_pair[1]));
        assert!(elbow.x.abs() < 1e-9 && elbow.y.abs() < 1e-9 && elbow.z > 0.0);
        let wrist = local.apply_point(&pose.joint(arm.plane_triple[2]));
        assert!(wrist.x.abs() < 1e-9, "wrist stays in the local YZ plane");
    }

    fn rotation(a: [f64; 3]) -> RigidTransform {
        RigidTransform::from_euler(a[0], a[1], a[2])
    }

    proptest! {
        #[test]
        fn global_frame_equivariance(
            seed in 0u64..1000,
            a in prop::array::uniform3(-PI..PI),
            c in prop::array::uniform3(-1000.0f64..1000.0),
        ) {
            let topo = topo();
            let pose = generate_synthetic(seed, 1, PI, 5.0).unwrap().remove(0).pose3d;
            let q = rotation(a);
            let offset = Vector3::from(c);
            let moved = q.apply(&pose).translated(&offset);
            let f0 = global_frame(&pose, &topo);
            let f1 = global_frame(&moved, &topo);
            let qr = q.rotation();
            prop_assert!((f1.normal - qr * f0.normal).norm() < 1e-9);
            prop_assert!((f1.axis - qr * f0.axis).norm() < 1e-9);
            let scale = pose.joints().iter().map(|p| p.norm()).fold(1.0, f64::max);
            prop_assert!((f1.origin - (qr * f0.origin + offset)).norm() < 1e-9 * (scale + c.iter().map(|v| v.abs()).sum::<f64>()));
        }

        #[test]
        fn part_frame_equivariance(
            seed in 0u64..1000,
            a in prop::array::uniform3(-PI..PI),
        ) {
            let topo = topo();
            let pose = generate_synthetic(seed, 1, PI, 5.0).unwrap().remove(0).pose3d;
            let q = rotation(a);
            let moved = q.apply(&pose);
            for part in topo.parts() {
                let f0 = part_frame(&pose, part);
                let f1 = part_frame(&moved, part);
                prop_assert_eq!(f0.degenerate, f1.degenerate);
                prop_assert!((f1.normal - q.rotation() * f0.normal).norm() < 1e-9);
                prop_assert!((f1.axis - q.rotation() * f0.axis).norm() < 1e-9);
            }
        }

        #[test]
        fn canonicalization_is_idempotent(seed in 0u64..10_000) {
            let topo = topo();
            let pose = generate_synthetic(seed, 1, PI, 10.0).unwrap().remove(0).pose3d;
            let (canon, t, deg) = canonicalize(&pose, &topo);
            prop_assert!(!deg);
            prop_assert!(t.orthonormality_error() < ORTHONORMAL_TOLERANCE);
            prop_assert!(global_frame(&canon, &topo).canonical_deviation() < 1e-6);
            prop_assert!(t.inverse().apply(&canon).max_distance(&pose) < 1e-6);
        }

        #[test]
        fn random_frames_give_orthonormal_rotations(
            n in prop::array::uniform3(-1.0f64..1.0),
            v in prop::array::uniform3(-1.0f64..1.0),
        ) {
            let (n, v) = (Vector3::from(n), Vector3::from(v));
            let f = build_frame(n, v, v, Vector3::zeros());
            if !f.degenerate {
                let t = frame_to_transform(&f).unwrap();
                prop_assert!(t.orthonormality_error() < ORTHONORMAL_TOLERANCE);
                prop_assert!((f.normal.norm() - 1.0).abs() < 1e-9);
                prop_assert!(f.normal.dot(&f.axis).abs() < 1e-6);
            }
        }
    }
}
