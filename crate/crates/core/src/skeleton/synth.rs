//! Synthetic multi-viewpoint pose data.
//!
//! Base poses come from a small parametric body: a fixed torso, per-subject
//! bone lengths and limb angles drawn uniformly around a rest pose. Each pose
//! is built in the canonical view (torso normal on `+X`, root-to-chest on
//! `+Z`, left side on `-Y`, facing `-X`), rotated into a random camera view,
//! perturbed by Gaussian joint noise and projected orthographically.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Pose2D, Pose3D, SkeletonTopology};
use crate::geometry::RigidTransform;
use crate::{Error, Result};

/// Number of yaw sectors used to bucket synthetic viewpoints.
pub const VIEW_BUCKETS: usize = 4;

const SUBJECT_SCALES: [f64; 5] = [0.92, 0.97, 1.0, 1.04, 1.08];

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    /// Noise-free pose in the canonical view.
    pub canonical_pose: Pose3D,
    /// Maps the canonical pose into camera coordinates.
    pub view_rotation: RigidTransform,
    pub noise_sigma: f64,
    pub camera_focal: f64,
    /// Yaw sector of the sampled view, in `0..VIEW_BUCKETS`.
    pub view_bucket: usize,
    pub subject: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSample {
    pub id: u64,
    pub pose2d: Pose2D,
    pub pose3d: Pose3D,
    pub scene: SyntheticScene,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    /// Half-widths of the uniform view angles about X, Y and Z (radians).
    pub view_spread: [f64; 3],
    pub noise_sigma: f64,
    pub camera_focal: f64,
    /// Fixed camera orientation applied after the random view rotation.
    pub camera: Matrix3<f64>,
}

impl SynthConfig {
    pub fn uniform(view_spread: f64, noise_sigma: f64) -> Self {
        SynthConfig {
            view_spread: [view_spread; 3],
            noise_sigma,
            camera_focal: 1e-3,
            camera: Matrix3::identity(),
        }
    }

    /// Horizontal cameras circling an upright subject: full yaw, pitch and
    /// roll limited to `jitter`. The camera looks along its `+Z`, image `y`
    /// points down and a yaw of zero sees the subject from the front.
    pub fn camera_rig(jitter: f64, noise_sigma: f64) -> Self {
        SynthConfig {
            view_spread: [jitter, jitter, PI],
            noise_sigma,
            camera_focal: 1e-3,
            camera: Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0),
        }
    }
}

/// Yaw sector of a view angle: `floor((yaw + pi) / (pi / 2))`.
pub fn view_bucket(yaw: f64) -> usize {
    let b = ((yaw + PI) / FRAC_PI_2).floor();
    (b.max(0.0) as usize).min(VIEW_BUCKETS - 1)
}

pub fn generate_synthetic(
    seed: u64,
    count: usize,
    view_spread: f64,
    noise_sigma: f64,
) -> Result<Vec<SyntheticSample>> {
    generate_synthetic_with(seed, count, &SynthConfig::uniform(view_spread, noise_sigma))
}

pub fn generate_camera_rig(
    seed: u64,
    count: usize,
    jitter: f64,
    noise_sigma: f64,
) -> Result<Vec<SyntheticSample>> {
    generate_synthetic_with(seed, count, &SynthConfig::camera_rig(jitter, noise_sigma))
}

pub fn generate_synthetic_with(
    seed: u64,
    count: usize,
    cfg: &SynthConfig,
) -> Result<Vec<SyntheticSample>> {
    if count == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    if !(cfg.noise_sigma >= 0.0) {
        return Err(Error::invalid("noise sigma must be non-negative"));
    }
    if !(cfg.camera_focal > 0.0) {
        return Err(Error::invalid("camera focal scale must be positive"));
    }
    if cfg.view_spread.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::invalid("view spread must be non-negative"));
    }
    let camera = RigidTransform::from_rotation(cfg.camera)?;
    let topo = SkeletonTopology::default_topology();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, cfg.noise_sigma).expect("sigma validated");

    let mut out = Vec::with_capacity(count);
    for id in 0..count as u64 {
        let subject = rng.random_range(0..SUBJECT_SCALES.len());
        let canonical = sample_body(&mut rng, SUBJECT_SCALES[subject]);
        let mut angles = [0.0; 3];
        for (a, spread) in angles.iter_mut().zip(cfg.view_spread) {
            *a = if spread > 0.0 {
                rng.random_range(-spread..=spread)
            } else {
                0.0
            };
        }
        let view = camera.compose(&RigidTransform::from_euler(angles[0], angles[1], angles[2]));
        let clean = view.apply(&canonical);
        let pose3d = if cfg.noise_sigma > 0.0 {
            clean.map(|p| {
                p + Vector3::new(
                    noise.sample(&mut rng),
                    noise.sample(&mut rng),
                    noise.sample(&mut rng),
                )
            })
        } else {
            clean
        };
        debug_assert_eq!(pose3d.len(), topo.joint_count());
        out.push(SyntheticSample {
            id,
            pose2d: project_orthographic(&pose3d, cfg.camera_focal),
            pose3d,
            scene: SyntheticScene {
                canonical_pose: canonical,
                view_rotation: view,
                noise_sigma: cfg.noise_sigma,
                camera_focal: cfg.camera_focal,
                view_bucket: view_bucket(angles[2]),
                subject,
            },
        });
    }
    Ok(out)
}

/// `(x, y) = scale * (X, Y)`; depth is dropped.
pub fn project_orthographic(pose: &Pose3D, scale: f64) -> Pose2D {
    let joints = pose
        .joints()
        .iter()
        .map(|p| Vector2::new(scale * p.x, scale * p.y))
        .collect();
    Pose2D::new(joints).expect("finite input stays finite")
}

fn rot(axis: Vector3<f64>, deg: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), deg.to_radians())
}

fn uniform_around(rng: &mut impl Rng, rest: f64, half_width: f64) -> f64 {
    rest + rng.random_range(-half_width..=half_width)
}

struct LimbRange {
    flex: (f64, f64),
    abduct: (f64, f64),
    twist: (f64, f64),
    bend: (f64, f64),
    /// +1 bends the distal segment forward (elbow), -1 backward (knee).
    hinge: f64,
}

const ARM: LimbRange = LimbRange {
    flex: (0.0, 60.0),
    abduct: (35.0, 30.0),
    twist: (0.0, 45.0),
    bend: (70.0, 60.0),
    hinge: 1.0,
};

const LEG: LimbRange = LimbRange {
    flex: (10.0, 50.0),
    abduct: (5.0, 15.0),
    twist: (0.0, 30.0),
    bend: (65.0, 60.0),
    hinge: -1.0,
};

/// Directions of the proximal and distal segments of one limb. `side` is +1
/// for the right (+Y) side and -1 for the left.
fn limb_dirs(rng: &mut impl Rng, range: &LimbRange, side: f64) -> (Vector3<f64>, Vector3<f64>) {
    let flex = uniform_around(rng, range.flex.0, range.flex.1);
    let abduct = uniform_around(rng, range.abduct.0, range.abduct.1);
    let twist = uniform_around(rng, range.twist.0, range.twist.1);
    let bend = uniform_around(rng, range.bend.0, range.bend.1);
    // Positive rotation about +Y swings the downward rest vector toward -X
    // (forward); positive rotation about +X swings it toward +Y.
    let proximal = rot(Vector3::y(), flex)
        * rot(Vector3::x(), side * abduct)
        * rot(Vector3::z(), side * twist);
    let down = Vector3::new(0.0, 0.0, -1.0);
    let upper = proximal * down;
    let lower = proximal * rot(Vector3::y(), range.hinge * bend) * down;
    (upper, lower)
}

/// One body in the canonical view, joints in the default topology order.
fn sample_body(rng: &mut impl Rng, scale: f64) -> Pose3D {
    let s = scale;
    let root = Vector3::zeros();
    let right_hip = Vector3::new(0.0, 130.0 * s, 0.0);
    let left_hip = Vector3::new(0.0, -130.0 * s, 0.0);
    let chest = Vector3::new(0.0, 0.0, 240.0 * s);
    let thorax = Vector3::new(0.0, 0.0, 490.0 * s);
    let left_shoulder = thorax + Vector3::new(0.0, -150.0 * s, -20.0 * s);
    let right_shoulder = thorax + Vector3::new(0.0, 150.0 * s, -20.0 * s);

    let up = Vector3::z();
    // Neck and head tilt: negative rotation about +Y leans toward -X.
    let neck = rot(Vector3::y(), uniform_around(rng, -20.0, 30.0))
        * rot(Vector3::x(), uniform_around(rng, 0.0, 20.0));
    let jaw = thorax + neck * up * (110.0 * s);
    let head = jaw + neck * rot(Vector3::y(), uniform_around(rng, -10.0, 20.0)) * up * (115.0 * s);

    let (l_upper_arm, l_forearm) = limb_dirs(rng, &ARM, -1.0);
    let (r_upper_arm, r_forearm) = limb_dirs(rng, &ARM, 1.0);
    let (l_thigh, l_shin) = limb_dirs(rng, &LEG, -1.0);
    let (r_thigh, r_shin) = limb_dirs(rng, &LEG, 1.0);

    let left_elbow = left_shoulder + l_upper_arm * (280.0 * s);
    let left_wrist = left_elbow + l_forearm * (250.0 * s);
    let right_elbow = right_shoulder + r_upper_arm * (280.0 * s);
    let right_wrist = right_elbow + r_forearm * (250.0 * s);
    let left_knee = left_hip + l_thigh * (450.0 * s);
    let left_ankle = left_knee + l_shin * (440.0 * s);
    let right_knee = right_hip + r_thigh * (450.0 * s);
    let right_ankle = right_knee + r_shin * (440.0 * s);

    Pose3D::new(vec![
        root,
        right_hip,
        right_knee,
        right_ankle,
        left_hip,
        left_knee,
        left_ankle,
        chest,
        thorax,
        jaw,
        head,
        left_shoulder,
        left_elbow,
        left_wrist,
        right_shoulder,
        right_elbow,
        right_wrist,
    ])
    .expect("finite construction")
}
