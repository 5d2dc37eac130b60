use nalgebra::{Matrix3, Vector3};

use crate::skeleton::Pose3D;
use crate::{Error, Result};

/// Largest accepted `|R^T R - I|_F` and `|det R - 1|`.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-9;

/// Rotation plus translation, applied as `x -> R (x - t)`.
///
/// Keeping the translation inside the bracket means `t` is simply the point
/// that lands on the origin, which matches how canonical frames are defined.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

/// Rotation by `psi` about X in the passive form `[[1,0,0],[0,c,s],[0,-s,c]]`.
fn about_x(psi: f64) -> Matrix3<f64> {
    let (s, c) = psi.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, s, 0.0, -s, c)
}

fn about_y(psi: f64) -> Matrix3<f64> {
    let (s, c) = psi.sin_cos();
    Matrix3::new(c, 0.0, -s, 0.0, 1.0, 0.0, s, 0.0, c)
}

fn about_z(psi: f64) -> Matrix3<f64> {
    let (s, c) = psi.sin_cos();
    Matrix3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0)
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let err = orthonormality_error(&rotation);
        if !(err <= ORTHONORMAL_TOLERANCE) {
            return Err(Error::invalid(format!(
                "rotation is not orthonormal with det +1 (error {err:.3e})"
            )));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("translation".into()));
        }
        Ok(RigidTransform {
            rotation,
            translation,
        })
    }

    pub fn from_rotation(rotation: Matrix3<f64>) -> Result<Self> {
        Self::new(rotation, Vector3::zeros())
    }

    pub fn translation_only(translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Caller guarantees orthonormality (rows of an orthonormal basis).
    pub(crate) fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation,
            translation,
        }
    }

    /// `R = Rx(psi_x) * Ry(psi_y) * Rz(psi_z)`, each factor in passive form.
    pub fn from_euler(psi_x: f64, psi_y: f64, psi_z: f64) -> Self {
        RigidTransform {
            rotation: about_x(psi_x) * about_y(psi_y) * about_z(psi_z),
            translation: Vector3::zeros(),
        }
    }

    /// Recovers `[psi_x, psi_y, psi_z]` with `from_euler(..).rotation() == R`,
    /// `psi_y` in `[-pi/2, pi/2]`. At gimbal lock `psi_z` is reported as 0.
    pub fn euler_angles(&self) -> [f64; 3] {
        // With a = -psi_x etc. the matrix is the active product Ax(a) Ay(b) Az(c).
        let m = &self.rotation;
        let sb = m[(0, 2)].clamp(-1.0, 1.0);
        let b = sb.asin();
        let (a, c) = if (1.0 - sb.abs()) > 1e-12 {
            ((-m[(1, 2)]).atan2(m[(2, 2)]), (-m[(0, 1)]).atan2(m[(0, 0)]))
        } else {
            (m[(2, 1)].atan2(m[(1, 1)]), 0.0)
        };
        [-a, -b, -c]
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * (p - self.translation)
    }

    pub fn apply(&self, pose: &Pose3D) -> Pose3D {
        pose.map(|p| self.apply_point(p))
    }

    /// Exact inverse: rotation `R^T`, translation `-R t`.
    pub fn inverse(&self) -> Self {
        RigidTransform {
            rotation: self.rotation.transpose(),
            translation: -(self.rotation * self.translation),
        }
    }

    /// `self` applied after `inner`.
    pub fn compose(&self, inner: &RigidTransform) -> Self {
        RigidTransform {
            rotation: self.rotation * inner.rotation,
            translation: inner.translation + inner.rotation.transpose() * self.translation,
        }
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        (self.rotation - Matrix3::identity()).abs().max() <= tol
            && self.translation.abs().max() <= tol
    }

    /// Row-major rotation followed by the translation.
    pub fn to_array(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for i in 0..3 {
            for k in 0..3 {
                out[3 * i + k] = self.rotation[(i, k)];
            }
            out[9 + i] = self.translation[i];
        }
        out
    }

    pub fn from_array(v: &[f64]) -> Result<Self> {
        if v.len() != 12 {
            return Err(Error::shape(format!("transform needs 12 values, got {}", v.len())));
        }
        Self::new(
            Matrix3::from_row_slice(&v[..9]),
            Vector3::new(v[9], v[10], v[11]),
        )
    }

    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.rotation)
    }
}

/// `max(|R^T R - I|_F, |det R - 1|)`.
pub(crate) fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    let gram = (r.transpose() * r - Matrix3::identity()).norm();
    gram.max((r.determinant() - 1.0).abs())
}
