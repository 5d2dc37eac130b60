//! Similarity Procrustes alignment (Umeyama).

use nalgebra::{Matrix3, Vector3, SVD};

use crate::skeleton::Pose3D;
use crate::{Error, Result};

/// `x -> s R x + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl SimilarityTransform {
    pub fn apply_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * p) + self.translation
    }

    pub fn apply(&self, pose: &Pose3D) -> Pose3D {
        pose.map(|p| self.apply_point(p))
    }
}

fn centroid(points: &[Vector3<f64>]) -> Vector3<f64> {
    points.iter().sum::<Vector3<f64>>() / points.len() as f64
}

/// Closed-form minimizer of `sum_j |s R est_j + t - ref_j|^2` over scale,
/// proper rotation and translation, together with the aligned estimate.
pub fn procrustes_align(
    estimate: &Pose3D,
    reference: &Pose3D,
) -> Result<(SimilarityTransform, Pose3D)> {
    if estimate.len() != reference.len() {
        return Err(Error::shape(format!(
            "Procrustes needs equal joint counts ({} vs {})",
            estimate.len(),
            reference.len()
        )));
    }
    if estimate.is_empty() {
        return Err(Error::AlignmentUndefined("empty pose".into()));
    }
    let mu_e = centroid(estimate.joints());
    let mu_r = centroid(reference.joints());

    let mut cov = Matrix3::zeros();
    let mut var_e = 0.0;
    for (e, r) in estimate.joints().iter().zip(reference.joints()) {
        let ec = e - mu_e;
        let rc = r - mu_r;
        cov += ec * rc.transpose();
        var_e += ec.norm_squared();
    }
    let extent = estimate.joints().iter().map(|p| p.norm()).fold(0.0, f64::max);
    if !(var_e > (1e-12 * extent.max(1.0)).powi(2)) {
        return Err(Error::AlignmentUndefined(
            "estimate has zero spatial variance".into(),
        ));
    }

    // cov = U S V^T with cov = sum est_c ref_c^T, so R = V D U^T.
    let svd = SVD::new(cov, true, true);
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested V^T").transpose();
    let d = if (v * u.transpose()).determinant() < 0.0 {
        -1.0
    } else {
        1.0
    };
    let diag = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let rotation = v * diag * u.transpose();
    let s = svd.singular_values;
    let scale = (s[0] + s[1] + d * s[2]) / var_e;
    let translation = mu_r - scale * (rotation * mu_e);

    let transform = SimilarityTransform {
        scale,
        rotation,
        translation,
    };
    Ok((transform, transform.apply(estimate)))
}
