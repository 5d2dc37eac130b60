//! Canonical-view transforms and rigid alignment.
//!
//! A canonical frame is built from three joints spanning an anatomical plane
//! and two joints giving an in-plane axis. The matching [`RigidTransform`]
//! maps the plane normal onto `+X`, the axis onto `+Z` and the frame origin
//! onto the coordinate origin.

mod frame;
mod procrustes;
mod transform;

pub use frame::{
    canonicalize, frame_to_transform, global_frame, part_frame, CanonicalFrame,
    COLLINEAR_TOLERANCE,
};
pub use procrustes::{procrustes_align, SimilarityTransform};
pub use transform::{RigidTransform, ORTHONORMAL_TOLERANCE};
