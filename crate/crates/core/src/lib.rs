//! View-invariant 3D human pose refinement.
//!
//! The crate is organized along the processing pipeline:
//!
//! - [`skeleton`]: joint topology, pose containers, pose files and a synthetic
//!   multi-view pose generator.
//! - [`geometry`]: anatomical-plane canonical frames, rigid transforms and
//!   Procrustes alignment.
//! - [`nn`]: dense / batch-norm / dropout / residual layers with hand-written
//!   reverse-mode gradients, Adam and checkpoints.
//! - [`model`]: base lifting network, global and per-part refiners, the
//!   plausibility discriminator and the full estimation pipeline.
//! - [`train`]: losses, normalization and the alternating adversarial loop.
//! - [`metrics`]: MPJPE, PA-MPJPE, bone error, bone std, limb symmetry and the
//!   evaluation protocols built on them.

// `!(x > 0.0)` style checks are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod skeleton;
pub mod train;

pub use error::{Error, Result};
pub use geometry::{CanonicalFrame, RigidTransform, SimilarityTransform};
pub use metrics::EvalReport;
pub use model::{Pipeline, PipelineOutput, Scheme};
pub use skeleton::{PartSpec, Pose2D, Pose3D, SkeletonTopology, SyntheticScene};
pub use train::{LossReport, TrainConfig};
