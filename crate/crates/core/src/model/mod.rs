//! The estimation pipeline: base lifting network, global refinement in the
//! canonical view, per-part refinement in part-local frames, inverse
//! transforms and the pose discriminator.

mod manifest;
mod networks;
mod pipeline;
mod probe;

use serde::{Deserialize, Serialize};

pub use manifest::{load_pipeline, save_pipeline, PipelineManifest, MANIFEST_FILE, WEIGHTS_FILE};
pub use networks::{base_network, discriminator_network, refiner_network, Networks, Stage};
pub(crate) use pipeline::{pull_back_rows, transform_rows};
pub use probe::PipelineProbe;
pub use pipeline::{
    pose2d_rows, pose3d_rows, BatchForward, Pipeline, PipelineOutput, PipelineTransforms, StageGrads,
};

/// Rungs of the ablation ladder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// Base network only.
    #[serde(rename = "B")]
    Baseline,
    /// Global and part refinement with translation-only frames.
    #[serde(rename = "B+HC")]
    Hc,
    /// Global refinement in the canonical view.
    #[serde(rename = "B+VI-GC")]
    ViGc,
    /// Part refinement in part-local frames, no global stage.
    #[serde(rename = "B+VI-LC")]
    ViLc,
    /// Global then part refinement.
    #[serde(rename = "B+VI-HC")]
    ViHc,
    /// `ViHc` plus a discriminator on original-view outputs.
    #[serde(rename = "B+VI-HC-D")]
    ViHcD,
    /// `ViHc` plus a discriminator on canonical-view outputs.
    #[serde(rename = "B+VI-HC-VID")]
    ViHcVid,
}

/// How stage frames are built.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameKind {
    /// Full anatomical frame: rotation and origin.
    Rotate,
    /// Origin only; orientation stays that of the input view.
    TranslateOnly,
}

/// Where discriminator inputs live.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdversarySpace {
    Original,
    Canonical,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::Baseline,
        Scheme::Hc,
        Scheme::ViGc,
        Scheme::ViLc,
        Scheme::ViHc,
        Scheme::ViHcD,
        Scheme::ViHcVid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Baseline => "B",
            Scheme::Hc => "B+HC",
            Scheme::ViGc => "B+VI-GC",
            Scheme::ViLc => "B+VI-LC",
            Scheme::ViHc => "B+VI-HC",
            Scheme::ViHcD => "B+VI-HC-D",
            Scheme::ViHcVid => "B+VI-HC-VID",
        }
    }

    pub fn from_name(name: &str) -> Option<Scheme> {
        Self::ALL.into_iter().find(|s| s.name().eq_ignore_ascii_case(name))
    }

    pub fn has_global_stage(self) -> bool {
        !matches!(self, Scheme::Baseline | Scheme::ViLc)
    }

    pub fn has_part_stage(self) -> bool {
        !matches!(self, Scheme::Baseline | Scheme::ViGc)
    }

    pub fn frame_kind(self) -> FrameKind {
        match self {
            Scheme::Hc => FrameKind::TranslateOnly,
            _ => FrameKind::Rotate,
        }
    }

    pub fn adversary(self) -> Option<AdversarySpace> {
        match self {
            Scheme::ViHcD => Some(AdversarySpace::Original),
            Scheme::ViHcVid => Some(AdversarySpace::Canonical),
            _ => None,
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        Scheme::from_name(s).ok_or_else(|| {
            crate::Error::invalid(format!(
                "unknown scheme {s:?}; expected one of {}",
                Scheme::ALL.map(Scheme::name).join(", ")
            ))
        })
    }
}

/// Layer sizes and regularization of every network in the pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub base_width: usize,
    pub base_blocks: usize,
    pub refiner_widths: [usize; 2],
    pub disc_widths: Vec<usize>,
    pub dropout: f64,
    /// Length unit (mm) applied to refiner and discriminator coordinates.
    pub coord_unit_mm: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            base_width: 1024,
            base_blocks: 2,
            refiner_widths: [400, 800],
            disc_widths: vec![256, 128, 64],
            dropout: 0.5,
            coord_unit_mm: 100.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.base_width == 0 || self.refiner_widths.contains(&0) || self.disc_widths.contains(&0) {
            return Err(crate::Error::Config("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(crate::Error::Config("dropout must be in [0, 1)".into()));
        }
        if !(self.coord_unit_mm > 0.0 && self.coord_unit_mm.is_finite()) {
            return Err(crate::Error::Config("coord_unit_mm must be positive".into()));
        }
        Ok(())
    }
}
