use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, Pipeline, Scheme};
use crate::nn::{read_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
use crate::skeleton::{SkeletonTopology, TopologyConfig};
use crate::train::NormStats;
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "pipeline.json";
pub const WEIGHTS_FILE: &str = "weights.bin";

/// Everything needed to rebuild a trained pipeline, stored next to its
/// weight file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub checkpoint_version: u32,
    pub scheme: Scheme,
    pub seed: u64,
    pub topology: TopologyConfig,
    pub topology_hash: String,
    pub model: ModelConfig,
    pub stats: NormStats,
    pub stats_hash: String,
    pub weights: String,
    /// Component networks in weight-file order.
    pub networks: Vec<String>,
}

impl PipelineManifest {
    pub fn describe(pipe: &Pipeline) -> Self {
        let topo = pipe.topology();
        let mut networks = vec!["base".to_string()];
        if pipe.nets.global.is_some() {
            networks.push("global".into());
        }
        for (part, _) in topo.parts().iter().zip(&pipe.nets.parts) {
            networks.push(format!("part:{}", part.name));
        }
        if pipe.nets.disc.is_some() {
            networks.push("discriminator".into());
        }
        PipelineManifest {
            checkpoint_version: CHECKPOINT_VERSION,
            scheme: pipe.scheme(),
            seed: pipe.seed(),
            topology: topo.to_config(),
            topology_hash: topo.hash(),
            model: pipe.config().clone(),
            stats: pipe.stats().clone(),
            stats_hash: pipe.stats().hash(),
            weights: WEIGHTS_FILE.into(),
            networks,
        }
    }
}

/// Writes `pipeline.json` and `weights.bin` into `dir`.
pub fn save_pipeline(dir: &Path, pipe: &Pipeline) -> Result<PipelineManifest> {
    fs::create_dir_all(dir)?;
    let manifest = PipelineManifest::describe(pipe);
    write_checkpoint(&dir.join(&manifest.weights), &manifest.topology_hash, &pipe.nets.all())?;
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Loads a pipeline saved by [`save_pipeline`]. When `expected` is given the
/// stored topology must hash to the same value.
pub fn load_pipeline(dir: &Path, expected: Option<&SkeletonTopology>) -> Result<Pipeline> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| {
        Error::Checkpoint(format!("cannot read {}: {e}", path.display()))
    })?;
    let manifest: PipelineManifest = serde_json::from_str(&text)?;
    let topo = SkeletonTopology::from_config(&manifest.topology)?;
    if topo.hash() != manifest.topology_hash {
        return Err(Error::Checkpoint("manifest topology does not match its hash".into()));
    }
    if let Some(exp) = expected {
        if exp.hash() != manifest.topology_hash {
            return Err(Error::Checkpoint(format!(
                "topology hash mismatch: checkpoint {}, expected {}",
                manifest.topology_hash,
                exp.hash()
            )));
        }
    }
    if manifest.stats.hash() != manifest.stats_hash {
        return Err(Error::Checkpoint("normalization statistics do not match their hash".into()));
    }
    let mut pipe = Pipeline::new(
        topo,
        manifest.scheme,
        manifest.model.clone(),
        manifest.stats.clone(),
        manifest.seed,
    )?;
    read_checkpoint(
        &dir.join(&manifest.weights),
        &manifest.topology_hash,
        &mut pipe.nets.all_mut(),
    )?;
    Ok(pipe)
}
