use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use vipose::{SkeletonTopology, TrainConfig};

use crate::args::TrainOverrides;
use crate::CliError;

/// Directory searched for `train.toml` and `topology.toml` when no path is given.
pub const CONFIG_DIR_ENV: &str = "VIPOSE_CONFIG_DIR";

fn from_config_dir(name: &str) -> Option<PathBuf> {
    let dir = std::env::var_os(CONFIG_DIR_ENV)?;
    let path = Path::new(&dir).join(name);
    path.is_file().then_some(path)
}

pub fn resolve_topology(flag: Option<&Path>) -> Result<(SkeletonTopology, Option<PathBuf>), CliError> {
    match flag.map(Path::to_path_buf).or_else(|| from_config_dir("topology.toml")) {
        Some(path) => Ok((SkeletonTopology::load(&path)?, Some(path))),
        None => Ok((SkeletonTopology::default_topology(), None)),
    }
}

/// Defaults, then the config file, then flags.
pub fn resolve_train_config(ov: &TrainOverrides) -> Result<(TrainConfig, Option<PathBuf>), CliError> {
    let path = ov.config.clone().or_else(|| from_config_dir("train.toml"));
    let mut cfg = match &path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(vipose::Error::from)?;
            TrainConfig::from_toml_str(&text)?
        }
        None => TrainConfig::default(),
    };
    if let Some(v) = ov.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = ov.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = ov.pretrain_epochs {
        cfg.pretrain_epochs = v;
    }
    if let Some(v) = ov.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = ov.seed {
        cfg.seed = v;
    }
    if let Some(v) = ov.generator_lr {
        cfg.generator_lr = v;
    }
    if let Some(v) = ov.discriminator_lr {
        cfg.discriminator_lr = v;
    }
    if ov.no_adversarial {
        cfg.adversarial = false;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok((cfg, path))
}

pub fn digest_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)[..8].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn config_hash(cfg: &TrainConfig) -> String {
    digest_hex(cfg.to_toml_string().as_bytes())
}
