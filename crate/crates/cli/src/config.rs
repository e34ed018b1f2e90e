use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ecfnet_core::train::{Degradation, TrainConfig};
use ecfnet_core::ModelConfig;
use serde::{Deserialize, Serialize};

/// Where training pairs come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSpec {
    /// Generated test-card images degraded on the fly.
    Synthetic {
        count: usize,
        size: usize,
        degradation: Degradation,
        seed: u64,
        /// Extra pairs for held-out PSNR; 0 evaluates on the training pairs.
        #[serde(default)]
        heldout: usize,
    },
    /// `input/` and `target/` subdirectories of matching PPM files.
    Pairs {
        train: PathBuf,
        #[serde(default)]
        heldout: Option<PathBuf>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    pub data: DataSpec,
    pub out_dir: PathBuf,
}

impl RunConfig {
    /// Parses `path` and resolves every relative path against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.out_dir);
        if let DataSpec::Pairs { train, heldout } = &mut cfg.data {
            resolve(train);
            if let Some(h) = heldout {
                resolve(h);
            }
        }
        cfg.model.validate()?;
        cfg.train.validate()?;
        if let DataSpec::Synthetic { degradation, .. } = &cfg.data {
            degradation.validate()?;
        }
        Ok(cfg)
    }
}
