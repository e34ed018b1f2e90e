use serde::{Deserialize, Serialize};

use crate::blocks::{ChannelScore, FdamConfig};
use crate::error::{Error, Result};
use crate::nn::WeightInit;

/// Side length every input image must be a multiple of.
pub const SIZE_MULTIPLE: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Dehaze,
    Deblur,
    Desnow,
}

/// Shallow extractor applied to the downscaled input images.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShallowVariant {
    /// 3×3 conv, 1×1 expand to twice the width, simple gate.
    #[default]
    Gated,
    /// A single 3×3 conv.
    Single,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub base_channels: usize,
    pub blocks_per_stage: usize,
    pub fdam: FdamConfig,
    /// 3, or 4 to add a refined full-resolution head.
    pub output_heads: usize,
    pub sfam_count: usize,
    pub sfam_shared: bool,
    pub channel_score: ChannelScore,
    pub shallow: ShallowVariant,
    /// Add the block input again around the SCABlock and MSFBlock of every
    /// MSSFBlock, on top of their own residuals. Each block then quadruples
    /// the identity path, so this only trains at tiny depths.
    pub mssf_outer_residual: bool,
    pub init: WeightInit,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            base_channels: 16,
            blocks_per_stage: 4,
            fdam: FdamConfig::default(),
            output_heads: 3,
            sfam_count: 1,
            sfam_shared: true,
            channel_score: ChannelScore::Identity,
            shallow: ShallowVariant::Gated,
            mssf_outer_residual: false,
            init: WeightInit::FanIn,
        }
    }
}

impl ModelConfig {
    pub fn preset(task: Task) -> Self {
        let blocks_per_stage = match task {
            Task::Dehaze => 4,
            Task::Deblur | Task::Desnow => 8,
        };
        ModelConfig {
            blocks_per_stage,
            ..Default::default()
        }
    }

    /// Channel widths of the three scales.
    pub fn scale_channels(&self) -> [usize; 3] {
        let c = self.base_channels;
        [c, 2 * c, 4 * c]
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 {
            return Err(Error::Config("base_channels must be positive".into()));
        }
        if self.blocks_per_stage == 0 {
            return Err(Error::Config("blocks_per_stage must be positive".into()));
        }
        if !matches!(self.output_heads, 3 | 4) {
            return Err(Error::Config(format!(
                "output_heads must be 3 or 4, got {}",
                self.output_heads
            )));
        }
        self.fdam.validate(self.scale_channels()[2])
    }
}
