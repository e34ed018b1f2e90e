use serde::{Deserialize, Serialize};

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::nn::{Conv, Ctx, LayerNorm, ParamBuilder, ParamId};
use crate::tensor::{AxisSet, PaddingMode, Scalar};

/// Squashing applied to the SDAM channel score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelScore {
    #[default]
    Identity,
    Sigmoid,
}

/// Spatial-degradation attention: a location map from channel mean/max and a
/// channel score from pooled features, plus a depthwise shortcut.
#[derive(Clone, Debug)]
pub struct Sdam {
    pub spatial: Conv,
    pub dw5: Conv,
    pub dw7: Conv,
    pub channel: Conv,
    pub shortcut: Conv,
    pub score: ChannelScore,
}

impl Sdam {
    pub fn new<T: Scalar>(
        b: &mut ParamBuilder<'_, T>,
        name: &str,
        c: usize,
        score: ChannelScore,
    ) -> Result<Self> {
        let mut s = b.scope(name);
        Ok(Sdam {
            spatial: Conv::dense(&mut s, "spatial", 2, 1, 3)?,
            dw5: Conv::depthwise(&mut s, "dw5", c, 5)?,
            dw7: Conv::depthwise(&mut s, "dw7", c, 7)?,
            channel: Conv::pointwise(&mut s, "channel", c, c)?,
            shortcut: Conv::depthwise(&mut s, "dw3", c, 3)?,
            score,
        })
    }

    /// The `(n, 1, h, w)` location map.
    pub fn spatial_map<'t, T: Scalar>(
        &self,
        ctx: &Ctx<'t, T>,
        f: &Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let stats = Var::cat_channels(&[
            &f.reduce_mean(AxisSet::CHANNEL)?,
            &f.reduce_max(AxisSet::CHANNEL)?,
        ])?;
        self.spatial.forward(ctx, &stats)
    }

    /// The `(n, c, 1, 1)` channel score.
    pub fn channel_score<'t, T: Scalar>(
        &self,
        ctx: &Ctx<'t, T>,
        f: &Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let s = self
            .channel
            .forward(ctx, &f.reduce_mean(AxisSet::SPATIAL)?)?;
        Ok(match self.score {
            ChannelScore::Identity => s,
            ChannelScore::Sigmoid => s.sigmoid(),
        })
    }

    pub fn forward<'t, T: Scalar>(&self, ctx: &Ctx<'t, T>, f: &Var<'t, T>) -> Result<Var<'t, T>> {
        let local = self.dw7.forward(ctx, &self.dw5.forward(ctx, f)?)?;
        let fs = self.spatial_map(ctx, f)?.mul(&local)?;
        let fc = self.channel_score(ctx, f)?.mul(f)?;
        fs.add(&fc)?.add(&self.shortcut.forward(ctx, f)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdamConfig {
    /// Odd filter size.
    pub k: usize,
    /// Number of channel groups, one low-pass filter each.
    pub groups: usize,
}

impl Default for FdamConfig {
    fn default() -> Self {
        FdamConfig { k: 3, groups: 8 }
    }
}

impl FdamConfig {
    pub fn validate(&self, c: usize) -> Result<()> {
        if self.k % 2 == 0 || self.k == 0 {
            return Err(Error::Config(format!("fdam k={} must be odd", self.k)));
        }
        if self.groups == 0 || c % self.groups != 0 {
            return Err(Error::Config(format!(
                "fdam groups={} must divide {c} channels",
                self.groups
            )));
        }
        Ok(())
    }
}

/// Frequency-degradation attention: a per-sample, per-group normalized
/// low-pass filter predicted from pooled features. The high-frequency
/// residual gates the input.
#[derive(Clone, Debug)]
pub struct Fdam {
    pub cfg: FdamConfig,
    pub proj: Conv,
    pub norm: LayerNorm,
}

impl Fdam {
    pub fn new<T: Scalar>(
        b: &mut ParamBuilder<'_, T>,
        name: &str,
        c: usize,
        cfg: FdamConfig,
    ) -> Result<Self> {
        cfg.validate(c)?;
        let p = cfg.groups * cfg.k * cfg.k;
        let mut s = b.scope(name);
        Ok(Fdam {
            cfg,
            proj: Conv::pointwise(&mut s, "proj", c, p)?,
            norm: LayerNorm::new(&mut s, "norm", p)?,
        })
    }

    /// `(n, groups, k, k)` filters, each nonnegative and summing to one.
    pub fn filter_bank<'t, T: Scalar>(
        &self,
        ctx: &Ctx<'t, T>,
        f: &Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        self.cfg.validate(f.shape().c())?;
        let logits = self.proj.forward(ctx, &f.reduce_mean(AxisSet::SPATIAL)?)?;
        let logits = self.norm.forward(ctx, &logits)?;
        let k = self.cfg.k;
        logits
            .reshape([f.shape().n(), self.cfg.groups, k, k])?
            .softmax(AxisSet::SPATIAL)
    }

    /// Low- and high-frequency parts; they sum to `f`.
    pub fn decompose<'t, T: Scalar>(
        &self,
        ctx: &Ctx<'t, T>,
        f: &Var<'t, T>,
    ) -> Result<(Var<'t, T>, Var<'t, T>)> {
        let bank = self.filter_bank(ctx, f)?;
        let low = f
            .unfold(self.cfg.k, PaddingMode::Replicate)?
            .apply_filter_bank(&bank)?;
        let high = f.sub(&low)?;
        Ok((low, high))
    }

    pub fn forward<'t, T: Scalar>(&self, ctx: &Ctx<'t, T>, f: &Var<'t, T>) -> Result<Var<'t, T>> {
        let (_, high) = self.decompose(ctx, f)?;
        high.mul(f)?.add(f)
    }
}

/// The two orderings of SDAM and FDAM.
pub struct SfamBranches<'t, T: Scalar> {
    /// `SDAM(FDAM(f))`, before weighting.
    pub sdam_fdam: Var<'t, T>,
    /// `FDAM(SDAM(f))`.
    pub fdam_sdam: Var<'t, T>,
}

/// Parallel fusion of both attention orders, the first weighted per channel.
#[derive(Clone, Debug)]
pub struct Sfam {
    pub sdam: Sdam,
    pub fdam: Fdam,
    /// Separate modules for the second branch, when not shared.
    pub second: Option<(Sdam, Fdam)>,
    pub weight: ParamId,
}

impl Sfam {
    pub fn new<T: Scalar>(
        b: &mut ParamBuilder<'_, T>,
        name: &str,
        c: usize,
        fdam: FdamConfig,
        score: ChannelScore,
        shared: bool,
    ) -> Result<Self> {
        let mut s = b.scope(name);
        let sdam_m = Sdam::new(&mut s, "sdam", c, score)?;
        let fdam_m = Fdam::new(&mut s, "fdam", c, fdam)?;
        let second = if shared {
            None
        } else {
            Some((
                Sdam::new(&mut s, "sdam2", c, score)?,
                Fdam::new(&mut s, "fdam2", c, fdam)?,
            ))
        };
        Ok(Sfam {
            sdam: sdam_m,
            fdam: fdam_m,
            second,
            weight: s.constant("weight", [1, c, 1, 1], 1.0)?,
        })
    }

    pub fn branches<'t, T: Scalar>(
        &self,
        ctx: &Ctx<'t, T>,
        f: &Var<'t, T>,
    ) -> Result<SfamBranches<'t, T>> {
        let (sdam2, fdam2) = match &self.second {
            Some((s, d)) => (s, d),
            None => (&self.sdam, &self.fdam),
        };
        Ok(SfamBranches {
            sdam_fdam: self.sdam.forward(ctx, &self.fdam.forward(ctx, f)?)?,
            fdam_sdam: fdam2.forward(ctx, &sdam2.forward(ctx, f)?)?,
        })
    }

    pub fn forward<'t, T: Scalar>(&self, ctx: &Ctx<'t, T>, f: &Var<'t, T>) -> Result<Var<'t, T>> {
        let b = self.branches(ctx, f)?;
        ctx.param(self.weight).mul(&b.sdam_fdam)?.add(&b.fdam_sdam)
    }
}
