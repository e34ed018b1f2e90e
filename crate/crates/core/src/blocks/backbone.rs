use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::nn::{Conv, Ctx, LayerNorm, ParamBuilder};
use crate::tensor::{AxisSet, Scalar};

use super::simple_gate;

/// Gated block with simplified channel attention and a residual.
#[derive(Clone, Debug)]
pub struct ScaBlock {
    pub norm: LayerNorm,
    pub expand: Conv,
    pub dw: Conv,
    pub sca: Conv,
    pub project: Conv,
}

impl ScaBlock {
    pub fn new<T: Scalar>(b: &mut ParamBuilder<'_, T>, name: &str, c: usize) -> Result<Self> {
        let mut s = b.scope(name);
        Ok(ScaBlock {
            norm: LayerNorm::new(&mut s, "norm", c)?,
            expand: Conv::pointwise(&mut s, "expand", c, 2 * c)?,
            dw: Conv::depthwise(&mut s, "dw3", 2 * c, 3)?,
            sca: Conv::pointwise(&mut s, "sca", c, c)?,
            project: Conv::pointwise(&mut s, "project", c, c)?,
        })
    }

    /// The non-residual path.
    pub fn branch<'t, T: Scalar>(&self, ctx: &Ctx<'t, T>, x: &Var<'t, T>) -> Result<Var<'t, T>> {
        let h = self.norm.forward(ctx, x)?;
        let h = self.dw.forward(ctx, &self.expand.forward(ctx, &h)?)?;
        let h = simple_gate(&h)?;
        let att = self.sca.forward(ctx, &h.reduce_mean(AxisSet::SPATIAL)?)?;
        self.project.forward(ctx, &h.mul(&att)?)
    }

    pub fn forward<'t, T: Scalar>(&self, ctx: &Ctx<'t, T>, x: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.branch(ctx, x)?.add(x)
    }
}

/// Two-scale (3×3 / 5×5) gated fusion block with cross-branch mixing.
#[derive(Clone, Debug)]
pub struct MsfBlock {
    pub norm: LayerNorm,
    pub expand_top: Conv,
    pub dw_top: Conv,
    pub expand_bottom: Conv,
    pub dw_bottom: Conv,
    pub cross_top: Conv,
    pub cross_bottom: Conv,
    pub project: Conv,
}

impl MsfBlock {
    pub fn new<T: Scalar>(b: &mut ParamBuilder<'_, T>, name: &str, c: usize) -> Result<Self> {
        let mut s = b.scope(name);
        Ok(MsfBlock {
            norm: LayerNorm::new(&mut s, "norm", c)?,
            expand_top: Conv::pointwise(&mut s, "expand_top", c, 2 * c)?,
            dw_top: Conv::depthwise(&mut s, "dw3_top", 2 * c, 3)?,
            expand_bottom: Conv::pointwise(&mut s, "expand_bottom", c, 2 * c)?,
            dw_bottom: Conv::depthwise(&mut s, "dw5_bottom", 2 * c, 5)?,
            cross_top: Conv::depthwise(&mut s, "cross_dw3", 2 * c, 3)?,
            cross_bottom: Conv::depthwise(&mut s, "cross_dw5", 2 * c, 5)?,
            project: Conv::pointwise(&mut s, "project", 2 * c, c)?,
        })
    }

    pub fn branch<'t, T: Scalar>(&self, ctx: &Ctx<'t, T>, x: &Var<'t, T>) -> Result<Var<'t, T>> {
        let h = self.norm.forward(ctx, x)?;
        let top = simple_gate(
            &self
                .dw_top
                .forward(ctx, &self.expand_top.forward(ctx, &h)?)?,
        )?;
        let bottom = simple_gate(
            &self
                .dw_bottom
                .forward(ctx, &self.expand_bottom.forward(ctx, &h)?)?,
        )?;
        let a = simple_gate(
            &self
                .cross_top
                .forward(ctx, &Var::cat_channels(&[&top, &bottom])?)?,
        )?;
        let b = simple_gate(
            &self
                .cross_bottom
                .forward(ctx, &Var::cat_channels(&[&bottom, &top])?)?,
        )?;
        self.project.forward(ctx, &Var::cat_channels(&[&a, &b])?)
    }

    pub fn forward<'t, T: Scalar>(&self, ctx: &Ctx<'t, T>, x: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.branch(ctx, x)?.add(x)
    }
}

/// `F' = F + SCAB(F)`, `out = F' + MSFB(F')`. The inner blocks keep their
/// own residuals, so identity paths are counted twice. Without the outer
/// residual it is just `MSFB(SCAB(F))`.
#[derive(Clone, Debug)]
pub struct MssfBlock {
    pub sca: ScaBlock,
    pub msf: MsfBlock,
    pub outer_residual: bool,
}

impl MssfBlock {
    pub fn new<T: Scalar>(b: &mut ParamBuilder<'_, T>, name: &str, c: usize) -> Result<Self> {
        let mut s = b.scope(name);
        Ok(MssfBlock {
            sca: ScaBlock::new(&mut s, "sca", c)?,
            msf: MsfBlock::new(&mut s, "msf", c)?,
            outer_residual: true,
        })
    }

    pub fn with_outer_residual(mut self, on: bool) -> Self {
        self.outer_residual = on;
        self
    }

    pub fn forward<'t, T: Scalar>(&self, ctx: &Ctx<'t, T>, f: &Var<'t, T>) -> Result<Var<'t, T>> {
        if !self.outer_residual {
            return self.msf.forward(ctx, &self.sca.forward(ctx, f)?);
        }
        let f1 = f.add(&self.sca.forward(ctx, f)?)?;
        f1.add(&self.msf.forward(ctx, &f1)?)
    }
}

/// Learnable upsampling: 1×1 conv to `c·r²` channels, then pixel shuffle.
#[derive(Clone, Debug)]
pub struct Upsample {
    pub conv: Conv,
    pub factor: usize,
}

impl Upsample {
    pub fn new<T: Scalar>(
        b: &mut ParamBuilder<'_, T>,
        name: &str,
        cin: usize,
        cout: usize,
        factor: usize,
    ) -> Result<Self> {
        Ok(Upsample {
            conv: Conv::pointwise(b, name, cin, cout * factor * factor)?,
            factor,
        })
    }

    pub fn forward<'t, T: Scalar>(&self, ctx: &Ctx<'t, T>, x: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.conv.forward(ctx, x)?.pixel_shuffle(self.factor)
    }
}

#[derive(Clone, Debug)]
pub struct MsBranch {
    pub sca: Vec<ScaBlock>,
    pub msf: MsfBlock,
}

impl MsBranch {
    fn new<T: Scalar>(b: &mut ParamBuilder<'_, T>, name: &str, c: usize, n: usize) -> Result<Self> {
        let mut s = b.scope(name);
        let sca = (0..n)
            .map(|i| ScaBlock::new(&mut s, &format!("sca{i}"), c))
            .collect::<Result<_>>()?;
        Ok(MsBranch {
            sca,
            msf: MsfBlock::new(&mut s, "msf", c)?,
        })
    }

    fn forward<'t, T: Scalar>(&self, ctx: &Ctx<'t, T>, x: &Var<'t, T>) -> Result<Var<'t, T>> {
        let mut h = x.clone();
        for blk in &self.sca {
            h = blk.forward(ctx, &h)?;
        }
        self.msf.forward(ctx, &h)
    }
}

/// Three-resolution block: branches at full, half and quarter size, the
/// quarter branch also seeing the downsampled half-branch output.
#[derive(Clone, Debug)]
pub struct MsBlock {
    pub branches: [MsBranch; 3],
    pub up2: Upsample,
    pub up4: Upsample,
}

impl MsBlock {
    pub fn new<T: Scalar>(
        b: &mut ParamBuilder<'_, T>,
        name: &str,
        c: usize,
        n: usize,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config(format!(
                "{name}: need at least one SCABlock per branch"
            )));
        }
        let mut s = b.scope(name);
        Ok(MsBlock {
            branches: [
                MsBranch::new(&mut s, "full", c, n)?,
                MsBranch::new(&mut s, "half", c, n)?,
                MsBranch::new(&mut s, "quarter", c, n)?,
            ],
            up2: Upsample::new(&mut s, "up2", c, c, 2)?,
            up4: Upsample::new(&mut s, "up4", c, c, 4)?,
        })
    }

    pub fn forward<'t, T: Scalar>(&self, ctx: &Ctx<'t, T>, x: &Var<'t, T>) -> Result<Var<'t, T>> {
        let s = x.shape();
        if s.h() % 4 != 0 || s.w() % 4 != 0 {
            return Err(Error::invalid(
                "msblock",
                format!("spatial size {}x{} is not divisible by 4", s.h(), s.w()),
            ));
        }
        let x1 = self.branches[0].forward(ctx, x)?;
        let x2 = self.branches[1].forward(ctx, &x.avg_downsample(2)?)?;
        let x3_in = x.avg_downsample(4)?.add(&x2.avg_downsample(2)?)?;
        let x3 = self.branches[2].forward(ctx, &x3_in)?;
        x1.add(&self.up2.forward(ctx, &x2)?)?
            .add(&self.up4.forward(ctx, &x3)?)
    }
}
