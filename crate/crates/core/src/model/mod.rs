//! The three-scale encoder/decoder restoration network.

mod checkpoint;
mod config;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{ModelConfig, ShallowVariant, Task, SIZE_MULTIPLE};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::blocks::{simple_gate, MsBlock, MssfBlock, Sfam, Upsample};
use crate::error::{Error, Result};
use crate::nn::{Conv, Ctx, ParamBuilder, Params};
use crate::tensor::{self, ConvOptions, Scalar, Tensor};

/// Shallow features of a downscaled input image.
#[derive(Clone, Debug)]
pub struct ShallowConv {
    pub conv: Conv,
    pub gate: Option<Conv>,
}

impl ShallowConv {
    pub fn new<T: Scalar>(
        b: &mut ParamBuilder<'_, T>,
        name: &str,
        c: usize,
        variant: ShallowVariant,
    ) -> Result<Self> {
        let mut s = b.scope(name);
        let conv = Conv::dense(&mut s, "conv", 3, c, 3)?;
        let gate = match variant {
            ShallowVariant::Gated => Some(Conv::pointwise(&mut s, "expand", c, 2 * c)?),
            ShallowVariant::Single => None,
        };
        Ok(ShallowConv { conv, gate })
    }

    pub fn forward<'t, T: Scalar>(&self, ctx: &Ctx<'t, T>, x: &Var<'t, T>) -> Result<Var<'t, T>> {
        let h = self.conv.forward(ctx, x)?;
        match &self.gate {
            Some(expand) => simple_gate(&expand.forward(ctx, &h)?),
            None => Ok(h),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Network {
    pub shallow: Conv,
    pub enc1: MsBlock,
    pub down1: Conv,
    pub inject2: ShallowConv,
    pub merge2: Conv,
    pub enc2: Vec<MssfBlock>,
    pub down2: Conv,
    pub inject3: ShallowConv,
    pub merge3: Conv,
    pub enc3: Vec<MssfBlock>,
    pub sfam: Vec<Sfam>,
    pub dec3: Vec<MssfBlock>,
    pub head3: Conv,
    pub up3: Upsample,
    pub skip2: Conv,
    pub dec2: Vec<MssfBlock>,
    pub head2: Conv,
    pub up2: Upsample,
    pub skip1: Conv,
    pub dec1: MsBlock,
    pub head1: Conv,
    pub refine: Option<(MssfBlock, Conv)>,
}

fn stack<T: Scalar>(
    b: &mut ParamBuilder<'_, T>,
    name: &str,
    c: usize,
    cfg: &ModelConfig,
) -> Result<Vec<MssfBlock>> {
    let mut s = b.scope(name);
    (0..cfg.blocks_per_stage)
        .map(|i| {
            MssfBlock::new(&mut s, &i.to_string(), c)
                .map(|m| m.with_outer_residual(cfg.mssf_outer_residual))
        })
        .collect()
}

fn run_stack<'t, T: Scalar>(
    blocks: &[MssfBlock],
    ctx: &Ctx<'t, T>,
    x: Var<'t, T>,
) -> Result<Var<'t, T>> {
    blocks.iter().try_fold(x, |h, blk| blk.forward(ctx, &h))
}

impl Network {
    pub fn new<T: Scalar>(cfg: &ModelConfig, b: &mut ParamBuilder<'_, T>) -> Result<Self> {
        cfg.validate()?;
        let [c1, c2, c3] = cfg.scale_channels();
        let n = cfg.blocks_per_stage;
        let down = ConvOptions::same(3).with_stride(2);
        Ok(Network {
            shallow: Conv::dense(b, "shallow", 3, c1, 3)?,
            enc1: MsBlock::new(b, "enc1", c1, n)?,
            down1: Conv::new(b, "down1", c1, c2, 3, down)?,
            inject2: ShallowConv::new(b, "inject2", c2, cfg.shallow)?,
            merge2: Conv::pointwise(b, "merge2", 2 * c2, c2)?,
            enc2: stack(b, "enc2", c2, cfg)?,
            down2: Conv::new(b, "down2", c2, c3, 3, down)?,
            inject3: ShallowConv::new(b, "inject3", c3, cfg.shallow)?,
            merge3: Conv::pointwise(b, "merge3", 2 * c3, c3)?,
            enc3: stack(b, "enc3", c3, cfg)?,
            sfam: (0..cfg.sfam_count)
                .map(|i| {
                    Sfam::new(
                        b,
                        &format!("sfam{i}"),
                        c3,
                        cfg.fdam,
                        cfg.channel_score,
                        cfg.sfam_shared,
                    )
                })
                .collect::<Result<_>>()?,
            dec3: stack(b, "dec3", c3, cfg)?,
            head3: Conv::dense(b, "head3", c3, 3, 3)?,
            up3: Upsample::new(b, "up3", c3, c2, 2)?,
            skip2: Conv::pointwise(b, "skip2", 2 * c2, c2)?,
            dec2: stack(b, "dec2", c2, cfg)?,
            head2: Conv::dense(b, "head2", c2, 3, 3)?,
            up2: Upsample::new(b, "up2", c2, c1, 2)?,
            skip1: Conv::pointwise(b, "skip1", 2 * c1, c1)?,
            dec1: MsBlock::new(b, "dec1", c1, n)?,
            head1: Conv::dense(b, "head1", c1, 3, 3)?,
            refine: if cfg.output_heads == 4 {
                Some((
                    MssfBlock::new(b, "refine", c1)?.with_outer_residual(cfg.mssf_outer_residual),
                    Conv::dense(b, "head_refine", c1, 3, 3)?,
                ))
            } else {
                None
            },
        })
    }

    pub fn heads(&self) -> Vec<&Conv> {
        let mut heads = vec![&self.head1, &self.head2, &self.head3];
        if let Some((_, h)) = &self.refine {
            heads.push(h);
        }
        heads
    }

    /// Restored images, finest first: `[full, half, quarter]`, or
    /// `[refined, full, half, quarter]` with four heads.
    pub fn forward<'t, T: Scalar>(
        &self,
        ctx: &Ctx<'t, T>,
        image: &Var<'t, T>,
    ) -> Result<Vec<Var<'t, T>>> {
        let s = image.shape();
        if s.c() != 3 {
            return Err(Error::AxisMismatch {
                op: "model",
                axis: "channel",
                expected: 3,
                got: s.c(),
            });
        }
        if s.h() % SIZE_MULTIPLE != 0 || s.w() % SIZE_MULTIPLE != 0 || s.h() == 0 || s.w() == 0 {
            return Err(Error::invalid(
                "model",
                format!(
                    "image size {}x{} is not a positive multiple of {SIZE_MULTIPLE}",
                    s.h(),
                    s.w()
                ),
            ));
        }
        let tape = ctx.tape();
        let half = tape.constant(tensor::bilinear_resize(
            image.value(),
            s.h() / 2,
            s.w() / 2,
        )?);
        let quarter = tape.constant(tensor::bilinear_resize(
            image.value(),
            s.h() / 4,
            s.w() / 4,
        )?);

        let e1 = self.enc1.forward(ctx, &self.shallow.forward(ctx, image)?)?;
        let h = Var::cat_channels(&[
            &self.down1.forward(ctx, &e1)?,
            &self.inject2.forward(ctx, &half)?,
        ])?;
        let e2 = run_stack(&self.enc2, ctx, self.merge2.forward(ctx, &h)?)?;
        let h = Var::cat_channels(&[
            &self.down2.forward(ctx, &e2)?,
            &self.inject3.forward(ctx, &quarter)?,
        ])?;
        let mut h = run_stack(&self.enc3, ctx, self.merge3.forward(ctx, &h)?)?;
        for sfam in &self.sfam {
            h = sfam.forward(ctx, &h)?;
        }

        let d3 = run_stack(&self.dec3, ctx, h)?;
        let out3 = self.head3.forward(ctx, &d3)?.add(&quarter)?;
        let h = Var::cat_channels(&[&self.up3.forward(ctx, &d3)?, &e2])?;
        let d2 = run_stack(&self.dec2, ctx, self.skip2.forward(ctx, &h)?)?;
        let out2 = self.head2.forward(ctx, &d2)?.add(&half)?;
        let h = Var::cat_channels(&[&self.up2.forward(ctx, &d2)?, &e1])?;
        let d1 = self.dec1.forward(ctx, &self.skip1.forward(ctx, &h)?)?;
        let out1 = self.head1.forward(ctx, &d1)?.add(image)?;

        let mut outputs = Vec::with_capacity(4);
        if let Some((blk, head)) = &self.refine {
            let r = blk.forward(ctx, &d1)?;
            outputs.push(head.forward(ctx, &r)?.add(image)?);
        }
        outputs.extend([out1, out2, out3]);
        Ok(outputs)
    }
}

/// Configuration, parameters and layer layout of one network.
#[derive(Clone, Debug)]
pub struct Model<T: Scalar = f32> {
    pub config: ModelConfig,
    pub params: Params<T>,
    pub net: Network,
}

impl<T: Scalar> Model<T> {
    /// Deterministically initialized model.
    pub fn build(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut params = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Network::new(
            &config,
            &mut ParamBuilder::new(&mut params, &mut rng).with_init(config.init),
        )?;
        Ok(Model {
            config,
            params,
            net,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    pub fn forward<'t>(&self, ctx: &Ctx<'t, T>, image: &Var<'t, T>) -> Result<Vec<Var<'t, T>>> {
        self.net.forward(ctx, image)
    }

    /// Forward pass without recording; returns the output images.
    pub fn infer(&self, image: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let tape = Tape::inference();
        let ctx = self.params.bind(&tape, false);
        let outs = self.forward(&ctx, &tape.constant(image.clone()))?;
        Ok(outs.into_iter().map(|v| v.value().clone()).collect())
    }

    /// Multiply-accumulates of the convolutions for one `h×w` image.
    pub fn conv_macs(&self, h: usize, w: usize) -> Result<u64> {
        let tape = Tape::inference();
        let ctx = self.params.bind(&tape, false);
        self.forward(&ctx, &tape.constant(Tensor::zeros([1, 3, h, w])))?;
        Ok(tape.conv_macs())
    }

    /// Zeroes every output head so each output is the resized input.
    pub fn zero_heads(&mut self) {
        let ids: Vec<_> = self
            .net
            .heads()
            .iter()
            .flat_map(|h| [Some(h.weight), h.bias])
            .flatten()
            .collect();
        for id in ids {
            self.params
                .get_mut(id)
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = T::zero());
        }
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
            net: self.net.clone(),
        }
    }
}
