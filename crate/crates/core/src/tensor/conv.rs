use std::borrow::Cow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Scalar, Shape, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PaddingMode {
    #[default]
    Zeros,
    Replicate,
}

/// Geometry of a 2-D convolution. Kernel and bias tensors are passed
/// alongside.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvOptions {
    pub stride: usize,
    pub padding: usize,
    pub padding_mode: PaddingMode,
    pub groups: usize,
}

impl Default for ConvOptions {
    fn default() -> Self {
        ConvOptions {
            stride: 1,
            padding: 0,
            padding_mode: PaddingMode::Zeros,
            groups: 1,
        }
    }
}

impl ConvOptions {
    /// Stride-1 convolution padded to keep the spatial size of an odd `k`.
    pub fn same(k: usize) -> Self {
        ConvOptions {
            padding: k / 2,
            ..Default::default()
        }
    }

    pub fn depthwise(k: usize, channels: usize) -> Self {
        ConvOptions {
            groups: channels,
            ..Self::same(k)
        }
    }

    pub fn with_mode(self, padding_mode: PaddingMode) -> Self {
        ConvOptions {
            padding_mode,
            ..self
        }
    }

    pub fn with_stride(self, stride: usize) -> Self {
        ConvOptions { stride, ..self }
    }
}

/// Pads height and width by `p` on every side.
pub fn pad<T: Scalar>(input: &Tensor<T>, p: usize, mode: PaddingMode) -> Tensor<T> {
    if p == 0 {
        return input.clone();
    }
    let [n, c, h, w] = input.shape().0;
    let (hp, wp) = (h + 2 * p, w + 2 * p);
    let mut out = vec![T::zero(); n * c * hp * wp];
    let src = input.data();
    out.par_chunks_mut(hp * wp)
        .zip(src.par_chunks(h * w))
        .for_each(|(dst, plane)| match mode {
            PaddingMode::Zeros => {
                for y in 0..h {
                    dst[(y + p) * wp + p..(y + p) * wp + p + w]
                        .copy_from_slice(&plane[y * w..(y + 1) * w]);
                }
            }
            PaddingMode::Replicate => {
                for yp in 0..hp {
                    let y = yp.saturating_sub(p).min(h - 1);
                    let row = &plane[y * w..(y + 1) * w];
                    let drow = &mut dst[yp * wp..(yp + 1) * wp];
                    drow[..p].fill(row[0]);
                    drow[p..p + w].copy_from_slice(row);
                    drow[p + w..].fill(row[w - 1]);
                }
            }
        });
    Tensor::from_vec([n, c, hp, wp], out).expect("padded size")
}

/// Vector-Jacobian product of [`pad`]: folds the padded gradient back onto
/// the `(h, w)` grid, accumulating border copies under replicate padding.
pub(crate) fn pad_backward<T: Scalar>(grad: &Tensor<T>, p: usize, mode: PaddingMode) -> Tensor<T> {
    if p == 0 {
        return grad.clone();
    }
    let [n, c, hp, wp] = grad.shape().0;
    let (h, w) = (hp - 2 * p, wp - 2 * p);
    let mut out = vec![T::zero(); n * c * h * w];
    out.par_chunks_mut(h * w)
        .zip(grad.data().par_chunks(hp * wp))
        .for_each(|(dst, gplane)| match mode {
            PaddingMode::Zeros => {
                for y in 0..h {
                    dst[y * w..(y + 1) * w]
                        .copy_from_slice(&gplane[(y + p) * wp + p..(y + p) * wp + p + w]);
                }
            }
            PaddingMode::Replicate => {
                for yp in 0..hp {
                    let y = yp.saturating_sub(p).min(h - 1);
                    let grow = &gplane[yp * wp..(yp + 1) * wp];
                    let drow = &mut dst[y * w..(y + 1) * w];
                    for (xp, &g) in grow.iter().enumerate() {
                        drow[xp.saturating_sub(p).min(w - 1)] += g;
                    }
                }
            }
        });
    Tensor::from_vec([n, c, h, w], out).expect("unpadded size")
}

struct Geometry {
    n: usize,
    cin: usize,
    cout: usize,
    cin_g: usize,
    cout_g: usize,
    kh: usize,
    kw: usize,
    hp: usize,
    wp: usize,
    ho: usize,
    wo: usize,
    stride: usize,
}

fn geometry<T: Scalar>(
    input: Shape,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    opts: &ConvOptions,
) -> Result<Geometry> {
    let [n, cin, h, w] = input.0;
    let [cout, cin_g, kh, kw] = weight.shape().0;
    if opts.groups == 0 || opts.stride == 0 {
        return Err(Error::invalid(
            "conv2d",
            "groups and stride must be positive",
        ));
    }
    if cin % opts.groups != 0 || cout % opts.groups != 0 {
        return Err(Error::invalid(
            "conv2d",
            format!(
                "groups={} must divide input channels {cin} and output channels {cout}",
                opts.groups
            ),
        ));
    }
    if cin_g * opts.groups != cin {
        return Err(Error::AxisMismatch {
            op: "conv2d",
            axis: "channel",
            expected: cin_g * opts.groups,
            got: cin,
        });
    }
    if let Some(b) = bias {
        if b.numel() != cout {
            return Err(Error::AxisMismatch {
                op: "conv2d bias",
                axis: "channel",
                expected: cout,
                got: b.numel(),
            });
        }
    }
    let (hp, wp) = (h + 2 * opts.padding, w + 2 * opts.padding);
    if hp < kh {
        return Err(Error::AxisMismatch {
            op: "conv2d",
            axis: "height",
            expected: kh,
            got: hp,
        });
    }
    if wp < kw {
        return Err(Error::AxisMismatch {
            op: "conv2d",
            axis: "width",
            expected: kw,
            got: wp,
        });
    }
    if opts.padding > 0 && opts.padding_mode == PaddingMode::Replicate && (h == 0 || w == 0) {
        return Err(Error::invalid(
            "conv2d",
            "cannot replicate-pad an empty plane",
        ));
    }
    Ok(Geometry {
        n,
        cin,
        cout,
        cin_g,
        cout_g: cout / opts.groups,
        kh,
        kw,
        hp,
        wp,
        ho: (hp - kh) / opts.stride + 1,
        wo: (wp - kw) / opts.stride + 1,
        stride: opts.stride,
    })
}

/// 2-D cross-correlation (the deep-learning "convolution").
///
/// `weight` is `(out_c, in_c / groups, kh, kw)`, `bias` holds `out_c`
/// values in any shape.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    opts: &ConvOptions,
) -> Result<Tensor<T>> {
    let g = geometry(input.shape(), weight, bias, opts)?;
    let xp: Cow<Tensor<T>> = if opts.padding == 0 {
        Cow::Borrowed(input)
    } else {
        Cow::Owned(pad(input, opts.padding, opts.padding_mode))
    };
    let xd = xp.data();
    let wd = weight.data();
    let plane_in = g.hp * g.wp;
    let plane_out = g.ho * g.wo;
    let ksize = g.kh * g.kw;
    let pointwise = g.kh == 1 && g.kw == 1 && g.stride == 1;

    let mut out = vec![T::zero(); g.n * g.cout * plane_out];
    out.par_chunks_mut(plane_out)
        .enumerate()
        .for_each(|(idx, oplane)| {
            let (ni, oc) = (idx / g.cout, idx % g.cout);
            if let Some(b) = bias {
                oplane.fill(b.data()[oc]);
            }
            let group = oc / g.cout_g;
            for icg in 0..g.cin_g {
                let ic = group * g.cin_g + icg;
                let iplane = &xd[(ni * g.cin + ic) * plane_in..][..plane_in];
                let wk = &wd[(oc * g.cin_g + icg) * ksize..][..ksize];
                if pointwise {
                    axpy(oplane, wk[0], iplane);
                    continue;
                }
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        let wv = wk[ky * g.kw + kx];
                        for oy in 0..g.ho {
                            let orow = &mut oplane[oy * g.wo..(oy + 1) * g.wo];
                            let base = (oy * g.stride + ky) * g.wp + kx;
                            if g.stride == 1 {
                                axpy(orow, wv, &iplane[base..base + g.wo]);
                            } else {
                                for (ox, o) in orow.iter_mut().enumerate() {
                                    *o += wv * iplane[base + ox * g.stride];
                                }
                            }
                        }
                    }
                }
            }
        });
    Tensor::from_vec([g.n, g.cout, g.ho, g.wo], out)
}

#[inline]
fn axpy<T: Scalar>(dst: &mut [T], a: T, src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub(crate) struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

pub(crate) fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    has_bias: bool,
    opts: &ConvOptions,
    grad_out: &Tensor<T>,
    need: [bool; 3],
) -> ConvGrads<T> {
    let g = geometry(input.shape(), weight, None, opts).expect("validated in forward");
    let plane_in = g.hp * g.wp;
    let plane_out = g.ho * g.wo;
    let ksize = g.kh * g.kw;
    let gd = grad_out.data();
    let wd = weight.data();

    let input_grad = need[0].then(|| {
        let mut gxp = vec![T::zero(); g.n * g.cin * plane_in];
        gxp.par_chunks_mut(plane_in)
            .enumerate()
            .for_each(|(idx, gplane)| {
                let (ni, ic) = (idx / g.cin, idx % g.cin);
                let group = ic / g.cin_g;
                let icg = ic % g.cin_g;
                for ocg in 0..g.cout_g {
                    let oc = group * g.cout_g + ocg;
                    let go = &gd[(ni * g.cout + oc) * plane_out..][..plane_out];
                    let wk = &wd[(oc * g.cin_g + icg) * ksize..][..ksize];
                    for ky in 0..g.kh {
                        for kx in 0..g.kw {
                            let wv = wk[ky * g.kw + kx];
                            for oy in 0..g.ho {
                                let grow = &go[oy * g.wo..(oy + 1) * g.wo];
                                let base = (oy * g.stride + ky) * g.wp + kx;
                                if g.stride == 1 {
                                    axpy(&mut gplane[base..base + g.wo], wv, grow);
                                } else {
                                    for (ox, &gv) in grow.iter().enumerate() {
                                        gplane[base + ox * g.stride] += wv * gv;
                                    }
                                }
                            }
                        }
                    }
                }
            });
        let gxp = Tensor::from_vec([g.n, g.cin, g.hp, g.wp], gxp).expect("padded grad");
        pad_backward(&gxp, opts.padding, opts.padding_mode)
    });

    let weight_grad = need[1].then(|| {
        let xp: Cow<Tensor<T>> = if opts.padding == 0 {
            Cow::Borrowed(input)
        } else {
            Cow::Owned(pad(input, opts.padding, opts.padding_mode))
        };
        let xd = xp.data();
        let mut gw = vec![T::zero(); g.cout * g.cin_g * ksize];
        gw.par_chunks_mut(g.cin_g * ksize)
            .enumerate()
            .for_each(|(oc, gwo)| {
                let group = oc / g.cout_g;
                for icg in 0..g.cin_g {
                    let ic = group * g.cin_g + icg;
                    for ky in 0..g.kh {
                        for kx in 0..g.kw {
                            let mut acc = T::zero();
                            for ni in 0..g.n {
                                let go = &gd[(ni * g.cout + oc) * plane_out..][..plane_out];
                                let iplane = &xd[(ni * g.cin + ic) * plane_in..][..plane_in];
                                for oy in 0..g.ho {
                                    let grow = &go[oy * g.wo..(oy + 1) * g.wo];
                                    let base = (oy * g.stride + ky) * g.wp + kx;
                                    if g.stride == 1 {
                                        acc += dot(grow, &iplane[base..base + g.wo]);
                                    } else {
                                        for (ox, &gv) in grow.iter().enumerate() {
                                            acc += gv * iplane[base + ox * g.stride];
                                        }
                                    }
                                }
                            }
                            gwo[icg * ksize + ky * g.kw + kx] = acc;
                        }
                    }
                }
            });
        Tensor::from_vec(weight.shape(), gw).expect("weight grad")
    });

    let bias_grad = (need[2] && has_bias).then(|| {
        let mut gb = vec![T::zero(); g.cout];
        for ni in 0..g.n {
            for (oc, b) in gb.iter_mut().enumerate() {
                *b += gd[(ni * g.cout + oc) * plane_out..][..plane_out]
                    .iter()
                    .copied()
                    .sum::<T>();
            }
        }
        Tensor::from_vec([1, g.cout, 1, 1], gb).expect("bias grad")
    });

    ConvGrads {
        input: input_grad,
        weight: weight_grad,
        bias: bias_grad,
    }
}
