use super::conv::{pad, pad_backward, PaddingMode};
use super::{Scalar, Shape, Tensor};
use crate::error::{Error, Result};

/// im2col: `(n, c, h, w) -> (n, c*k*k, h, w)`. Output channel `c*k*k + dy*k + dx`
/// at `(y, x)` holds the input at `(y + dy - k/2, x + dx - k/2)`.
pub fn unfold<T: Scalar>(input: &Tensor<T>, k: usize, mode: PaddingMode) -> Result<Tensor<T>> {
    if k % 2 == 0 {
        return Err(Error::invalid(
            "unfold",
            format!("kernel size {k} must be odd"),
        ));
    }
    let [n, c, h, w] = input.shape().0;
    if h == 0 || w == 0 {
        return Err(Error::invalid("unfold", "empty spatial plane"));
    }
    let p = k / 2;
    let xp = pad(input, p, mode);
    let wp = w + 2 * p;
    let plane_p = (h + 2 * p) * wp;
    let src = xp.data();
    let mut out = Vec::with_capacity(n * c * k * k * h * w);
    for i in 0..n {
        for ch in 0..c {
            let ip = &src[(i * c + ch) * plane_p..][..plane_p];
            for dy in 0..k {
                for dx in 0..k {
                    for y in 0..h {
                        out.extend_from_slice(&ip[(y + dy) * wp + dx..][..w]);
                    }
                }
            }
        }
    }
    Tensor::from_vec([n, c * k * k, h, w], out)
}

pub(crate) fn unfold_backward<T: Scalar>(
    input_shape: Shape,
    k: usize,
    mode: PaddingMode,
    grad: &Tensor<T>,
) -> Tensor<T> {
    let [n, c, h, w] = input_shape.0;
    let p = k / 2;
    let (hp, wp) = (h + 2 * p, w + 2 * p);
    let g = grad.data();
    let mut gp = vec![T::zero(); n * c * hp * wp];
    let plane = h * w;
    for i in 0..n {
        for ch in 0..c {
            let dst = &mut gp[(i * c + ch) * hp * wp..][..hp * wp];
            for dy in 0..k {
                for dx in 0..k {
                    let src = &g[((i * c + ch) * k * k + dy * k + dx) * plane..][..plane];
                    for y in 0..h {
                        let drow = &mut dst[(y + dy) * wp + dx..][..w];
                        for (d, &s) in drow.iter_mut().zip(&src[y * w..(y + 1) * w]) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }
    let gp = Tensor::from_vec([n, c, hp, wp], gp).expect("padded grad");
    pad_backward(&gp, p, mode)
}

fn filter_bank_dims<T: Scalar>(
    unfolded: &Tensor<T>,
    bank: &Tensor<T>,
) -> Result<(usize, usize, usize)> {
    let [n, ckk, _, _] = unfolded.shape().0;
    let [bn, g, k, k2] = bank.shape().0;
    if k != k2 {
        return Err(Error::invalid("filter_bank", "filters must be square"));
    }
    if bn != n {
        return Err(Error::AxisMismatch {
            op: "filter_bank",
            axis: "batch",
            expected: n,
            got: bn,
        });
    }
    let kk = k * k;
    if ckk % kk != 0 {
        return Err(Error::invalid(
            "filter_bank",
            format!("{ckk} unfolded channels are not a multiple of {kk}"),
        ));
    }
    let c = ckk / kk;
    if g == 0 || c % g != 0 {
        return Err(Error::invalid(
            "filter_bank",
            format!("{g} filter groups do not divide {c} channels"),
        ));
    }
    Ok((c, g, kk))
}

/// Applies per-sample, per-group `k×k` filters to an unfolded map:
/// `out[n, c] = Σ_j bank[n, c / (C/g), j] · unfolded[n, c·k² + j]`.
/// Channels are split into `g` contiguous groups sharing one filter.
pub fn apply_filter_bank<T: Scalar>(unfolded: &Tensor<T>, bank: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, g, kk) = filter_bank_dims(unfolded, bank)?;
    let [n, _, h, w] = unfolded.shape().0;
    let plane = h * w;
    let per_group = c / g;
    let u = unfolded.data();
    let b = bank.data();
    let mut out = vec![T::zero(); n * c * plane];
    for i in 0..n {
        for ch in 0..c {
            let filt = &b[(i * g + ch / per_group) * kk..][..kk];
            let dst = &mut out[(i * c + ch) * plane..][..plane];
            for (j, &fv) in filt.iter().enumerate() {
                let src = &u[((i * c + ch) * kk + j) * plane..][..plane];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += fv * s;
                }
            }
        }
    }
    Tensor::from_vec([n, c, h, w], out)
}

/// Returns `(d_unfolded, d_bank)`.
pub(crate) fn apply_filter_bank_backward<T: Scalar>(
    unfolded: &Tensor<T>,
    bank: &Tensor<T>,
    grad: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>) {
    let (c, g, kk) = filter_bank_dims(unfolded, bank).expect("validated in forward");
    let [n, _, h, w] = unfolded.shape().0;
    let plane = h * w;
    let per_group = c / g;
    let (u, b, gd) = (unfolded.data(), bank.data(), grad.data());
    let mut du = vec![T::zero(); u.len()];
    let mut db = vec![T::zero(); b.len()];
    for i in 0..n {
        for ch in 0..c {
            let fi = (i * g + ch / per_group) * kk;
            let go = &gd[(i * c + ch) * plane..][..plane];
            for j in 0..kk {
                let o = ((i * c + ch) * kk + j) * plane;
                let fv = b[fi + j];
                let mut acc = T::zero();
                for (k, &gv) in go.iter().enumerate() {
                    du[o + k] = fv * gv;
                    acc += gv * u[o + k];
                }
                db[fi + j] += acc;
            }
        }
    }
    (
        Tensor::from_vec(unfolded.shape(), du).expect("shape"),
        Tensor::from_vec(bank.shape(), db).expect("shape"),
    )
}

/// Non-overlapping `r×r` mean pooling.
pub fn avg_downsample<T: Scalar>(input: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let [n, c, h, w] = input.shape().0;
    if r == 0 || h % r != 0 || w % r != 0 {
        return Err(Error::invalid(
            "avg_downsample",
            format!("spatial size {h}x{w} is not divisible by ratio {r}"),
        ));
    }
    let (ho, wo) = (h / r, w / r);
    let inv = T::one() / T::of((r * r) as f64);
    let d = input.data();
    let mut out = vec![T::zero(); n * c * ho * wo];
    for (pi, dst) in out.chunks_mut(ho * wo).enumerate() {
        let src = &d[pi * h * w..][..h * w];
        for y in 0..h {
            let drow = &mut dst[(y / r) * wo..][..wo];
            for (x, &v) in src[y * w..(y + 1) * w].iter().enumerate() {
                drow[x / r] += v;
            }
        }
        dst.iter_mut().for_each(|v| *v *= inv);
    }
    Tensor::from_vec([n, c, ho, wo], out)
}

pub(crate) fn avg_downsample_backward<T: Scalar>(
    input_shape: Shape,
    r: usize,
    grad: &Tensor<T>,
) -> Tensor<T> {
    let inv = T::one() / T::of((r * r) as f64);
    let g = grad;
    Tensor::from_fn(input_shape, |[i, c, y, x]| g.at([i, c, y / r, x / r]) * inv)
}

/// Depth-to-space: input channel `c·r² + dy·r + dx` lands at spatial offset
/// `(dy, dx)` of output channel `c`.
pub fn pixel_shuffle<T: Scalar>(input: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let [n, c, h, w] = input.shape().0;
    if r == 0 || c % (r * r) != 0 {
        return Err(Error::invalid(
            "pixel_shuffle",
            format!("{c} channels are not divisible by r²={}", r * r),
        ));
    }
    let co = c / (r * r);
    Ok(Tensor::from_fn([n, co, h * r, w * r], |[i, ch, y, x]| {
        input.at([i, ch * r * r + (y % r) * r + x % r, y / r, x / r])
    }))
}

/// Space-to-depth, the exact inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle<T: Scalar>(input: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let [n, c, h, w] = input.shape().0;
    if r == 0 || h % r != 0 || w % r != 0 {
        return Err(Error::invalid(
            "pixel_unshuffle",
            format!("spatial size {h}x{w} is not divisible by {r}"),
        ));
    }
    Ok(Tensor::from_fn(
        [n, c * r * r, h / r, w / r],
        |[i, ch, y, x]| {
            let (co, off) = (ch / (r * r), ch % (r * r));
            input.at([i, co, y * r + off / r, x * r + off % r])
        },
    ))
}

/// Bilinear resampling with half-pixel centers and edge clamping. Not
/// differentiable; used for image pyramids and target resizing.
pub fn bilinear_resize<T: Scalar>(input: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let [n, c, hi, wi] = input.shape().0;
    if h == 0 || w == 0 || hi == 0 || wi == 0 {
        return Err(Error::invalid("bilinear_resize", "empty spatial size"));
    }
    if (h, w) == (hi, wi) {
        return Ok(input.clone());
    }
    let taps = |out: usize, inp: usize| -> Vec<(usize, usize, T)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let lo = s.floor() as usize;
                let hi = (lo + 1).min(inp - 1);
                (lo, hi, T::of(s - lo as f64))
            })
            .collect()
    };
    let ty = taps(h, hi);
    let tx = taps(w, wi);
    Ok(Tensor::from_fn([n, c, h, w], |[i, ch, y, x]| {
        let (y0, y1, fy) = ty[y];
        let (x0, x1, fx) = tx[x];
        let p = input.plane(i, ch);
        let top = p[y0 * wi + x0] * (T::one() - fx) + p[y0 * wi + x1] * fx;
        let bot = p[y1 * wi + x0] * (T::one() - fx) + p[y1 * wi + x1] * fx;
        top * (T::one() - fy) + bot * fy
    }))
}
