use super::reduce::reduction_layout;
use super::{AxisSet, Scalar, Tensor};
use crate::error::{Error, Result};

pub(crate) struct LayerNormSaved<T> {
    pub xhat: Tensor<T>,
    /// One entry per `(n, y, x)` position.
    pub inv_std: Vec<T>,
}

fn check_affine<T: Scalar>(input: &Tensor<T>, gain: &Tensor<T>, bias: &Tensor<T>) -> Result<()> {
    let c = input.shape().c();
    for p in [gain, bias] {
        if p.numel() != c {
            return Err(Error::AxisMismatch {
                op: "layer_norm",
                axis: "channel",
                expected: c,
                got: p.numel(),
            });
        }
    }
    Ok(())
}

/// Normalizes every pixel's channel vector to zero mean and unit variance,
/// then applies a per-channel affine map.
pub fn layer_norm<T: Scalar>(
    input: &Tensor<T>,
    gain: &Tensor<T>,
    bias: &Tensor<T>,
    eps: T,
) -> Result<Tensor<T>> {
    layer_norm_saved(input, gain, bias, eps).map(|(y, _)| y)
}

pub(crate) fn layer_norm_saved<T: Scalar>(
    input: &Tensor<T>,
    gain: &Tensor<T>,
    bias: &Tensor<T>,
    eps: T,
) -> Result<(Tensor<T>, LayerNormSaved<T>)> {
    check_affine(input, gain, bias)?;
    let [n, c, h, w] = input.shape().0;
    let p = h * w;
    let d = input.data();
    let inv_c = T::one() / T::of(c as f64);
    let mut xhat = vec![T::zero(); d.len()];
    let mut out = vec![T::zero(); d.len()];
    let mut inv_std = vec![T::zero(); n * p];
    let mut mean = vec![T::zero(); p];
    let mut var = vec![T::zero(); p];
    for i in 0..n {
        let block = &d[i * c * p..(i + 1) * c * p];
        mean.fill(T::zero());
        var.fill(T::zero());
        for plane in block.chunks(p) {
            for (m, &v) in mean.iter_mut().zip(plane) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m *= inv_c);
        for plane in block.chunks(p) {
            for ((s, &m), &v) in var.iter_mut().zip(&mean).zip(plane) {
                let dv = v - m;
                *s += dv * dv;
            }
        }
        let istd = &mut inv_std[i * p..(i + 1) * p];
        for (is, &s) in istd.iter_mut().zip(&var) {
            *is = T::one() / (s * inv_c + eps).sqrt();
        }
        for ch in 0..c {
            let o = (i * c + ch) * p;
            let (gv, bv) = (gain.data()[ch], bias.data()[ch]);
            for k in 0..p {
                let xh = (block[ch * p + k] - mean[k]) * istd[k];
                xhat[o + k] = xh;
                out[o + k] = gv * xh + bv;
            }
        }
    }
    let shape = input.shape();
    Ok((
        Tensor::from_vec(shape, out)?,
        LayerNormSaved {
            xhat: Tensor::from_vec(shape, xhat)?,
            inv_std,
        },
    ))
}

/// Returns `(d_input, d_gain, d_bias)`.
pub(crate) fn layer_norm_backward<T: Scalar>(
    saved: &LayerNormSaved<T>,
    gain: &Tensor<T>,
    grad: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let shape = grad.shape();
    let [n, c, h, w] = shape.0;
    let p = h * w;
    let g = grad.data();
    let xh = saved.xhat.data();
    let inv_c = T::one() / T::of(c as f64);
    let mut dx = vec![T::zero(); g.len()];
    let mut dgain = vec![T::zero(); c];
    let mut dbias = vec![T::zero(); c];
    let mut mean_g = vec![T::zero(); p];
    let mut mean_gx = vec![T::zero(); p];
    for i in 0..n {
        mean_g.fill(T::zero());
        mean_gx.fill(T::zero());
        for ch in 0..c {
            let o = (i * c + ch) * p;
            let gv = gain.data()[ch];
            let (mut sg, mut sgx) = (T::zero(), T::zero());
            for k in 0..p {
                let gy = g[o + k];
                sg += gy;
                sgx += gy * xh[o + k];
                let gx = gy * gv;
                mean_g[k] += gx;
                mean_gx[k] += gx * xh[o + k];
            }
            dbias[ch] += sg;
            dgain[ch] += sgx;
        }
        let istd = &saved.inv_std[i * p..(i + 1) * p];
        for ch in 0..c {
            let o = (i * c + ch) * p;
            let gv = gain.data()[ch];
            for k in 0..p {
                let gx = g[o + k] * gv;
                dx[o + k] = istd[k] * (gx - mean_g[k] * inv_c - xh[o + k] * mean_gx[k] * inv_c);
            }
        }
    }
    (
        Tensor::from_vec(shape, dx).expect("shape"),
        Tensor::from_vec([1, c, 1, 1], dgain).expect("gain"),
        Tensor::from_vec([1, c, 1, 1], dbias).expect("bias"),
    )
}

/// Softmax over each group spanned by `axes`, with the group maximum
/// subtracted before exponentiation.
pub fn softmax<T: Scalar>(input: &Tensor<T>, axes: AxisSet) -> Result<Tensor<T>> {
    if axes.is_empty() {
        return Err(Error::invalid("softmax", "empty axis set"));
    }
    if input.data().iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite { op: "softmax" });
    }
    let (bases, rel) = reduction_layout(input.shape(), axes);
    let d = input.data();
    let mut out = vec![T::zero(); d.len()];
    for &b in &bases {
        let m = rel
            .iter()
            .map(|&r| d[b + r])
            .fold(T::neg_infinity(), T::max);
        let mut s = T::zero();
        for &r in &rel {
            let e = (d[b + r] - m).exp();
            out[b + r] = e;
            s += e;
        }
        let inv = T::one() / s;
        for &r in &rel {
            out[b + r] *= inv;
        }
    }
    Tensor::from_vec(input.shape(), out)
}

pub(crate) fn softmax_backward<T: Scalar>(
    output: &Tensor<T>,
    axes: AxisSet,
    grad: &Tensor<T>,
) -> Tensor<T> {
    let (bases, rel) = reduction_layout(output.shape(), axes);
    let (y, g) = (output.data(), grad.data());
    let mut out = vec![T::zero(); y.len()];
    for &b in &bases {
        let dot: T = rel.iter().map(|&r| y[b + r] * g[b + r]).sum();
        for &r in &rel {
            out[b + r] = y[b + r] * (g[b + r] - dot);
        }
    }
    Tensor::from_vec(output.shape(), out).expect("shape")
}
