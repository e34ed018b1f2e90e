//! Iterative radix-2 Cooley-Tukey FFT over every `(n, c)` plane.

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

pub fn next_pow2(v: usize) -> usize {
    v.max(1).next_power_of_two()
}

fn check_pow2<T: Scalar>(t: &Tensor<T>) -> Result<()> {
    let (h, w) = (t.shape().h(), t.shape().w());
    if !h.is_power_of_two() || !w.is_power_of_two() {
        return Err(Error::invalid(
            "fft2d",
            format!("spatial size {h}x{w} is not a power of two"),
        ));
    }
    Ok(())
}

/// In-place 1-D transform over `len` elements spaced `stride` apart.
/// `sign = -1` is the forward transform, `+1` the unnormalized inverse.
fn fft1d<T: Scalar>(
    re: &mut [T],
    im: &mut [T],
    offset: usize,
    stride: usize,
    len: usize,
    sign: f64,
) {
    if len <= 1 {
        return;
    }
    let idx = |i: usize| offset + i * stride;
    let bits = len.trailing_zeros();
    for i in 0..len {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            re.swap(idx(i), idx(j));
            im.swap(idx(i), idx(j));
        }
    }
    let mut half = 1;
    while half < len {
        let step = std::f64::consts::PI / half as f64 * sign;
        for k in 0..half {
            let (s, c) = (step * k as f64).sin_cos();
            let (wr, wi) = (T::of(c), T::of(s));
            let mut start = 0;
            while start < len {
                let (a, b) = (idx(start + k), idx(start + k + half));
                let tr = re[b] * wr - im[b] * wi;
                let ti = re[b] * wi + im[b] * wr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
                start += 2 * half;
            }
        }
        half *= 2;
    }
}

pub(crate) fn transform<T: Scalar>(re: &mut Tensor<T>, im: &mut Tensor<T>, sign: f64) {
    let [n, c, h, w] = re.shape().0;
    let plane = h * w;
    let (rd, id) = (re.data_mut(), im.data_mut());
    for p in 0..n * c {
        let base = p * plane;
        for y in 0..h {
            fft1d(rd, id, base + y * w, 1, w, sign);
        }
        for x in 0..w {
            fft1d(rd, id, base + x, w, h, sign);
        }
    }
}

/// Unnormalized forward 2-D DFT of a real tensor, as `(real, imag)`.
pub fn fft2d<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    check_pow2(input)?;
    let mut re = input.clone();
    let mut im = Tensor::zeros(input.shape());
    transform(&mut re, &mut im, -1.0);
    Ok((re, im))
}

/// Inverse 2-D DFT scaled by `1 / (h·w)`, so `ifft2d(fft2d(x)) == x`.
pub fn ifft2d<T: Scalar>(re: &Tensor<T>, im: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    check_pow2(re)?;
    re.expect_same_shape("ifft2d", im)?;
    let (mut r, mut i) = (re.clone(), im.clone());
    transform(&mut r, &mut i, 1.0);
    let inv = T::one() / T::of(re.shape().plane() as f64);
    Ok((r.scale(inv), i.scale(inv)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_dft(x: &Tensor<f64>) -> (Tensor<f64>, Tensor<f64>) {
        let [n, c, h, w] = x.shape().0;
        let mut re = Tensor::zeros(x.shape());
        let mut im = Tensor::zeros(x.shape());
        for i in 0..n {
            for ch in 0..c {
                for u in 0..h {
                    for v in 0..w {
                        let (mut sr, mut si) = (0.0, 0.0);
                        for y in 0..h {
                            for xx in 0..w {
                                let a = -2.0
                                    * std::f64::consts::PI
                                    * ((u * y) as f64 / h as f64 + (v * xx) as f64 / w as f64);
                                sr += x.at([i, ch, y, xx]) * a.cos();
                                si += x.at([i, ch, y, xx]) * a.sin();
                            }
                        }
                        re.set([i, ch, u, v], sr);
                        im.set([i, ch, u, v], si);
                    }
                }
            }
        }
        (re, im)
    }

    #[test]
    fn constant_plane_concentrates_in_dc() {
        let x = Tensor::<f64>::full([1, 1, 4, 4], 0.5);
        let (re, im) = fft2d(&x).unwrap();
        assert!((re.data()[0] - 8.0).abs() < 1e-12);
        assert!(re.data()[1..].iter().all(|v| v.abs() < 1e-12));
        assert!(im.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn impulse_is_flat() {
        let mut x = Tensor::<f64>::zeros([1, 1, 8, 4]);
        x.set([0, 0, 0, 0], 1.0);
        let (re, im) = fft2d(&x).unwrap();
        assert!(re.data().iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(im.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn matches_naive_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Tensor::<f64>::from_fn([1, 2, 8, 8], |_| rng.random_range(-1.0..1.0));
        let (re, im) = fft2d(&x).unwrap();
        let (nr, ni) = naive_dft(&x);
        let scale = nr.max_abs().max(ni.max_abs());
        assert!(re.max_abs_diff(&nr).unwrap() / scale < 1e-5);
        assert!(im.max_abs_diff(&ni).unwrap() / scale < 1e-5);
    }

    #[test]
    fn inverse_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = Tensor::<f32>::from_fn([2, 3, 16, 8], |_| rng.random_range(0.0..1.0));
        let (re, im) = fft2d(&x).unwrap();
        let (back, imag) = ifft2d(&re, &im).unwrap();
        assert!(back.max_abs_diff(&x).unwrap() < 1e-5);
        assert!(imag.max_abs() < 1e-5);
    }

    #[test]
    fn rejects_non_pow2() {
        assert!(fft2d(&Tensor::<f32>::zeros([1, 1, 6, 8])).is_err());
    }
}
