//! Dense NCHW tensors and the raw (tape-free) kernels behind every
//! differentiable op.
//!
//! Everything in this module works on plain [`Tensor`] values. The autodiff
//! layer in [`crate::autodiff`] records these kernels on a tape and pairs each
//! with its vector-Jacobian product.

mod broadcast;
mod conv;
mod fft;
mod norm;
mod reduce;
mod resample;

use std::fmt;

pub use broadcast::{broadcast_shape, broadcast_to, broadcast_zip, sum_to};
pub use conv::{conv2d, pad, ConvOptions, PaddingMode};
pub(crate) use fft::transform as fft_transform;
pub use fft::{fft2d, ifft2d, next_pow2};
pub use norm::{layer_norm, softmax};
pub use reduce::{reduce_max, reduce_mean, AxisSet};
pub use resample::{
    apply_filter_bank, avg_downsample, bilinear_resize, pixel_shuffle, pixel_unshuffle, unfold,
};

pub(crate) use conv::{conv2d_backward, pad_backward};
pub(crate) use norm::{layer_norm_backward, layer_norm_saved, softmax_backward, LayerNormSaved};
pub(crate) use reduce::{reduce_max_backward, reduce_mean_backward};
pub(crate) use resample::{apply_filter_bank_backward, avg_downsample_backward, unfold_backward};

use crate::error::{Error, Result};

/// Floating-point element type. Training runs in `f32`; gradient checks and
/// oracles run the same code in `f64`.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumAssign
    + std::iter::Sum
    + Default
    + Send
    + Sync
    + fmt::Debug
    + fmt::Display
    + 'static
{
    fn of(v: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(v).expect("finite f64 converts")
    }

    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `(n, c, h, w)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape(pub [usize; 4]);

impl Shape {
    pub const SCALAR: Shape = Shape([1, 1, 1, 1]);

    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape([n, c, h, w])
    }

    pub fn n(&self) -> usize {
        self.0[0]
    }

    pub fn c(&self) -> usize {
        self.0[1]
    }

    pub fn h(&self) -> usize {
        self.0[2]
    }

    pub fn w(&self) -> usize {
        self.0[3]
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    pub fn plane(&self) -> usize {
        self.h() * self.w()
    }

    pub fn with_c(&self, c: usize) -> Self {
        Shape([self.n(), c, self.h(), self.w()])
    }

    pub fn with_hw(&self, h: usize, w: usize) -> Self {
        Shape([self.n(), self.c(), h, w])
    }

    pub(crate) fn strides(&self) -> [usize; 4] {
        let [_, c, h, w] = self.0;
        [c * h * w, h * w, w, 1]
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [n, c, h, w] = self.0;
        write!(f, "({n}, {c}, {h}, {w})")
    }
}

impl From<[usize; 4]> for Shape {
    fn from(v: [usize; 4]) -> Self {
        Shape(v)
    }
}

pub(crate) const AXIS_NAMES: [&str; 4] = ["batch", "channel", "height", "width"];

/// Dense rank-4 array in NCHW order.
#[derive(Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(shape: impl Into<Shape>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        if data.len() != shape.numel() {
            return Err(Error::invalid(
                "tensor",
                format!("{} elements do not fill shape {shape}", data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: impl Into<Shape>) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: impl Into<Shape>) -> Self {
        Self::full(shape, T::one())
    }

    pub fn full(shape: impl Into<Shape>, v: T) -> Self {
        let shape = shape.into();
        Tensor {
            shape,
            data: vec![v; shape.numel()],
        }
    }

    pub fn scalar(v: T) -> Self {
        Self::full(Shape::SCALAR, v)
    }

    pub fn from_fn(shape: impl Into<Shape>, mut f: impl FnMut([usize; 4]) -> T) -> Self {
        let shape = shape.into();
        let [n, c, h, w] = shape.0;
        let mut data = Vec::with_capacity(shape.numel());
        for i in 0..n {
            for j in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f([i, j, y, x]));
                    }
                }
            }
        }
        Tensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn at(&self, idx: [usize; 4]) -> T {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: [usize; 4], v: T) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    fn offset(&self, idx: [usize; 4]) -> usize {
        let s = self.shape.strides();
        idx.iter().zip(s).map(|(i, s)| i * s).sum()
    }

    /// Contiguous `(h, w)` plane of sample `n`, channel `c`.
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let p = self.shape.plane();
        let o = (n * self.shape.c() + c) * p;
        &self.data[o..o + p]
    }

    /// Element value at `idx` for `(1,1,1,1)` tensors.
    pub fn item(&self) -> T {
        self.data[0]
    }

    pub fn reshape(&self, shape: impl Into<Shape>) -> Result<Self> {
        let shape = shape.into();
        if shape.numel() != self.numel() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape,
                rhs: shape,
            });
        }
        Ok(Tensor {
            shape,
            data: self.data.clone(),
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.expect_same_shape("zip", other)?;
        Ok(Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| v * k)
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Accumulated in `f64` whatever the element type.
    pub fn sum(&self) -> T {
        T::of(self.sum_f64())
    }

    pub fn mean(&self) -> T {
        T::of(self.sum_f64() / self.numel() as f64)
    }

    fn sum_f64(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64()).sum()
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |m, &v| if v.abs() > m { v.abs() } else { m })
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        Ok(self.sub(other)?.max_abs())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| U::of(v.as_f64())).collect(),
        }
    }

    /// Channel slice `[start, start + len)`.
    pub fn narrow_channels(&self, start: usize, len: usize) -> Result<Self> {
        let [n, c, h, w] = self.shape.0;
        if start + len > c {
            return Err(Error::invalid(
                "narrow_channels",
                format!("range {start}..{} exceeds {c} channels", start + len),
            ));
        }
        let p = h * w;
        let mut data = Vec::with_capacity(n * len * p);
        for i in 0..n {
            let o = (i * c + start) * p;
            data.extend_from_slice(&self.data[o..o + len * p]);
        }
        Ok(Tensor {
            shape: Shape::new(n, len, h, w),
            data,
        })
    }

    /// Concatenate along the channel axis.
    pub fn cat_channels(parts: &[&Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("cat_channels", "no inputs"))?;
        let [n, _, h, w] = first.shape.0;
        let mut c_total = 0;
        for t in parts {
            let [tn, tc, th, tw] = t.shape.0;
            if tn != n || th != h || tw != w {
                return Err(Error::ShapeMismatch {
                    op: "cat_channels",
                    lhs: first.shape,
                    rhs: t.shape,
                });
            }
            c_total += tc;
        }
        let p = h * w;
        let mut data = Vec::with_capacity(n * c_total * p);
        for i in 0..n {
            for t in parts {
                let tc = t.shape.c();
                let o = i * tc * p;
                data.extend_from_slice(&t.data[o..o + tc * p]);
            }
        }
        Ok(Tensor {
            shape: Shape::new(n, c_total, h, w),
            data,
        })
    }

    /// Concatenate along the batch axis.
    pub fn cat_batch(parts: &[&Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("cat_batch", "no inputs"))?;
        let mut n = 0;
        let mut data = Vec::new();
        for t in parts {
            if t.shape.0[1..] != first.shape.0[1..] {
                return Err(Error::ShapeMismatch {
                    op: "cat_batch",
                    lhs: first.shape,
                    rhs: t.shape,
                });
            }
            n += t.shape.n();
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor {
            shape: first.shape.with_n(n),
            data,
        })
    }

    /// Sample `i` as a `(1, c, h, w)` tensor.
    pub fn sample(&self, i: usize) -> Result<Self> {
        if i >= self.shape.n() {
            return Err(Error::invalid(
                "sample",
                format!("index {i} out of {} samples", self.shape.n()),
            ));
        }
        let len = self.numel() / self.shape.n();
        Ok(Tensor {
            shape: self.shape.with_n(1),
            data: self.data[i * len..(i + 1) * len].to_vec(),
        })
    }

    pub(crate) fn expect_same_shape(&self, op: &'static str, other: &Self) -> Result<()> {
        expect_same_shape(op, self.shape, other.shape)
    }
}

impl Shape {
    pub fn with_n(&self, n: usize) -> Self {
        Shape([n, self.c(), self.h(), self.w()])
    }
}

pub(crate) fn expect_same_shape(op: &'static str, a: Shape, b: Shape) -> Result<()> {
    for axis in 0..4 {
        if a.0[axis] != b.0[axis] {
            return Err(Error::AxisMismatch {
                op,
                axis: AXIS_NAMES[axis],
                expected: a.0[axis],
                got: b.0[axis],
            });
        }
    }
    Ok(())
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "Tensor{} [", self.shape)?;
        for (i, v) in self.data.iter().take(SHOWN).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        if self.data.len() > SHOWN {
            write!(f, ", ...")?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(Tensor::<f32>::from_vec([1, 1, 2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn channel_cat_then_narrow_recovers_parts() {
        let a = Tensor::<f64>::from_fn([2, 2, 3, 3], |[n, c, y, x]| {
            (n * 100 + c * 10 + y * 3 + x) as f64
        });
        let b = Tensor::<f64>::from_fn([2, 1, 3, 3], |[n, _, y, x]| -((n * 9 + y * 3 + x) as f64));
        let cat = Tensor::cat_channels(&[&a, &b]).unwrap();
        assert_eq!(cat.shape(), Shape::new(2, 3, 3, 3));
        assert_eq!(cat.narrow_channels(0, 2).unwrap(), a);
        assert_eq!(cat.narrow_channels(2, 1).unwrap(), b);
    }

    #[test]
    fn axis_mismatch_names_axis() {
        let a = Tensor::<f32>::zeros([1, 2, 4, 4]);
        let b = Tensor::<f32>::zeros([1, 2, 4, 5]);
        let err = a.add(&b).unwrap_err().to_string();
        assert!(err.contains("width"), "{err}");
    }
}
