use super::{Scalar, Shape, Tensor};
use crate::error::{Error, Result};

/// Subset of the channel/height/width axes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct AxisSet {
    pub channel: bool,
    pub height: bool,
    pub width: bool,
}

impl AxisSet {
    pub const CHANNEL: AxisSet = AxisSet {
        channel: true,
        height: false,
        width: false,
    };
    pub const SPATIAL: AxisSet = AxisSet {
        channel: false,
        height: true,
        width: true,
    };
    pub const ALL: AxisSet = AxisSet {
        channel: true,
        height: true,
        width: true,
    };

    pub fn is_empty(&self) -> bool {
        !(self.channel || self.height || self.width)
    }

    fn mask(&self) -> [bool; 4] {
        [false, self.channel, self.height, self.width]
    }

    pub fn reduced(&self, shape: Shape) -> Shape {
        let mut s = shape.0;
        for (d, m) in s.iter_mut().zip(self.mask()) {
            if m {
                *d = 1;
            }
        }
        Shape(s)
    }
}

/// Base offsets (one per output element) and the relative offsets of the
/// reduced sub-block, in row-major order.
pub(crate) fn reduction_layout(shape: Shape, axes: AxisSet) -> (Vec<usize>, Vec<usize>) {
    let strides = shape.strides();
    let mask = axes.mask();
    let dims = shape.0;
    let mut bases = vec![0usize];
    let mut rel = vec![0usize];
    for axis in 0..4 {
        let target = if mask[axis] { &mut rel } else { &mut bases };
        let mut next = Vec::with_capacity(target.len() * dims[axis]);
        for &b in target.iter() {
            for i in 0..dims[axis] {
                next.push(b + i * strides[axis]);
            }
        }
        *target = next;
    }
    (bases, rel)
}

fn check_axes(op: &'static str, axes: AxisSet) -> Result<()> {
    if axes.is_empty() {
        return Err(Error::invalid(op, "empty axis set"));
    }
    Ok(())
}

pub fn reduce_mean<T: Scalar>(input: &Tensor<T>, axes: AxisSet) -> Result<Tensor<T>> {
    check_axes("reduce_mean", axes)?;
    let (bases, rel) = reduction_layout(input.shape(), axes);
    let d = input.data();
    let len = rel.len() as f64;
    let data = bases
        .iter()
        .map(|&b| T::of(rel.iter().map(|&r| d[b + r].as_f64()).sum::<f64>() / len))
        .collect();
    Tensor::from_vec(axes.reduced(input.shape()), data)
}

pub(crate) fn reduce_mean_backward<T: Scalar>(
    input_shape: Shape,
    axes: AxisSet,
    grad: &Tensor<T>,
) -> Tensor<T> {
    let (bases, rel) = reduction_layout(input_shape, axes);
    let inv = T::one() / T::of(rel.len() as f64);
    let mut out = vec![T::zero(); input_shape.numel()];
    for (&b, &g) in bases.iter().zip(grad.data()) {
        for &r in &rel {
            out[b + r] = g * inv;
        }
    }
    Tensor::from_vec(input_shape, out).expect("input shape")
}

/// Maximum over `axes`. Also returns the flat index of the first (row-major)
/// argmax of every reduced group.
pub fn reduce_max<T: Scalar>(input: &Tensor<T>, axes: AxisSet) -> Result<(Tensor<T>, Vec<usize>)> {
    check_axes("reduce_max", axes)?;
    let (bases, rel) = reduction_layout(input.shape(), axes);
    let d = input.data();
    let mut vals = Vec::with_capacity(bases.len());
    let mut argmax = Vec::with_capacity(bases.len());
    for &b in &bases {
        let mut best = b + rel[0];
        for &r in &rel[1..] {
            if d[b + r] > d[best] {
                best = b + r;
            }
        }
        vals.push(d[best]);
        argmax.push(best);
    }
    Ok((Tensor::from_vec(axes.reduced(input.shape()), vals)?, argmax))
}

pub(crate) fn reduce_max_backward<T: Scalar>(
    input_shape: Shape,
    argmax: &[usize],
    grad: &Tensor<T>,
) -> Tensor<T> {
    let mut out = vec![T::zero(); input_shape.numel()];
    for (&i, &g) in argmax.iter().zip(grad.data()) {
        out[i] += g;
    }
    Tensor::from_vec(input_shape, out).expect("input shape")
}
