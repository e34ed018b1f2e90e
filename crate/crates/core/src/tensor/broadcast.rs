use super::{Scalar, Shape, Tensor, AXIS_NAMES};
use crate::error::{Error, Result};

/// Per-axis broadcast: each axis must match or be 1 on one side.
pub fn broadcast_shape(op: &'static str, a: Shape, b: Shape) -> Result<Shape> {
    let mut out = [0; 4];
    for axis in 0..4 {
        let (x, y) = (a.0[axis], b.0[axis]);
        out[axis] = match (x, y) {
            _ if x == y => x,
            (1, _) => y,
            (_, 1) => x,
            _ => {
                return Err(Error::AxisMismatch {
                    op,
                    axis: AXIS_NAMES[axis],
                    expected: x,
                    got: y,
                })
            }
        };
    }
    Ok(Shape(out))
}

fn bstrides(s: Shape) -> [usize; 4] {
    let st = s.strides();
    let mut out = [0; 4];
    for axis in 0..4 {
        out[axis] = if s.0[axis] == 1 { 0 } else { st[axis] };
    }
    out
}

pub fn broadcast_zip<T: Scalar>(
    op: &'static str,
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> Result<Tensor<T>> {
    if a.shape() == b.shape() {
        return a.zip_map(b, f);
    }
    let out = broadcast_shape(op, a.shape(), b.shape())?;
    let (sa, sb) = (bstrides(a.shape()), bstrides(b.shape()));
    let [n, c, h, w] = out.0;
    let (ad, bd) = (a.data(), b.data());
    let mut data = Vec::with_capacity(out.numel());
    for i in 0..n {
        for ch in 0..c {
            for y in 0..h {
                let oa = i * sa[0] + ch * sa[1] + y * sa[2];
                let ob = i * sb[0] + ch * sb[1] + y * sb[2];
                for x in 0..w {
                    data.push(f(ad[oa + x * sa[3]], bd[ob + x * sb[3]]));
                }
            }
        }
    }
    Tensor::from_vec(out, data)
}

pub fn broadcast_to<T: Scalar>(t: &Tensor<T>, shape: Shape) -> Result<Tensor<T>> {
    if t.shape() == shape {
        return Ok(t.clone());
    }
    let zeros = Tensor::zeros(shape);
    broadcast_zip("broadcast_to", &zeros, t, |_, v| v)
}

/// Sums a gradient over the axes where `shape` was broadcast.
pub fn sum_to<T: Scalar>(g: &Tensor<T>, shape: Shape) -> Tensor<T> {
    if g.shape() == shape {
        return g.clone();
    }
    let st = bstrides(shape);
    let [n, c, h, w] = g.shape().0;
    let gd = g.data();
    let mut out = vec![T::zero(); shape.numel()];
    let mut k = 0;
    for i in 0..n {
        for ch in 0..c {
            for y in 0..h {
                let o = i * st[0] + ch * st[1] + y * st[2];
                for x in 0..w {
                    out[o + x * st[3]] += gd[k];
                    k += 1;
                }
            }
        }
    }
    Tensor::from_vec(shape, out).expect("target shape")
}
