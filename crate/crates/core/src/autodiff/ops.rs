use std::rc::Rc;

use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{
    self, AxisSet, ConvOptions, LayerNormSaved, PaddingMode, Scalar, Shape, Tensor,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UnaryOp {
    Sqrt,
    Square,
    Abs,
    Scale(f64),
    AddScalar(f64),
    Sigmoid,
}

impl UnaryOp {
    fn apply<T: Scalar>(self, v: T) -> T {
        match self {
            UnaryOp::Sqrt => v.sqrt(),
            UnaryOp::Square => v * v,
            UnaryOp::Abs => v.abs(),
            UnaryOp::Scale(k) => v * T::of(k),
            UnaryOp::AddScalar(k) => v + T::of(k),
            UnaryOp::Sigmoid => T::one() / (T::one() + (-v).exp()),
        }
    }

    fn derivative<T: Scalar>(self, x: T, y: T) -> T {
        match self {
            UnaryOp::Sqrt => T::of(0.5) / y,
            UnaryOp::Square => x + x,
            UnaryOp::Abs => {
                if x > T::zero() {
                    T::one()
                } else if x < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            }
            UnaryOp::Scale(k) => T::of(k),
            UnaryOp::AddScalar(_) => T::one(),
            UnaryOp::Sigmoid => y * (T::one() - y),
        }
    }
}

pub(crate) enum Op<T: Scalar> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Unary(usize, UnaryOp),
    SumAll(usize),
    MeanAll(usize),
    Conv {
        x: usize,
        w: usize,
        b: Option<usize>,
        opts: ConvOptions,
    },
    Pad {
        x: usize,
        p: usize,
        mode: PaddingMode,
    },
    PadTo(usize),
    Cat(Vec<usize>),
    Narrow {
        x: usize,
        start: usize,
    },
    Reshape(usize),
    ReduceMean(usize, AxisSet),
    ReduceMax(usize, Vec<usize>),
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        saved: LayerNormSaved<T>,
    },
    Softmax(usize, AxisSet),
    Unfold {
        x: usize,
        k: usize,
        mode: PaddingMode,
    },
    FilterBank {
        unfolded: usize,
        bank: usize,
    },
    AvgDown(usize, usize),
    PixelShuffle(usize, usize),
    Fft(usize),
}

type Values<'a, T> = dyn Fn(usize) -> Rc<Tensor<T>> + 'a;
type Wants<'a> = dyn Fn(usize) -> bool + 'a;

impl<T: Scalar> Op<T> {
    /// Input gradients for the inputs that require one.
    pub(crate) fn vjp(
        &self,
        g: &Tensor<T>,
        out: &Tensor<T>,
        value_of: &Values<'_, T>,
        wants: &Wants<'_>,
    ) -> Vec<(usize, Tensor<T>)> {
        let mut res = Vec::new();
        let mut emit = |i: usize, f: &mut dyn FnMut() -> Tensor<T>| {
            if wants(i) {
                res.push((i, f()));
            }
        };
        match self {
            Op::Leaf => {}
            Op::Add(a, b) => {
                emit(*a, &mut || tensor::sum_to(g, value_of(*a).shape()));
                emit(*b, &mut || tensor::sum_to(g, value_of(*b).shape()));
            }
            Op::Sub(a, b) => {
                emit(*a, &mut || tensor::sum_to(g, value_of(*a).shape()));
                emit(*b, &mut || {
                    tensor::sum_to(g, value_of(*b).shape()).scale(-T::one())
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (value_of(*a), value_of(*b));
                emit(*a, &mut || {
                    let p = tensor::broadcast_zip("mul", g, &bv, |x, y| x * y).expect("broadcast");
                    tensor::sum_to(&p, av.shape())
                });
                emit(*b, &mut || {
                    let p = tensor::broadcast_zip("mul", g, &av, |x, y| x * y).expect("broadcast");
                    tensor::sum_to(&p, bv.shape())
                });
            }
            Op::Unary(x, op) => {
                let xv = value_of(*x);
                emit(*x, &mut || {
                    let data = g
                        .data()
                        .iter()
                        .zip(xv.data())
                        .zip(out.data())
                        .map(|((&gv, &xi), &yi)| gv * op.derivative(xi, yi))
                        .collect();
                    Tensor::from_vec(xv.shape(), data).expect("shape")
                });
            }
            Op::SumAll(x) => {
                emit(*x, &mut || Tensor::full(value_of(*x).shape(), g.item()));
            }
            Op::MeanAll(x) => {
                let s = value_of(*x).shape();
                emit(*x, &mut || {
                    Tensor::full(s, g.item() / T::of(s.numel() as f64))
                });
            }
            Op::Conv { x, w, b, opts } => {
                let need = [wants(*x), wants(*w), b.is_some_and(wants)];
                let grads = tensor::conv2d_backward(
                    &value_of(*x),
                    &value_of(*w),
                    b.is_some(),
                    opts,
                    g,
                    need,
                );
                if let Some(gx) = grads.input {
                    res.push((*x, gx));
                }
                if let Some(gw) = grads.weight {
                    res.push((*w, gw));
                }
                if let (Some(b), Some(gb)) = (b, grads.bias) {
                    let shape = value_of(*b).shape();
                    res.push((*b, gb.reshape(shape).expect("bias numel")));
                }
            }
            Op::Pad { x, p, mode } => emit(*x, &mut || tensor::pad_backward(g, *p, *mode)),
            Op::PadTo(x) => {
                let s = value_of(*x).shape();
                emit(*x, &mut || crop(g, s.h(), s.w()));
            }
            Op::Cat(parts) => {
                let mut start = 0;
                for &p in parts {
                    let c = value_of(p).shape().c();
                    emit(p, &mut || g.narrow_channels(start, c).expect("cat grad"));
                    start += c;
                }
            }
            Op::Narrow { x, start } => {
                let xs = value_of(*x).shape();
                emit(*x, &mut || {
                    let mut parts = Vec::new();
                    let before = Tensor::zeros(xs.with_c(*start));
                    let after = Tensor::zeros(xs.with_c(xs.c() - start - g.shape().c()));
                    if *start > 0 {
                        parts.push(&before);
                    }
                    parts.push(g);
                    if after.numel() > 0 {
                        parts.push(&after);
                    }
                    Tensor::cat_channels(&parts).expect("narrow grad")
                });
            }
            Op::Reshape(x) => {
                emit(*x, &mut || g.reshape(value_of(*x).shape()).expect("numel"));
            }
            Op::ReduceMean(x, axes) => {
                emit(*x, &mut || {
                    tensor::reduce_mean_backward(value_of(*x).shape(), *axes, g)
                });
            }
            Op::ReduceMax(x, argmax) => {
                emit(*x, &mut || {
                    tensor::reduce_max_backward(value_of(*x).shape(), argmax, g)
                });
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                saved,
            } => {
                let gv = value_of(*gain);
                let (dx, dg, db) = tensor::layer_norm_backward(saved, &gv, g);
                if wants(*x) {
                    res.push((*x, dx));
                }
                if wants(*gain) {
                    res.push((*gain, dg.reshape(gv.shape()).expect("gain numel")));
                }
                if wants(*bias) {
                    let bs = value_of(*bias).shape();
                    res.push((*bias, db.reshape(bs).expect("bias numel")));
                }
            }
            Op::Softmax(x, axes) => emit(*x, &mut || tensor::softmax_backward(out, *axes, g)),
            Op::Unfold { x, k, mode } => {
                emit(*x, &mut || {
                    tensor::unfold_backward(value_of(*x).shape(), *k, *mode, g)
                });
            }
            Op::FilterBank { unfolded, bank } => {
                let (du, db) =
                    tensor::apply_filter_bank_backward(&value_of(*unfolded), &value_of(*bank), g);
                if wants(*unfolded) {
                    res.push((*unfolded, du));
                }
                if wants(*bank) {
                    res.push((*bank, db));
                }
            }
            Op::AvgDown(x, r) => {
                emit(*x, &mut || {
                    tensor::avg_downsample_backward(value_of(*x).shape(), *r, g)
                });
            }
            Op::PixelShuffle(x, r) => {
                emit(*x, &mut || {
                    tensor::pixel_unshuffle(g, *r).expect("shuffle grad")
                });
            }
            Op::Fft(x) => {
                emit(*x, &mut || {
                    let c = g.shape().c() / 2;
                    let mut re = g.narrow_channels(0, c).expect("re");
                    let mut im = g.narrow_channels(c, c).expect("im");
                    tensor::fft_transform(&mut re, &mut im, 1.0);
                    re
                });
            }
        }
        res
    }
}

fn crop<T: Scalar>(t: &Tensor<T>, h: usize, w: usize) -> Tensor<T> {
    Tensor::from_fn(t.shape().with_hw(h, w), |idx| t.at(idx))
}

impl<'t, T: Scalar> Var<'t, T> {
    fn same_tape(&self, other: &Var<'_, T>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(Error::ForeignVariable)
        }
    }

    fn ids(&self) -> usize {
        self.id.unwrap_or(usize::MAX)
    }

    fn unary_node(&self, op: Op<T>, value: Tensor<T>) -> Var<'t, T> {
        self.tape.push(op, value, self.requires_grad)
    }

    fn binary(
        &self,
        other: &Var<'_, T>,
        name: &'static str,
        f: impl Fn(T, T) -> T,
        op: fn(usize, usize) -> Op<T>,
    ) -> Result<Var<'t, T>> {
        self.same_tape(other)?;
        let v = tensor::broadcast_zip(name, &self.value, &other.value, f)?;
        Ok(self.tape.push(
            op(self.ids(), other.ids()),
            v,
            self.requires_grad || other.requires_grad,
        ))
    }

    /// Elementwise sum, broadcasting size-1 axes.
    pub fn add(&self, other: &Var<'_, T>) -> Result<Var<'t, T>> {
        self.binary(other, "add", |a, b| a + b, Op::Add)
    }

    pub fn sub(&self, other: &Var<'_, T>) -> Result<Var<'t, T>> {
        self.binary(other, "sub", |a, b| a - b, Op::Sub)
    }

    /// Elementwise (Hadamard) product, broadcasting size-1 axes.
    pub fn mul(&self, other: &Var<'_, T>) -> Result<Var<'t, T>> {
        self.binary(other, "mul", |a, b| a * b, Op::Mul)
    }

    pub fn unary(&self, op: UnaryOp) -> Var<'t, T> {
        let v = self.value.map(|x| op.apply(x));
        self.unary_node(Op::Unary(self.ids(), op), v)
    }

    pub fn sqrt(&self) -> Var<'t, T> {
        self.unary(UnaryOp::Sqrt)
    }

    pub fn square(&self) -> Var<'t, T> {
        self.unary(UnaryOp::Square)
    }

    pub fn abs(&self) -> Var<'t, T> {
        self.unary(UnaryOp::Abs)
    }

    pub fn scale(&self, k: f64) -> Var<'t, T> {
        self.unary(UnaryOp::Scale(k))
    }

    pub fn add_scalar(&self, k: f64) -> Var<'t, T> {
        self.unary(UnaryOp::AddScalar(k))
    }

    pub fn sigmoid(&self) -> Var<'t, T> {
        self.unary(UnaryOp::Sigmoid)
    }

    pub fn sum_all(&self) -> Var<'t, T> {
        let v = Tensor::scalar(self.value.sum());
        self.unary_node(Op::SumAll(self.ids()), v)
    }

    pub fn mean_all(&self) -> Var<'t, T> {
        let v = Tensor::scalar(self.value.mean());
        self.unary_node(Op::MeanAll(self.ids()), v)
    }

    pub fn conv2d(
        &self,
        weight: &Var<'_, T>,
        bias: Option<&Var<'_, T>>,
        opts: ConvOptions,
    ) -> Result<Var<'t, T>> {
        self.same_tape(weight)?;
        if let Some(b) = bias {
            self.same_tape(b)?;
        }
        let v = tensor::conv2d(&self.value, &weight.value, bias.map(|b| &*b.value), &opts)?;
        let ws = weight.shape();
        self.tape
            .add_macs((v.numel() * ws.c() * ws.h() * ws.w()) as u64);
        let rg =
            self.requires_grad || weight.requires_grad || bias.is_some_and(|b| b.requires_grad);
        Ok(self.tape.push(
            Op::Conv {
                x: self.ids(),
                w: weight.ids(),
                b: bias.map(|b| b.ids()),
                opts,
            },
            v,
            rg,
        ))
    }

    pub fn pad(&self, p: usize, mode: PaddingMode) -> Var<'t, T> {
        let v = tensor::pad(&self.value, p, mode);
        self.unary_node(
            Op::Pad {
                x: self.ids(),
                p,
                mode,
            },
            v,
        )
    }

    /// Zero-pads on the bottom and right up to `(h, w)`.
    pub fn pad_to(&self, h: usize, w: usize) -> Result<Var<'t, T>> {
        let s = self.shape();
        if h < s.h() || w < s.w() {
            return Err(Error::invalid(
                "pad_to",
                format!("target {h}x{w} is smaller than {}x{}", s.h(), s.w()),
            ));
        }
        if (h, w) == (s.h(), s.w()) {
            return Ok(self.clone());
        }
        let src = &self.value;
        let v = Tensor::from_fn(s.with_hw(h, w), |[n, c, y, x]| {
            if y < s.h() && x < s.w() {
                src.at([n, c, y, x])
            } else {
                T::zero()
            }
        });
        Ok(self.unary_node(Op::PadTo(self.ids()), v))
    }

    pub fn cat_channels(parts: &[&Var<'t, T>]) -> Result<Var<'t, T>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("cat_channels", "no inputs"))?;
        for p in parts {
            first.same_tape(p)?;
        }
        let values: Vec<&Tensor<T>> = parts.iter().map(|p| &*p.value).collect();
        let v = Tensor::cat_channels(&values)?;
        let rg = parts.iter().any(|p| p.requires_grad);
        Ok(first
            .tape
            .push(Op::Cat(parts.iter().map(|p| p.ids()).collect()), v, rg))
    }

    pub fn narrow_channels(&self, start: usize, len: usize) -> Result<Var<'t, T>> {
        let v = self.value.narrow_channels(start, len)?;
        Ok(self.unary_node(
            Op::Narrow {
                x: self.ids(),
                start,
            },
            v,
        ))
    }

    pub fn reshape(&self, shape: impl Into<Shape>) -> Result<Var<'t, T>> {
        let v = self.value.reshape(shape)?;
        Ok(self.unary_node(Op::Reshape(self.ids()), v))
    }

    pub fn reduce_mean(&self, axes: AxisSet) -> Result<Var<'t, T>> {
        let v = tensor::reduce_mean(&self.value, axes)?;
        Ok(self.unary_node(Op::ReduceMean(self.ids(), axes), v))
    }

    pub fn reduce_max(&self, axes: AxisSet) -> Result<Var<'t, T>> {
        let (v, argmax) = tensor::reduce_max(&self.value, axes)?;
        let argmax = if self.requires_grad {
            argmax
        } else {
            Vec::new()
        };
        Ok(self.unary_node(Op::ReduceMax(self.ids(), argmax), v))
    }

    /// Channel-wise layer normalization with `(1, c, 1, 1)` affine parameters.
    pub fn layer_norm(&self, gain: &Var<'_, T>, bias: &Var<'_, T>, eps: f64) -> Result<Var<'t, T>> {
        self.same_tape(gain)?;
        self.same_tape(bias)?;
        let (v, saved) =
            tensor::layer_norm_saved(&self.value, &gain.value, &bias.value, T::of(eps))?;
        let rg = self.requires_grad || gain.requires_grad || bias.requires_grad;
        Ok(self.tape.push(
            Op::LayerNorm {
                x: self.ids(),
                gain: gain.ids(),
                bias: bias.ids(),
                saved,
            },
            v,
            rg,
        ))
    }

    pub fn softmax(&self, axes: AxisSet) -> Result<Var<'t, T>> {
        let v = tensor::softmax(&self.value, axes)?;
        Ok(self.unary_node(Op::Softmax(self.ids(), axes), v))
    }

    pub fn unfold(&self, k: usize, mode: PaddingMode) -> Result<Var<'t, T>> {
        let v = tensor::unfold(&self.value, k, mode)?;
        Ok(self.unary_node(
            Op::Unfold {
                x: self.ids(),
                k,
                mode,
            },
            v,
        ))
    }

    /// See [`tensor::apply_filter_bank`]; `self` is the unfolded map.
    pub fn apply_filter_bank(&self, bank: &Var<'_, T>) -> Result<Var<'t, T>> {
        self.same_tape(bank)?;
        let v = tensor::apply_filter_bank(&self.value, &bank.value)?;
        Ok(self.tape.push(
            Op::FilterBank {
                unfolded: self.ids(),
                bank: bank.ids(),
            },
            v,
            self.requires_grad || bank.requires_grad,
        ))
    }

    pub fn avg_downsample(&self, r: usize) -> Result<Var<'t, T>> {
        let v = tensor::avg_downsample(&self.value, r)?;
        Ok(self.unary_node(Op::AvgDown(self.ids(), r), v))
    }

    pub fn pixel_shuffle(&self, r: usize) -> Result<Var<'t, T>> {
        let v = tensor::pixel_shuffle(&self.value, r)?;
        Ok(self.unary_node(Op::PixelShuffle(self.ids(), r), v))
    }

    /// Unnormalized 2-D DFT as `(real, imag)`.
    pub fn fft2d(&self) -> Result<(Var<'t, T>, Var<'t, T>)> {
        let (re, im) = tensor::fft2d(&self.value)?;
        let c = re.shape().c();
        let packed = Tensor::cat_channels(&[&re, &im])?;
        let node = self.unary_node(Op::Fft(self.ids()), packed);
        Ok((node.narrow_channels(0, c)?, node.narrow_channels(c, c)?))
    }
}

impl<T: Scalar> Tape<T> {
    pub fn cat_channels<'t>(&'t self, parts: &[&Var<'t, T>]) -> Result<Var<'t, T>> {
        Var::cat_channels(parts)
    }
}
