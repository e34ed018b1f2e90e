use serde::{Deserialize, Serialize};

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::tensor::{self, ConvOptions, PaddingMode, Scalar, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CharbonnierMode {
    /// Mean of `√(d² + ε²)` over elements.
    #[default]
    Elementwise,
    /// `√(‖d‖² + ε²)` over the whole tensor.
    GlobalNorm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub eps: f64,
    /// Frequency term weight.
    pub lambda: f64,
    /// Edge term weight.
    pub delta: f64,
    pub charbonnier: CharbonnierMode,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            eps: 1e-3,
            lambda: 0.1,
            delta: 0.05,
            charbonnier: CharbonnierMode::Elementwise,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.lambda >= 0.0 && self.delta >= 0.0) {
            return Err(Error::Config(format!(
                "loss weights must be positive: eps={} lambda={} delta={}",
                self.eps, self.lambda, self.delta
            )));
        }
        Ok(())
    }
}

fn check_pair<T: Scalar>(op: &'static str, a: &Var<'_, T>, b: &Var<'_, T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    Ok(())
}

pub fn charbonnier<'t, T: Scalar>(
    pred: &Var<'t, T>,
    target: &Var<'t, T>,
    eps: f64,
    mode: CharbonnierMode,
) -> Result<Var<'t, T>> {
    check_pair("charbonnier", pred, target)?;
    let sq = pred.sub(target)?.square();
    Ok(match mode {
        CharbonnierMode::Elementwise => sq.add_scalar(eps * eps).sqrt().mean_all(),
        CharbonnierMode::GlobalNorm => sq.sum_all().add_scalar(eps * eps).sqrt(),
    })
}

/// Per-channel 4-neighbour Laplacian with replicate padding.
pub fn laplacian<'t, T: Scalar>(x: &Var<'t, T>) -> Result<Var<'t, T>> {
    let c = x.shape().c();
    let k = [0.0, 1.0, 0.0, 1.0, -4.0, 1.0, 0.0, 1.0, 0.0];
    let w = Tensor::from_fn([c, 1, 3, 3], |[_, _, y, x]| T::of(k[y * 3 + x]));
    let opts = ConvOptions::depthwise(3, c).with_mode(PaddingMode::Replicate);
    x.conv2d(&x.tape().constant(w), None, opts)
}

pub fn edge_loss<'t, T: Scalar>(
    pred: &Var<'t, T>,
    target: &Var<'t, T>,
    eps: f64,
    mode: CharbonnierMode,
) -> Result<Var<'t, T>> {
    check_pair("edge_loss", pred, target)?;
    charbonnier(&laplacian(pred)?, &laplacian(target)?, eps, mode)
}

/// Mean absolute difference of the real and imaginary parts of the 2-D
/// DFTs, after zero-padding both sides to powers of two.
pub fn freq_loss<'t, T: Scalar>(pred: &Var<'t, T>, target: &Var<'t, T>) -> Result<Var<'t, T>> {
    check_pair("freq_loss", pred, target)?;
    let s = pred.shape();
    let (h, w) = (tensor::next_pow2(s.h()), tensor::next_pow2(s.w()));
    let (pr, pi) = pred.pad_to(h, w)?.fft2d()?;
    let (tr, ti) = target.pad_to(h, w)?.fft2d()?;
    let d = Var::cat_channels(&[&pr.sub(&tr)?, &pi.sub(&ti)?])?;
    Ok(d.abs().mean_all())
}

/// The three terms for one output head.
pub struct HeadLoss<'t, T: Scalar> {
    pub charbonnier: Var<'t, T>,
    pub edge: Var<'t, T>,
    pub freq: Var<'t, T>,
}

impl<'t, T: Scalar> HeadLoss<'t, T> {
    pub fn new(pred: &Var<'t, T>, target: &Var<'t, T>, w: &LossWeights) -> Result<Self> {
        Ok(HeadLoss {
            charbonnier: charbonnier(pred, target, w.eps, w.charbonnier)?,
            edge: edge_loss(pred, target, w.eps, w.charbonnier)?,
            freq: freq_loss(pred, target)?,
        })
    }

    pub fn weighted(&self, w: &LossWeights) -> Result<Var<'t, T>> {
        self.charbonnier
            .add(&self.edge.scale(w.delta))?
            .add(&self.freq.scale(w.lambda))
    }
}

/// Sum over heads of `L_c + δ·L_e + λ·L_f`. Each head is compared with the
/// ground truth resized (bilinearly) to its resolution.
pub fn total_loss<'t, T: Scalar>(
    outputs: &[Var<'t, T>],
    target: &Tensor<T>,
    w: &LossWeights,
) -> Result<Var<'t, T>> {
    let Some(first) = outputs.first() else {
        return Err(Error::invalid("total_loss", "no outputs"));
    };
    let tape = first.tape();
    let mut total: Option<Var<'t, T>> = None;
    for out in outputs {
        let s = out.shape();
        let t = if s == target.shape() {
            target.clone()
        } else {
            tensor::bilinear_resize(target, s.h(), s.w())?
        };
        let term = HeadLoss::new(out, &tape.constant(t), w)?.weighted(w)?;
        total = Some(match total {
            Some(acc) => acc.add(&term)?,
            None => term,
        });
    }
    Ok(total.expect("at least one head"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use crate::gradcheck::{check_gradients, GradCheckOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn rand_t(shape: [usize; 4], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| rng.random_range(0.0..1.0))
    }

    fn eval(f: impl for<'t> Fn(&'t Tape<f64>) -> Result<Var<'t, f64>>) -> f64 {
        let tape = Tape::inference();
        f(&tape).unwrap().value().item()
    }

    fn pair_loss(
        a: &Tensor<f64>,
        b: &Tensor<f64>,
        f: impl for<'t> Fn(&Var<'t, f64>, &Var<'t, f64>) -> Result<Var<'t, f64>>,
    ) -> f64 {
        eval(|t| f(&t.constant(a.clone()), &t.constant(b.clone())))
    }

    fn charb(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
        pair_loss(a, b, |p, q| {
            charbonnier(p, q, 1e-3, CharbonnierMode::Elementwise)
        })
    }

    #[test]
    fn charbonnier_examples() {
        let x = rand_t([1, 3, 5, 4], 1);
        assert!((charb(&x, &x) - 1e-3).abs() < 1e-15);
        let ones = x.map(|v| v + 1.0);
        assert!((charb(&ones, &x) - (1.0f64 + 1e-6).sqrt()).abs() < 1e-12);

        let y = rand_t([1, 3, 5, 4], 2);
        let mut acc = 0.0;
        for (p, q) in x.data().iter().zip(y.data()) {
            acc += ((p - q) * (p - q) + 1e-6).sqrt();
        }
        assert!((charb(&x, &y) - acc / x.numel() as f64).abs() < 1e-14);

        let global = pair_loss(&x, &y, |p, q| {
            charbonnier(p, q, 1e-3, CharbonnierMode::GlobalNorm)
        });
        let sq: f64 = x
            .data()
            .iter()
            .zip(y.data())
            .map(|(p, q)| (p - q) * (p - q))
            .sum();
        assert!((global - (sq + 1e-6).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let tape = Tape::<f64>::inference();
        let a = tape.constant(Tensor::zeros([1, 3, 4, 4]));
        let b = tape.constant(Tensor::zeros([1, 3, 4, 2]));
        assert!(charbonnier(&a, &b, 1e-3, CharbonnierMode::Elementwise).is_err());
        assert!(edge_loss(&a, &b, 1e-3, CharbonnierMode::Elementwise).is_err());
        assert!(freq_loss(&a, &b).is_err());
    }

    fn laplacian_oracle(x: &Tensor<f64>) -> Tensor<f64> {
        let s = x.shape();
        let at = |n, c, y: isize, w: isize| {
            let y = y.clamp(0, s.h() as isize - 1) as usize;
            let w = w.clamp(0, s.w() as isize - 1) as usize;
            x.at([n, c, y, w])
        };
        Tensor::from_fn(s, |[n, c, y, w]| {
            let (y, w) = (y as isize, w as isize);
            at(n, c, y - 1, w) + at(n, c, y + 1, w) + at(n, c, y, w - 1) + at(n, c, y, w + 1)
                - 4.0 * at(n, c, y, w)
        })
    }

    #[test]
    fn edge_loss_examples() {
        let x = rand_t([2, 3, 6, 5], 3);
        let edge = |a: &Tensor<f64>, b: &Tensor<f64>| {
            pair_loss(a, b, |p, q| {
                edge_loss(p, q, 1e-3, CharbonnierMode::Elementwise)
            })
        };
        assert!((edge(&x, &x) - 1e-3).abs() < 1e-15);
        let c1 = Tensor::full([1, 3, 6, 6], 0.2);
        let c2 = Tensor::full([1, 3, 6, 6], 0.9);
        assert!((edge(&c1, &c2) - 1e-3).abs() < 1e-15);

        let y = rand_t([2, 3, 6, 5], 4);
        let oracle = charb(&laplacian_oracle(&x), &laplacian_oracle(&y));
        assert!((edge(&x, &y) - oracle).abs() < 1e-13);
    }

    /// Naive DFT of one plane, zero-padded to `h×w`.
    fn dft(plane: &[f64], ph: usize, pw: usize, h: usize, w: usize) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(h * w);
        for u in 0..h {
            for v in 0..w {
                let (mut re, mut im) = (0.0, 0.0);
                for y in 0..ph {
                    for x in 0..pw {
                        let a = -2.0 * PI * ((u * y) as f64 / h as f64 + (v * x) as f64 / w as f64);
                        re += plane[y * pw + x] * a.cos();
                        im += plane[y * pw + x] * a.sin();
                    }
                }
                out.push((re, im));
            }
        }
        out
    }

    fn freq_oracle(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
        let s = a.shape();
        let (h, w) = (s.h().next_power_of_two(), s.w().next_power_of_two());
        let mut acc = 0.0;
        for n in 0..s.n() {
            for c in 0..s.c() {
                let fa = dft(a.plane(n, c), s.h(), s.w(), h, w);
                let fb = dft(b.plane(n, c), s.h(), s.w(), h, w);
                for ((ar, ai), (br, bi)) in fa.iter().zip(&fb) {
                    acc += (ar - br).abs() + (ai - bi).abs();
                }
            }
        }
        acc / (2 * s.n() * s.c() * h * w) as f64
    }

    #[test]
    fn freq_loss_examples() {
        let x = rand_t([1, 3, 8, 8], 5);
        assert_eq!(pair_loss(&x, &x, |p, q| freq_loss(p, q)), 0.0);

        let shifted = x.map(|v| v + 0.25);
        let got = pair_loss(&shifted, &x, |p, q| freq_loss(p, q));
        let oracle = freq_oracle(&shifted, &x);
        assert!((got - oracle).abs() < 1e-12);
        assert!((oracle - 0.125).abs() < 1e-12);

        for (i, shape) in [[1, 2, 5, 7], [2, 1, 8, 3], [1, 3, 4, 4]]
            .into_iter()
            .enumerate()
        {
            let a = rand_t(shape, 10 + i as u64);
            let b = rand_t(shape, 20 + i as u64);
            let got = pair_loss(&a, &b, |p, q| freq_loss(p, q));
            assert!((got - freq_oracle(&a, &b)).abs() < 1e-12);
        }
    }

    #[test]
    fn total_loss_examples() {
        let target = rand_t([1, 3, 16, 16], 6);
        let w = LossWeights::default();
        let heads: Vec<Tensor<f64>> = [16, 8, 4]
            .iter()
            .map(|&s| tensor::bilinear_resize(&target, s, s).unwrap())
            .collect();
        let total = eval(|t| {
            let outs: Vec<_> = heads.iter().map(|h| t.constant(h.clone())).collect();
            total_loss(&outs, &target, &w)
        });
        assert!((total - 3.0 * (1e-3 + 0.05 * 1e-3)).abs() < 1e-12);

        let noisy: Vec<Tensor<f64>> = heads
            .iter()
            .enumerate()
            .map(|(i, h)| {
                h.add(&rand_t(h.shape().0, 30 + i as u64).scale(0.1))
                    .unwrap()
            })
            .collect();
        let zeroed = LossWeights {
            lambda: 0.0,
            delta: 0.0,
            ..w
        };
        let got = eval(|t| {
            let outs: Vec<_> = noisy.iter().map(|h| t.constant(h.clone())).collect();
            total_loss(&outs, &target, &zeroed)
        });
        let charb_sum: f64 = noisy.iter().zip(&heads).map(|(a, b)| charb(a, b)).sum();
        assert!((got - charb_sum).abs() < 1e-13);

        let got = eval(|t| {
            let outs: Vec<_> = noisy.iter().map(|h| t.constant(h.clone())).collect();
            total_loss(&outs, &target, &w)
        });
        let mut hand = 0.0;
        for (a, b) in noisy.iter().zip(&heads) {
            hand += charb(a, b)
                + 0.05 * charb(&laplacian_oracle(a), &laplacian_oracle(b))
                + 0.1 * freq_oracle(a, b);
        }
        assert!((got - hand).abs() < 1e-12);

        assert!(total_loss::<f64>(&[], &target, &w).is_err());
    }

    #[test]
    fn losses_are_symmetric_and_bounded() {
        for seed in 0..10 {
            let a = rand_t([1, 2, 6, 6], 100 + seed);
            let b = rand_t([1, 2, 6, 6], 200 + seed);
            let fs: [&dyn Fn(&Tensor<f64>, &Tensor<f64>) -> f64; 3] = [
                &|a, b| charb(a, b),
                &|a, b| {
                    pair_loss(a, b, |p, q| {
                        edge_loss(p, q, 1e-3, CharbonnierMode::Elementwise)
                    })
                },
                &|a, b| pair_loss(a, b, |p, q| freq_loss(p, q)),
            ];
            for (i, f) in fs.iter().enumerate() {
                let (ab, ba) = (f(&a, &b), f(&b, &a));
                assert!((ab - ba).abs() < 1e-14);
                assert!(ab >= if i < 2 { 1e-3 } else { 0.0 });
            }
        }
    }

    #[test]
    fn loss_gradients() {
        let inputs = vec![
            ("pred".to_owned(), rand_t([1, 2, 6, 5], 7)),
            ("target".to_owned(), rand_t([1, 2, 6, 5], 8)),
        ];
        let w = LossWeights::default();
        let r = check_gradients(&inputs, GradCheckOptions::default(), |_, v| {
            HeadLoss::new(&v[0], &v[1], &w)?.weighted(&w)
        })
        .unwrap();
        for rep in &r {
            assert!(rep.rel_err < 1e-4, "{}: {:.3e}", rep.name, rep.rel_err);
        }
    }
}
