//! Training pairs, patch sampling, flips and synthetic clean images.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::degrade::{degrade, Degradation};
use super::rng_stream;

/// A degraded input and its clean target, both `(1, 3, h, w)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Pair {
    pub input: Tensor<f32>,
    pub target: Tensor<f32>,
}

impl Pair {
    pub fn new(input: Tensor<f32>, target: Tensor<f32>) -> Result<Self> {
        if input.shape() != target.shape() {
            return Err(Error::ShapeMismatch {
                op: "pair",
                lhs: input.shape(),
                rhs: target.shape(),
            });
        }
        Ok(Pair { input, target })
    }

    fn map(&self, f: impl Fn(&Tensor<f32>) -> Tensor<f32>) -> Pair {
        Pair {
            input: f(&self.input),
            target: f(&self.target),
        }
    }
}

pub fn flip_horizontal(t: &Tensor<f32>) -> Tensor<f32> {
    let w = t.shape().w();
    Tensor::from_fn(t.shape(), |[n, c, y, x]| t.at([n, c, y, w - 1 - x]))
}

pub fn flip_vertical(t: &Tensor<f32>) -> Tensor<f32> {
    let h = t.shape().h();
    Tensor::from_fn(t.shape(), |[n, c, y, x]| t.at([n, c, h - 1 - y, x]))
}

pub fn crop(t: &Tensor<f32>, y0: usize, x0: usize, h: usize, w: usize) -> Result<Tensor<f32>> {
    let s = t.shape();
    if y0 + h > s.h() || x0 + w > s.w() {
        return Err(Error::invalid(
            "crop",
            format!("{h}x{w} at ({y0}, {x0}) exceeds {}x{}", s.h(), s.w()),
        ));
    }
    Ok(Tensor::from_fn(s.with_hw(h, w), |[n, c, y, x]| {
        t.at([n, c, y0 + y, x0 + x])
    }))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Flips {
    pub horizontal: bool,
    pub vertical: bool,
}

impl Flips {
    /// Each flip independently with probability ½.
    pub fn draw(rng: &mut impl Rng) -> Self {
        Flips {
            horizontal: rng.random_bool(0.5),
            vertical: rng.random_bool(0.5),
        }
    }

    pub fn apply(&self, t: &Tensor<f32>) -> Tensor<f32> {
        let t = if self.horizontal {
            flip_horizontal(t)
        } else {
            t.clone()
        };
        if self.vertical {
            flip_vertical(&t)
        } else {
            t
        }
    }
}

/// Applies the same random flips to input and target.
pub fn augment(pair: &Pair, rng: &mut impl Rng) -> Pair {
    let flips = Flips::draw(rng);
    pair.map(|t| flips.apply(t))
}

/// Top-left corner of a uniformly placed `size × size` window.
pub fn patch_origin(h: usize, w: usize, size: usize, rng: &mut impl Rng) -> Result<(usize, usize)> {
    if size == 0 || size > h || size > w {
        return Err(Error::invalid(
            "sample_patch",
            format!("patch {size} does not fit a {h}x{w} image"),
        ));
    }
    Ok((
        rng.random_range(0..=h - size),
        rng.random_range(0..=w - size),
    ))
}

/// The same random `size × size` crop of input and target.
pub fn sample_patch(pair: &Pair, size: usize, rng: &mut impl Rng) -> Result<Pair> {
    let s = pair.input.shape();
    let (y, x) = patch_origin(s.h(), s.w(), size, rng)?;
    Ok(Pair {
        input: crop(&pair.input, y, x, size, size)?,
        target: crop(&pair.target, y, x, size, size)?,
    })
}

/// A clean test card: smooth colour gradient, a few flat shapes and a
/// faint stripe texture, all in `[0, 1]`.
pub fn synthetic_image(h: usize, w: usize, rng: &mut impl Rng) -> Tensor<f32> {
    let mut base = [[0.0f64; 3]; 3];
    for row in &mut base {
        for v in row.iter_mut() {
            *v = rng.random_range(0.1..0.9);
        }
    }
    let shapes: Vec<_> = (0..rng.random_range(3..7))
        .map(|_| {
            let circle = rng.random_bool(0.5);
            let cy = rng.random_range(0.0..h as f64);
            let cx = rng.random_range(0.0..w as f64);
            let ry = rng.random_range(0.08..0.3) * h as f64;
            let rx = rng.random_range(0.08..0.3) * w as f64;
            let colour = [
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
            ];
            (circle, cy, cx, ry, rx, colour)
        })
        .collect();
    let freq = rng.random_range(0.2..0.8);
    let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
    Tensor::from_fn([1, 3, h, w], |[_, c, y, x]| {
        let (fy, fx) = (y as f64 / h.max(1) as f64, x as f64 / w.max(1) as f64);
        let mut v = base[c][0] * (1.0 - fy) + base[c][1] * fy * (1.0 - fx) + base[c][2] * fx * fy;
        for (circle, cy, cx, ry, rx, colour) in &shapes {
            let dy = (y as f64 + 0.5 - cy) / ry;
            let dx = (x as f64 + 0.5 - cx) / rx;
            let inside = if *circle {
                dy * dy + dx * dx <= 1.0
            } else {
                dy.abs() <= 1.0 && dx.abs() <= 1.0
            };
            if inside {
                v = colour[c];
            }
        }
        v += 0.05 * (freq * (x as f64 * angle.cos() + y as f64 * angle.sin())).sin();
        v.clamp(0.0, 1.0) as f32
    })
}

/// `count` synthetic `size × size` pairs degraded by `spec`.
pub fn synthetic_pairs(
    count: usize,
    size: usize,
    spec: &Degradation,
    seed: u64,
) -> Result<Vec<Pair>> {
    let mut rng = rng_stream(seed, 0);
    (0..count)
        .map(|_| {
            let clean = synthetic_image(size, size, &mut rng);
            let input = degrade(&clean, spec, &mut rng)?;
            Pair::new(input, clean)
        })
        .collect()
}
