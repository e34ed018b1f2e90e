//! Seeded synthetic degradations of clean images in `[0, 1]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{self, ConvOptions, PaddingMode, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Degradation {
    /// Atmospheric scattering, `I = J·t + A·(1 − t)`.
    Haze {
        transmission: f64,
        airlight: [f64; 3],
    },
    /// Gaussian blur with replicate padding.
    Blur { sigma: f64, kernel: usize },
    /// Additive bright discs.
    Snow {
        flakes: usize,
        radius: [f64; 2],
        brightness: f64,
    },
}

impl Degradation {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let ok = match self {
            Degradation::Haze {
                transmission,
                airlight,
            } => unit(*transmission) && airlight.iter().all(|&a| unit(a)),
            Degradation::Blur { sigma, kernel } => *sigma > 0.0 && kernel % 2 == 1,
            Degradation::Snow {
                radius, brightness, ..
            } => radius[0] > 0.0 && radius[0] <= radius[1] && unit(*brightness),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "degradation parameters out of range: {self:?}"
            )))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Degradation::Haze { .. } => "haze",
            Degradation::Blur { .. } => "blur",
            Degradation::Snow { .. } => "snow",
        }
    }
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_kernel(sigma: f64, size: usize) -> Vec<f64> {
    let r = (size / 2) as f64;
    let g: Vec<f64> = (0..size)
        .map(|i| (-(i as f64 - r).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

pub fn degrade(clean: &Tensor<f32>, spec: &Degradation, rng: &mut impl Rng) -> Result<Tensor<f32>> {
    spec.validate()?;
    let s = clean.shape();
    if s.c() != 3 {
        return Err(Error::AxisMismatch {
            op: "degrade",
            axis: "channel",
            expected: 3,
            got: s.c(),
        });
    }
    let out = match spec {
        Degradation::Haze {
            transmission: t,
            airlight,
        } => Tensor::from_fn(s, |[n, c, y, x]| {
            let j = clean.at([n, c, y, x]) as f64;
            (j * t + airlight[c] * (1.0 - t)) as f32
        }),
        Degradation::Blur { sigma, kernel } => {
            let g = gaussian_kernel(*sigma, *kernel);
            let k = *kernel;
            let w = Tensor::from_fn([3, 1, k, k], |[_, _, y, x]| (g[y] * g[x]) as f32);
            let opts = ConvOptions::depthwise(k, 3).with_mode(PaddingMode::Replicate);
            tensor::conv2d(clean, &w, None, &opts)?
        }
        Degradation::Snow {
            flakes,
            radius,
            brightness,
        } => {
            let mut out = clean.clone();
            for n in 0..s.n() {
                for _ in 0..*flakes {
                    let cy = rng.random_range(0.0..s.h() as f64);
                    let cx = rng.random_range(0.0..s.w() as f64);
                    let r = if radius[0] < radius[1] {
                        rng.random_range(radius[0]..radius[1])
                    } else {
                        radius[0]
                    };
                    let y0 = (cy - r - 1.0).floor().max(0.0) as usize;
                    let x0 = (cx - r - 1.0).floor().max(0.0) as usize;
                    let y1 = ((cy + r + 1.0).ceil() as usize).min(s.h());
                    let x1 = ((cx + r + 1.0).ceil() as usize).min(s.w());
                    for y in y0..y1 {
                        for x in x0..x1 {
                            let d = ((y as f64 + 0.5 - cy).powi(2) + (x as f64 + 0.5 - cx).powi(2))
                                .sqrt();
                            // One-pixel soft edge.
                            let cover = (r - d + 0.5).clamp(0.0, 1.0);
                            if cover > 0.0 {
                                for c in 0..3 {
                                    let v = out.at([n, c, y, x]) as f64 + brightness * cover;
                                    out.set([n, c, y, x], v as f32);
                                }
                            }
                        }
                    }
                }
            }
            out
        }
    };
    Ok(out.map(|v| v.clamp(0.0, 1.0)))
}
