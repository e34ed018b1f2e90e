use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

fn check<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    Ok(())
}

pub fn mse<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    check("mse", pred, target)?;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2))
        .sum();
    Ok(sum / pred.numel() as f64)
}

pub fn mae<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    check("mae", pred, target)?;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
        .sum();
    Ok(sum / pred.numel() as f64)
}

/// Peak signal-to-noise ratio in dB; `+inf` for a perfect match.
pub fn psnr<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, peak: f64) -> Result<f64> {
    let m = mse(pred, target)?;
    Ok(if m == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / m).log10()
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimOptions {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub peak: f64,
}

impl Default for SsimOptions {
    fn default() -> Self {
        SsimOptions {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            peak: 1.0,
        }
    }
}

fn gaussian(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as f64;
    let g: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - r).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Valid-mode separable filtering of an `h×w` plane.
fn filter(plane: &[f64], h: usize, w: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..k).map(|i| g[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| g[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Structural similarity with a Gaussian window over valid positions,
/// averaged over windows, channels and samples. Images smaller than the
/// window use the largest odd window that fits.
pub fn ssim<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, opts: SsimOptions) -> Result<f64> {
    check("ssim", pred, target)?;
    let s = pred.shape();
    let fit = s.h().min(s.w());
    let size = if opts.window <= fit {
        opts.window
    } else {
        fit - (1 - fit % 2)
    };
    if size == 0 {
        return Err(Error::invalid("ssim", "empty image"));
    }
    let g = gaussian(size, opts.sigma);
    let c1 = (opts.k1 * opts.peak).powi(2);
    let c2 = (opts.k2 * opts.peak).powi(2);
    let (h, w) = (s.h(), s.w());
    let mut total = 0.0;
    let mut count = 0usize;
    for n in 0..s.n() {
        for c in 0..s.c() {
            let a: Vec<f64> = pred.plane(n, c).iter().map(|v| v.as_f64()).collect();
            let b: Vec<f64> = target.plane(n, c).iter().map(|v| v.as_f64()).collect();
            let prod = |x: &[f64], y: &[f64]| -> Vec<f64> {
                x.iter().zip(y).map(|(p, q)| p * q).collect()
            };
            let mu_a = filter(&a, h, w, &g);
            let mu_b = filter(&b, h, w, &g);
            let e_aa = filter(&prod(&a, &a), h, w, &g);
            let e_bb = filter(&prod(&b, &b), h, w, &g);
            let e_ab = filter(&prod(&a, &b), h, w, &g);
            for i in 0..mu_a.len() {
                let (ma, mb) = (mu_a[i], mu_b[i]);
                let va = e_aa[i] - ma * ma;
                let vb = e_bb[i] - mb * mb;
                let cov = e_ab[i] - ma * mb;
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}
