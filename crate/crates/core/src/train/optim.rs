use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Params;
use crate::tensor::{Scalar, Tensor};

/// `lr_final + ½(lr_init − lr_final)(1 + cos(π·step/total))`, held at
/// `lr_final` past the end.
pub fn cosine_lr(step: usize, total: usize, lr_init: f64, lr_final: f64) -> f64 {
    if total == 0 || step >= total {
        return lr_final;
    }
    let t = step as f64 / total as f64;
    lr_final + 0.5 * (lr_init - lr_final) * (1.0 + (PI * t).cos())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments. Moments are kept in `f64`.
#[derive(Clone, Debug)]
pub struct Adam {
    pub cfg: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<T: Scalar>(cfg: AdamConfig, params: &Params<T>) -> Self {
        let zeros =
            || -> Vec<Vec<f64>> { params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect() };
        Adam {
            cfg,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update. `grads` holds one tensor per parameter, in
    /// registry order.
    pub fn step<T: Scalar>(
        &mut self,
        params: &mut Params<T>,
        grads: &[Tensor<T>],
        lr: f64,
    ) -> Result<()> {
        if grads.len() != self.m.len() || params.len() != self.m.len() {
            return Err(Error::invalid(
                "adam",
                format!("{} gradients for {} parameters", grads.len(), self.m.len()),
            ));
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (i, ((_, p), g)) in params.iter_mut().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam",
                    lhs: p.shape(),
                    rhs: g.shape(),
                });
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, (w, gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                let gj = gj.as_f64();
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let update = lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + eps);
                *w = T::of(w.as_f64() - update);
            }
        }
        Ok(())
    }
}
