use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::model::{Model, SIZE_MULTIPLE};
use crate::objectives::{psnr, total_loss, LossWeights};
use crate::tensor::Tensor;

use super::data::{augment, sample_patch, Pair};
use super::optim::{cosine_lr, Adam, AdamConfig};
use super::rng_stream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub lr_init: f64,
    pub lr_final: f64,
    pub total_steps: usize,
    pub batch: usize,
    pub patch: usize,
    pub flips: bool,
    pub seed: u64,
    /// Held-out PSNR every this many steps (and at the last step); 0 never.
    pub eval_every: usize,
    pub loss: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beta1: 0.9,
            beta2: 0.999,
            lr_init: 8e-4,
            lr_final: 1e-6,
            total_steps: 1000,
            batch: 4,
            patch: 64,
            flips: true,
            seed: 0,
            eval_every: 50,
            loss: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if !(self.lr_final > 0.0 && self.lr_final <= self.lr_init) {
            return err(format!(
                "need 0 < lr_final <= lr_init, got {} and {}",
                self.lr_final, self.lr_init
            ));
        }
        if self.patch == 0 || self.patch % SIZE_MULTIPLE != 0 {
            return err(format!(
                "patch {} is not a positive multiple of {SIZE_MULTIPLE}",
                self.patch
            ));
        }
        if self.batch == 0 {
            return err("batch must be positive".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return err(format!(
                "betas must lie in [0, 1): {} {}",
                self.beta1, self.beta2
            ));
        }
        self.loss.validate()
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub psnr: Option<f64>,
}

pub const LOG_HEADER: &str = "step,lr,loss,psnr";

/// Decimal for finite values, `inf` for a perfect score.
pub fn format_metric(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v}")
    }
}

impl StepRecord {
    pub fn csv_line(&self) -> String {
        let psnr = self.psnr.map(format_metric).unwrap_or_default();
        format!("{},{},{},{}", self.step, self.lr, self.loss, psnr)
    }
}

pub fn log_csv(records: &[StepRecord]) -> String {
    let mut out = String::from(LOG_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{}", r.csv_line());
    }
    out
}

pub fn write_log_csv(records: &[StepRecord], path: &Path) -> Result<()> {
    std::fs::write(path, log_csv(records)).map_err(|e| Error::io(path, e))
}

/// Mean PSNR of the first (finest) output over `pairs`.
pub fn mean_psnr(model: &Model<f32>, pairs: &[Pair]) -> Result<f64> {
    let mut total = 0.0;
    for p in pairs {
        let out = model.infer(&p.input)?;
        total += psnr(&out[0], &p.target, 1.0)?;
    }
    Ok(total / pairs.len().max(1) as f64)
}

/// Mean PSNR of the degraded inputs themselves.
pub fn input_psnr(pairs: &[Pair]) -> Result<f64> {
    let mut total = 0.0;
    for p in pairs {
        total += psnr(&p.input, &p.target, 1.0)?;
    }
    Ok(total / pairs.len().max(1) as f64)
}

/// Seeded epoch-wise shuffling of pair indices.
struct Batches {
    order: Vec<usize>,
    next: usize,
}

impl Batches {
    fn take(&mut self, k: usize, rng: &mut impl rand::Rng) -> Vec<usize> {
        (0..k)
            .map(|_| {
                if self.next == self.order.len() {
                    self.order.shuffle(rng);
                    self.next = 0;
                }
                self.next += 1;
                self.order[self.next - 1]
            })
            .collect()
    }
}

/// Trains `model` in place on `train`, calling `on_step` after every step.
pub fn train_loop(
    model: &mut Model<f32>,
    train: &[Pair],
    heldout: &[Pair],
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<Vec<StepRecord>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("no training pairs".into()));
    }
    let mut adam = Adam::new(
        AdamConfig {
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            ..Default::default()
        },
        &model.params,
    );
    let mut rng = rng_stream(cfg.seed, 1);
    let mut batches = Batches {
        order: (0..train.len()).collect(),
        next: train.len(),
    };
    let mut records = Vec::with_capacity(cfg.total_steps);
    for step in 1..=cfg.total_steps {
        let lr = cosine_lr(step - 1, cfg.total_steps, cfg.lr_init, cfg.lr_final);
        let mut inputs = Vec::with_capacity(cfg.batch);
        let mut targets = Vec::with_capacity(cfg.batch);
        for i in batches.take(cfg.batch, &mut rng) {
            let mut p = sample_patch(&train[i], cfg.patch, &mut rng)?;
            if cfg.flips {
                p = augment(&p, &mut rng);
            }
            inputs.push(p.input);
            targets.push(p.target);
        }
        let input = Tensor::cat_batch(&inputs.iter().collect::<Vec<_>>())?;
        let target = Tensor::cat_batch(&targets.iter().collect::<Vec<_>>())?;

        let (loss, grads) = {
            let tape = Tape::new();
            let ctx = model.params.bind(&tape, true);
            let forward = model
                .forward(&ctx, &tape.constant(input))
                .and_then(|outs| total_loss(&outs, &target, &cfg.loss));
            let loss = match forward {
                Ok(l) => l,
                // Ops that reject NaN stop the pass before any gradient exists.
                Err(Error::NonFinite { op }) => {
                    let param = model
                        .params
                        .iter()
                        .find(|(_, t)| !t.all_finite())
                        .map_or_else(|| format!("<{op}>"), |(n, _)| n.to_owned());
                    return Err(Error::NonFiniteLoss { step, param });
                }
                Err(e) => return Err(e),
            };
            let grads = tape.backward(&loss)?;
            let g: Vec<Tensor<f32>> = ctx
                .vars()
                .iter()
                .map(|v| grads.get(v).expect("parameters are trainable"))
                .collect();
            (loss.value().item() as f64, g)
        };
        if !loss.is_finite() || grads.iter().any(|g| !g.all_finite()) {
            let param = model
                .params
                .ids()
                .zip(&grads)
                .find(|(_, g)| !g.all_finite())
                .map_or_else(
                    || "<loss>".to_owned(),
                    |(id, _)| model.params.name(id).to_owned(),
                );
            return Err(Error::NonFiniteLoss { step, param });
        }
        adam.step(&mut model.params, &grads, lr)?;

        let eval = cfg.eval_every > 0
            && !heldout.is_empty()
            && (step % cfg.eval_every == 0 || step == cfg.total_steps);
        let psnr = if eval {
            Some(mean_psnr(model, heldout)?)
        } else {
            None
        };
        let rec = StepRecord {
            step,
            lr,
            loss,
            psnr,
        };
        on_step(&rec);
        records.push(rec);
    }
    Ok(records)
}

/// Trailing moving average with the given window.
pub fn smoothed(values: &[f64], window: usize) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            values[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}
