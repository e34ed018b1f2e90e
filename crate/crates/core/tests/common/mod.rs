//! Oracles and harnesses shared by the integration tests and the acceptance
//! runner. Everything here is written against the public API only.
#![allow(dead_code)]

use ecfnet_core::blocks::{
    simple_gate, ChannelScore, Fdam, FdamConfig, MsBlock, MsfBlock, MssfBlock, ScaBlock, Sdam, Sfam,
};
use ecfnet_core::gradcheck::{check_gradients, project, GradCheckOptions, GradReport};
use ecfnet_core::model::ShallowVariant;
use ecfnet_core::nn::{Ctx, ParamBuilder};
use ecfnet_core::objectives::{self, CharbonnierMode, LossWeights};
use ecfnet_core::train::trainer::{train_loop, StepRecord, TrainConfig};
use ecfnet_core::train::{synthetic_pairs, Degradation, Pair};
use ecfnet_core::{
    AxisSet, ConvOptions, Model, ModelConfig, PaddingMode, Params, Result, Tape, Tensor, Var,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_t(shape: [usize; 4], rng: &mut impl Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    diff / scale
}

fn clamp_idx(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Padded read; zero outside the image under zero padding.
fn padded(x: &Tensor<f64>, n: usize, c: usize, y: isize, xx: isize, mode: PaddingMode) -> f64 {
    let [_, _, h, w] = x.shape().0;
    let inside = y >= 0 && xx >= 0 && (y as usize) < h && (xx as usize) < w;
    match (inside, mode) {
        (true, _) => x.at([n, c, y as usize, xx as usize]),
        (false, PaddingMode::Zeros) => 0.0,
        (false, PaddingMode::Replicate) => x.at([n, c, clamp_idx(y, h), clamp_idx(xx, w)]),
    }
}

/// Direct nested-loop cross-correlation.
pub fn conv_oracle(
    x: &Tensor<f64>,
    wt: &Tensor<f64>,
    bias: Option<&Tensor<f64>>,
    o: &ConvOptions,
) -> Tensor<f64> {
    let [n, cin, h, w] = x.shape().0;
    let [cout, cg, kh, kw] = wt.shape().0;
    let oh = (h + 2 * o.padding - kh) / o.stride + 1;
    let ow = (w + 2 * o.padding - kw) / o.stride + 1;
    let per_out = cout / o.groups;
    assert_eq!(cg * o.groups, cin);
    let mut out = Tensor::zeros([n, cout, oh, ow]);
    for b in 0..n {
        for oc in 0..cout {
            let g = oc / per_out;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias.map_or(0.0, |t| t.data()[oc]);
                    for ic in 0..cg {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let y = (oy * o.stride + ky) as isize - o.padding as isize;
                                let xx = (ox * o.stride + kx) as isize - o.padding as isize;
                                acc += wt.at([oc, ic, ky, kx])
                                    * padded(x, b, g * cg + ic, y, xx, o.padding_mode);
                            }
                        }
                    }
                    out.set([b, oc, oy, ox], acc);
                }
            }
        }
    }
    out
}

/// Enumerates every `(y, x, dy, dx)` of a replicate-padded `k×k` unfold.
pub fn unfold_oracle(x: &Tensor<f64>, k: usize) -> Tensor<f64> {
    let [n, c, h, w] = x.shape().0;
    let r = (k / 2) as isize;
    Tensor::from_fn([n, c * k * k, h, w], |[b, ch, y, xx]| {
        let (c0, j) = (ch / (k * k), ch % (k * k));
        let (dy, dx) = ((j / k) as isize, (j % k) as isize);
        x.at([
            b,
            c0,
            clamp_idx(y as isize + dy - r, h),
            clamp_idx(xx as isize + dx - r, w),
        ])
    })
}

/// `exp(v) / Σ exp` over the given axes, straight from the definition.
pub fn softmax_oracle(x: &Tensor<f64>, axes: AxisSet) -> Tensor<f64> {
    let s = x.shape().0;
    let keep = |i: [usize; 4]| {
        [
            i[0],
            if axes.channel { 0 } else { i[1] },
            if axes.height { 0 } else { i[2] },
            if axes.width { 0 } else { i[3] },
        ]
    };
    let mut denom = std::collections::HashMap::new();
    for b in 0..s[0] {
        for c in 0..s[1] {
            for y in 0..s[2] {
                for xx in 0..s[3] {
                    let i = [b, c, y, xx];
                    *denom.entry(keep(i)).or_insert(0.0) += x.at(i).exp();
                }
            }
        }
    }
    Tensor::from_fn(x.shape(), |i| x.at(i).exp() / denom[&keep(i)])
}

/// Naive `O(n⁴)` unnormalized forward DFT of every plane.
pub fn dft_oracle(x: &Tensor<f64>) -> (Tensor<f64>, Tensor<f64>) {
    let [n, c, h, w] = x.shape().0;
    let mut re = Tensor::zeros(x.shape());
    let mut im = Tensor::zeros(x.shape());
    for b in 0..n {
        for ch in 0..c {
            for u in 0..h {
                for v in 0..w {
                    let (mut sr, mut si) = (0.0, 0.0);
                    for y in 0..h {
                        for xx in 0..w {
                            let a = -2.0
                                * std::f64::consts::PI
                                * ((u * y) as f64 / h as f64 + (v * xx) as f64 / w as f64);
                            let val = x.at([b, ch, y, xx]);
                            sr += val * a.cos();
                            si += val * a.sin();
                        }
                    }
                    re.set([b, ch, u, v], sr);
                    im.set([b, ch, u, v], si);
                }
            }
        }
    }
    (re, im)
}

/// Low-pass response as the dot product of each replicate-padded patch with
/// its group's filter.
pub fn lowpass_oracle(f: &Tensor<f64>, bank: &Tensor<f64>) -> Tensor<f64> {
    let [_, c, h, w] = f.shape().0;
    let [_, g, k, _] = bank.shape().0;
    let r = (k / 2) as isize;
    Tensor::from_fn(f.shape(), |[b, ch, y, xx]| {
        let grp = ch / (c / g);
        let mut acc = 0.0;
        for dy in 0..k {
            for dx in 0..k {
                let yy = clamp_idx(y as isize + dy as isize - r, h);
                let xs = clamp_idx(xx as isize + dx as isize - r, w);
                acc += bank.at([b, grp, dy, dx]) * f.at([b, ch, yy, xs]);
            }
        }
        acc
    })
}

pub fn build_with<T: ecfnet_core::Scalar, B>(
    seed: u64,
    f: impl FnOnce(&mut ParamBuilder<'_, T>) -> Result<B>,
) -> (Params<T>, B) {
    let mut params = Params::new();
    let mut r = rng(seed);
    let block = f(&mut ParamBuilder::new(&mut params, &mut r)).expect("block builds");
    (params, block)
}

/// Worst gradient report of `forward` over its parameters and input, with
/// every parameter redrawn from `U(-0.5, 0.5)` so biases and gains matter.
pub fn block_gradcheck<B>(
    seed: u64,
    shape: [usize; 4],
    build: impl FnOnce(&mut ParamBuilder<'_, f64>) -> Result<B>,
    forward: impl for<'t> Fn(&B, &Ctx<'t, f64>, &Var<'t, f64>) -> Result<Var<'t, f64>>,
) -> Vec<GradReport> {
    let (mut params, block) = build_with(seed, build);
    params.randomize(seed + 1, 0.5);
    let mut inputs: Vec<(String, Tensor<f64>)> = params
        .iter()
        .map(|(n, t)| (n.to_owned(), t.clone()))
        .collect();
    inputs.push(("input".into(), rand_t(shape, &mut rng(seed + 2))));
    let np = params.len();
    check_gradients(
        &inputs,
        GradCheckOptions {
            max_elements: Some(32),
            ..Default::default()
        },
        |tape, vars| {
            let ctx = params.bind_vars(tape, vars[..np].to_vec())?;
            project(&forward(&block, &ctx, &vars[np])?, seed + 3)
        },
    )
    .expect("gradcheck runs")
}

pub fn worst_err(reports: &[GradReport]) -> (f64, String) {
    reports
        .iter()
        .map(|r| (r.rel_err, r.name.clone()))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap_or((0.0, String::new()))
}

/// `(name, worst rel err, where)` for every block and loss on inputs no
/// larger than `(1, 8, 8, 8)`.
pub fn gradient_suite() -> Vec<(&'static str, f64, String)> {
    let s = [1, 8, 8, 8];
    let fdam = FdamConfig { k: 3, groups: 2 };
    let mut out = Vec::new();
    let mut push = |name, r: Vec<GradReport>| {
        let (e, w) = worst_err(&r);
        out.push((name, e, w));
    };
    push(
        "simple_gate",
        block_gradcheck(1, s, |_| Ok(()), |_, _, x| simple_gate(x)),
    );
    push(
        "scablock",
        block_gradcheck(
            2,
            s,
            |b| ScaBlock::new(b, "b", 8),
            |m, c, x| m.forward(c, x),
        ),
    );
    push(
        "msfblock",
        block_gradcheck(
            3,
            s,
            |b| MsfBlock::new(b, "b", 8),
            |m, c, x| m.forward(c, x),
        ),
    );
    push(
        "mssfblock",
        block_gradcheck(
            4,
            s,
            |b| MssfBlock::new(b, "b", 8),
            |m, c, x| m.forward(c, x),
        ),
    );
    push(
        "mssfblock_single",
        block_gradcheck(
            5,
            s,
            |b| MssfBlock::new(b, "b", 8).map(|m| m.with_outer_residual(false)),
            |m, c, x| m.forward(c, x),
        ),
    );
    push(
        "msblock",
        block_gradcheck(
            6,
            s,
            |b| MsBlock::new(b, "b", 8, 1),
            |m, c, x| m.forward(c, x),
        ),
    );
    push(
        "sdam",
        block_gradcheck(
            7,
            s,
            |b| Sdam::new(b, "b", 8, ChannelScore::Identity),
            |m, c, x| m.forward(c, x),
        ),
    );
    push(
        "fdam",
        block_gradcheck(
            8,
            s,
            |b| Fdam::new(b, "b", 8, fdam),
            |m, c, x| m.forward(c, x),
        ),
    );
    push(
        "sfam",
        block_gradcheck(
            9,
            s,
            |b| Sfam::new(b, "b", 8, fdam, ChannelScore::Identity, true),
            |m, c, x| m.forward(c, x),
        ),
    );
    push(
        "sfam_unshared",
        block_gradcheck(
            10,
            s,
            |b| Sfam::new(b, "b", 8, fdam, ChannelScore::Sigmoid, false),
            |m, c, x| m.forward(c, x),
        ),
    );
    for (name, mode) in [
        ("loss_elementwise", CharbonnierMode::Elementwise),
        ("loss_global_norm", CharbonnierMode::GlobalNorm),
    ] {
        push(name, loss_gradcheck(11, mode));
    }
    out
}

/// Each loss term and the multi-head total, differentiated w.r.t. the
/// predictions.
fn loss_gradcheck(seed: u64, mode: CharbonnierMode) -> Vec<GradReport> {
    let mut r = rng(seed);
    let target = rand_t([1, 3, 8, 8], &mut r).map(|v| 0.5 + 0.4 * v);
    let inputs = vec![
        (
            "full".to_string(),
            rand_t([1, 3, 8, 8], &mut r).map(|v| 0.5 + 0.4 * v),
        ),
        (
            "half".to_string(),
            rand_t([1, 3, 4, 4], &mut r).map(|v| 0.5 + 0.4 * v),
        ),
        (
            "quarter".to_string(),
            rand_t([1, 3, 2, 2], &mut r).map(|v| 0.5 + 0.4 * v),
        ),
    ];
    let w = LossWeights {
        charbonnier: mode,
        ..Default::default()
    };
    check_gradients(&inputs, GradCheckOptions::default(), |tape, v| {
        let t = tape.constant(target.clone());
        let c = objectives::charbonnier(&v[0], &t, w.eps, mode)?;
        let e = objectives::edge_loss(&v[0], &t, w.eps, mode)?;
        let f = objectives::freq_loss(&v[0], &t)?;
        let total = objectives::total_loss(v, &target, &w)?;
        c.add(&e.scale(3.0))?.add(&f.scale(0.7))?.add(&total)
    })
    .expect("loss gradcheck runs")
}

pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        base_channels: 4,
        blocks_per_stage: 1,
        ..Default::default()
    }
}

/// Gradient of the total loss of a tiny model w.r.t. every parameter tensor
/// (sampled elements), 64-bit, on a 16×16 image.
pub fn end_to_end_gradcheck(cfg: ModelConfig, seed: u64, per_tensor: usize) -> Vec<GradReport> {
    let mut model = Model::<f64>::build(cfg, seed).expect("tiny model builds");
    let mut r = rng(seed + 1);
    for (_, t) in model.params.iter_mut() {
        for v in t.data_mut() {
            *v += r.random_range(-0.1..0.1);
        }
    }
    let image = rand_t([1, 3, 16, 16], &mut r).map(|v| 0.5 + 0.5 * v);
    let target = rand_t([1, 3, 16, 16], &mut r).map(|v| 0.5 + 0.5 * v);
    let inputs: Vec<(String, Tensor<f64>)> = model
        .params
        .iter()
        .map(|(n, t)| (n.to_owned(), t.clone()))
        .collect();
    let w = LossWeights::default();
    check_gradients(
        &inputs,
        GradCheckOptions {
            max_elements: Some(per_tensor),
            ..Default::default()
        },
        |tape, vars| {
            let ctx = model.params.bind_vars(tape, vars.to_vec())?;
            let outs = model.forward(&ctx, &tape.constant(image.clone()))?;
            objectives::total_loss(&outs, &target, &w)
        },
    )
    .expect("end-to-end gradcheck runs")
}

/// Closed-form parameter count of the network, from the layer layout alone.
pub fn param_count_formula(cfg: &ModelConfig) -> usize {
    let conv = |cin: usize, cout: usize, k: usize| cout * cin * k * k + cout;
    let pw = |cin: usize, cout: usize| conv(cin, cout, 1);
    let dw = |c: usize, k: usize| c * k * k + c;
    let ln = |c: usize| 2 * c;
    let sca = |c: usize| ln(c) + pw(c, 2 * c) + dw(2 * c, 3) + 2 * pw(c, c);
    let msf =
        |c: usize| ln(c) + 2 * pw(c, 2 * c) + 2 * dw(2 * c, 3) + 2 * dw(2 * c, 5) + pw(2 * c, c);
    let mssf = |c: usize| sca(c) + msf(c);
    let up = |cin: usize, cout: usize, r: usize| pw(cin, cout * r * r);
    let n = cfg.blocks_per_stage;
    let ms = |c: usize| 3 * (n * sca(c) + msf(c)) + up(c, c, 2) + up(c, c, 4);
    let shallow = |c: usize| {
        conv(3, c, 3)
            + match cfg.shallow {
                ShallowVariant::Gated => pw(c, 2 * c),
                ShallowVariant::Single => 0,
            }
    };
    let sdam = |c: usize| conv(2, 1, 3) + dw(c, 5) + dw(c, 7) + pw(c, c) + dw(c, 3);
    let p = cfg.fdam.groups * cfg.fdam.k * cfg.fdam.k;
    let fdam = |c: usize| pw(c, p) + ln(p);
    let sfam = |c: usize| {
        let pair = sdam(c) + fdam(c);
        pair * if cfg.sfam_shared { 1 } else { 2 } + c
    };
    let [c1, c2, c3] = [
        cfg.base_channels,
        2 * cfg.base_channels,
        4 * cfg.base_channels,
    ];
    let encoder = conv(3, c1, 3)
        + ms(c1)
        + conv(c1, c2, 3)
        + shallow(c2)
        + pw(2 * c2, c2)
        + n * mssf(c2)
        + conv(c2, c3, 3)
        + shallow(c3)
        + pw(2 * c3, c3)
        + n * mssf(c3);
    let decoder = n * mssf(c3)
        + conv(c3, 3, 3)
        + up(c3, c2, 2)
        + pw(2 * c2, c2)
        + n * mssf(c2)
        + conv(c2, 3, 3)
        + up(c2, c1, 2)
        + pw(2 * c1, c1)
        + ms(c1)
        + conv(c1, 3, 3);
    let refine = if cfg.output_heads == 4 {
        mssf(c1) + conv(c1, 3, 3)
    } else {
        0
    };
    encoder + cfg.sfam_count * sfam(c3) + decoder + refine
}

pub const OVERFIT_SEED: u64 = 7;

pub fn overfit_pairs() -> Vec<Pair> {
    let spec = Degradation::Haze {
        transmission: 0.6,
        airlight: [0.8, 0.8, 0.85],
    };
    synthetic_pairs(4, 64, &spec, OVERFIT_SEED).expect("synthetic pairs")
}

pub fn overfit_config() -> (ModelConfig, TrainConfig) {
    (
        ModelConfig {
            base_channels: 16,
            blocks_per_stage: 2,
            ..Default::default()
        },
        TrainConfig {
            total_steps: 200,
            batch: 4,
            patch: 64,
            seed: OVERFIT_SEED,
            eval_every: 0,
            ..Default::default()
        },
    )
}

/// One desk-scale overfitting run from scratch.
pub fn overfit_run(pairs: &[Pair]) -> (Model<f32>, Vec<StepRecord>) {
    let (mcfg, tcfg) = overfit_config();
    let mut model = Model::build(mcfg, OVERFIT_SEED).expect("model builds");
    let log = train_loop(&mut model, pairs, pairs, &tcfg, |_| {}).expect("training runs");
    (model, log)
}

/// Worst error of one randomized oracle comparison over many instances.
pub struct OracleRun {
    pub instances: usize,
    pub worst: f64,
}

fn worst_of(instances: usize, mut one: impl FnMut(usize) -> f64) -> OracleRun {
    let worst = (0..instances).map(&mut one).fold(0.0, f64::max);
    OracleRun { instances, worst }
}

/// Relative error of `conv2d` against the nested-loop oracle over random
/// shapes, strides, groups and padding modes.
pub fn conv_oracle_suite(instances: usize, seed: u64) -> OracleRun {
    let mut r = rng(seed);
    worst_of(instances, |_| {
        let groups = [1, 2][r.random_range(0..2)];
        let cin = groups * r.random_range(1..=2);
        let cout = groups * r.random_range(1..=2);
        let k = [1, 3, 5][r.random_range(0..3)];
        let opts = ConvOptions {
            stride: r.random_range(1..=2),
            padding: r.random_range(0..=k / 2),
            padding_mode: [PaddingMode::Zeros, PaddingMode::Replicate][r.random_range(0..2)],
            groups,
        };
        let (h, w) = (r.random_range(k..=8), r.random_range(k..=8));
        let x = rand_t([r.random_range(1..=2), cin, h, w], &mut r);
        let wt = rand_t([cout, cin / groups, k, k], &mut r);
        let b = rand_t([1, cout, 1, 1], &mut r);
        let got = ecfnet_core::tensor::conv2d(&x, &wt, Some(&b), &opts).expect("conv runs");
        rel_err(conv_oracle(&x, &wt, Some(&b), &opts).data(), got.data())
    })
}

/// Max abs difference of `unfold` from patch enumeration.
pub fn unfold_oracle_suite(instances: usize, seed: u64) -> OracleRun {
    let mut r = rng(seed);
    worst_of(instances, |_| {
        let k = [1, 3, 5][r.random_range(0..3)];
        let shape = [
            r.random_range(1..=2),
            r.random_range(1..=3),
            r.random_range(1..=7),
            r.random_range(1..=7),
        ];
        let x = rand_t(shape, &mut r);
        let got = ecfnet_core::tensor::unfold(&x, k, PaddingMode::Replicate).expect("unfold");
        got.max_abs_diff(&unfold_oracle(&x, k)).expect("same shape")
    })
}

/// Max abs difference of `softmax` from the exp/sum definition, over random
/// axis sets and logit scales.
pub fn softmax_oracle_suite(instances: usize, seed: u64) -> OracleRun {
    let mut r = rng(seed);
    let sets = [AxisSet::CHANNEL, AxisSet::SPATIAL, AxisSet::ALL];
    worst_of(instances, |_| {
        let axes = sets[r.random_range(0..3)];
        let scale = [1.0, 5.0, 20.0][r.random_range(0..3)];
        let shape = [
            r.random_range(1..=2),
            r.random_range(1..=4),
            r.random_range(1..=4),
            r.random_range(1..=4),
        ];
        let x = rand_t(shape, &mut r).map(|v| v * scale);
        let got = ecfnet_core::tensor::softmax(&x, axes).expect("softmax");
        got.max_abs_diff(&softmax_oracle(&x, axes))
            .expect("same shape")
    })
}

/// Relative error of `fft2d` (real and imaginary parts together) against the
/// naive DFT on power-of-two planes.
pub fn fft_oracle_suite(instances: usize, seed: u64) -> OracleRun {
    let mut r = rng(seed);
    worst_of(instances, |_| {
        let shape = [
            r.random_range(1..=2),
            r.random_range(1..=2),
            1 << r.random_range(0..=4),
            1 << r.random_range(0..=4),
        ];
        let x = rand_t(shape, &mut r);
        let (re, im) = ecfnet_core::tensor::fft2d(&x).expect("fft");
        let (ore, oim) = dft_oracle(&x);
        let got: Vec<f64> = re.data().iter().chain(im.data()).copied().collect();
        let want: Vec<f64> = ore.data().iter().chain(oim.data()).copied().collect();
        rel_err(&want, &got)
    })
}

/// Max abs difference of FDAM's low-pass map from the patch-dot oracle, with
/// the module's own predicted filter bank.
pub fn lowpass_oracle_suite(instances: usize, seed: u64) -> OracleRun {
    let mut r = rng(seed);
    worst_of(instances, |i| {
        let groups = [1, 2, 4][r.random_range(0..3)];
        let k = [1, 3, 5][r.random_range(0..3)];
        let c = groups * r.random_range(1..=2);
        let cfg = FdamConfig { k, groups };
        let (mut params, fdam) = build_with(seed + i as u64, |b| Fdam::new(b, "f", c, cfg));
        params.randomize(seed + 1000 + i as u64, 2.0);
        let shape = [
            r.random_range(1..=2),
            c,
            r.random_range(1..=8),
            r.random_range(1..=8),
        ];
        let f = rand_t(shape, &mut r);
        let tape = Tape::inference();
        let ctx = params.bind(&tape, false);
        let fv = tape.constant(f.clone());
        let bank = fdam.filter_bank(&ctx, &fv).expect("bank");
        let (low, _) = fdam.decompose(&ctx, &fv).expect("decompose");
        low.value()
            .max_abs_diff(&lowpass_oracle(&f, bank.value()))
            .expect("same shape")
    })
}
