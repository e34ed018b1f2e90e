use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use ecfnet_core::objectives::{mae, psnr, ssim, SsimOptions};
use ecfnet_core::train::trainer::format_metric;
use ecfnet_core::train::{
    degrade, load_ppm, mean_psnr, rng_stream, save_ppm, synthetic_pairs, train_loop, write_log_csv,
    Degradation, Pair,
};
use ecfnet_core::{Model, Tensor};
use serde_json::{json, Value};

use crate::config::{DataSpec, RunConfig};
use crate::failure::{fail, Kind};
use crate::images::{grid, load_pair_dir, restore};

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn training_data(data: &DataSpec) -> Result<(Vec<Pair>, Vec<Pair>)> {
    match data {
        DataSpec::Synthetic {
            count,
            size,
            degradation,
            seed,
            heldout,
        } => {
            let mut all = synthetic_pairs(count + heldout, *size, degradation, *seed)?;
            let held = all.split_off(*count);
            Ok((all, held))
        }
        DataSpec::Pairs { train, heldout } => {
            let strip = |v: Vec<(String, Pair)>| v.into_iter().map(|(_, p)| p).collect();
            let held = match heldout {
                Some(dir) => strip(load_pair_dir(dir)?),
                None => Vec::new(),
            };
            Ok((strip(load_pair_dir(train)?), held))
        }
    }
}

fn sample_grid(model: &Model<f32>, pairs: &[Pair]) -> Result<Tensor<f32>> {
    let rows = pairs
        .iter()
        .take(4)
        .map(|p| {
            let first = |t: &Tensor<f32>| t.sample(0);
            Ok([
                first(&p.input)?,
                restore(model, &first(&p.input)?)?,
                first(&p.target)?,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    grid(&rows)
}

pub fn train(config: &Path, seed: Option<u64>, steps: Option<usize>) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    if let Some(s) = steps {
        cfg.train.total_steps = s;
    }
    let (train, mut heldout) = training_data(&cfg.data)?;
    if heldout.is_empty() {
        heldout = train.clone();
    }
    create_dir(&cfg.out_dir)?;
    let out = |name: &str| cfg.out_dir.join(name);
    let echo = serde_json::to_string_pretty(&cfg).context("serializing run config")?;
    std::fs::write(out("run.json"), echo + "\n").context("writing run.json")?;

    let mut model = Model::<f32>::build(cfg.model.clone(), cfg.train.seed)?;
    save_ppm(&sample_grid(&model, &heldout)?, &out("samples_initial.ppm"))?;
    let log = train_loop(&mut model, &train, &heldout, &cfg.train, |r| {
        if let Some(p) = r.psnr {
            eprintln!(
                "step {} lr {:.3e} loss {:.5} psnr {}",
                r.step,
                r.lr,
                r.loss,
                format_metric(p)
            );
        }
    })?;
    write_log_csv(&log, &out("loss.csv"))?;
    model.save(&out("model.ecfn"))?;
    save_ppm(&sample_grid(&model, &heldout)?, &out("samples_final.ppm"))?;

    let final_loss = log.last().map_or(f64::NAN, |r| r.loss);
    println!(
        "steps={} final_loss={} heldout_psnr={} out_dir={}",
        log.len(),
        final_loss,
        format_metric(mean_psnr(&model, &heldout)?),
        cfg.out_dir.display()
    );
    Ok(())
}

pub fn infer(model: &Path, input: &Path, output: &Path) -> Result<()> {
    let model = Model::load(model)?;
    let image = load_ppm(input)?;
    save_ppm(&restore(&model, &image)?, output)?;
    Ok(())
}

/// Per-pair PSNR, SSIM and MAE of the restored (or, without a model, the
/// degraded) inputs against their targets.
pub fn eval(model: Option<&Path>, pairs: &Path, csv: Option<&Path>) -> Result<()> {
    let model = model.map(Model::load).transpose()?;
    let pairs = load_pair_dir(pairs)?;
    let mut rows = Vec::with_capacity(pairs.len());
    for (name, pair) in &pairs {
        let pred = match &model {
            Some(m) => restore(m, &pair.input)?,
            None => pair.input.clone(),
        };
        rows.push((
            name.clone(),
            psnr(&pred, &pair.target, 1.0)?,
            ssim(&pred, &pair.target, SsimOptions::default())?,
            mae(&pred, &pair.target)?,
        ));
    }
    let n = rows.len() as f64;
    let mean = (
        "mean".to_owned(),
        rows.iter().map(|r| r.1).sum::<f64>() / n,
        rows.iter().map(|r| r.2).sum::<f64>() / n,
        rows.iter().map(|r| r.3).sum::<f64>() / n,
    );
    let mut text = String::from("name,psnr,ssim,mae\n");
    for (name, p, s, m) in rows.iter().chain([&mean]) {
        let _ = writeln!(text, "{name},{},{s},{m}", format_metric(*p));
    }
    print!("{text}");
    if let Some(path) = csv {
        std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn defaults(kind: &str) -> Result<Value> {
    Ok(match kind {
        "haze" => json!({"transmission": 0.6, "airlight": [0.8, 0.8, 0.85]}),
        "blur" => json!({"sigma": 1.5, "kernel": 9}),
        "snow" => json!({"flakes": 200, "radius": [0.5, 2.0], "brightness": 0.9}),
        other => {
            return Err(fail(
                Kind::Config,
                format!("unknown degradation kind `{other}`"),
            ))
        }
    })
}

/// Per-kind defaults overridden by the keys of `params` (a JSON object).
pub fn degradation(kind: &str, params: &str) -> Result<Degradation> {
    let Value::Object(mut spec) = defaults(kind)? else {
        unreachable!("defaults are objects");
    };
    let overrides: Value = serde_json::from_str(params).context("parsing --params")?;
    let Value::Object(overrides) = overrides else {
        return Err(fail(Kind::Config, "--params must be a JSON object"));
    };
    spec.extend(overrides);
    spec.insert("kind".into(), Value::from(kind));
    let d: Degradation =
        serde_json::from_value(Value::Object(spec)).context("degradation parameters")?;
    d.validate()?;
    Ok(d)
}

pub fn degrade_image(spec: &Degradation, input: &Path, output: &Path, seed: u64) -> Result<()> {
    let clean = load_ppm(input)?;
    let out = degrade(&clean, spec, &mut rng_stream(seed, 0))?;
    save_ppm(&out, output)?;
    Ok(())
}

pub fn inspect(model: &Path, size: usize) -> Result<()> {
    let model = Model::load(model)?;
    let mut text = String::new();
    for (name, t) in model.params.iter() {
        let _ = writeln!(text, "{name}\t{}\t{}", t.shape(), t.numel());
    }
    let macs = model.conv_macs(size, size)?;
    let _ = writeln!(text, "total_params\t{}", model.param_count());
    let _ = writeln!(text, "conv_macs@{size}x{size}\t{macs}");
    let _ = writeln!(text, "flops@{size}x{size}\t{}", 2 * macs);
    print!("{text}");
    Ok(())
}
