use std::path::Path;

use anyhow::{Context, Result};
use ecfnet_core::model::SIZE_MULTIPLE;
use ecfnet_core::tensor::bilinear_resize;
use ecfnet_core::train::data::crop;
use ecfnet_core::train::{load_ppm, Pair};
use ecfnet_core::{Model, Tensor};

use crate::failure::{fail, Kind};

/// `(name, pair)` for every `input/NAME.ppm` with a matching `target/NAME.ppm`,
/// sorted by name.
pub fn load_pair_dir(dir: &Path) -> Result<Vec<(String, Pair)>> {
    let inputs = dir.join("input");
    let targets = dir.join("target");
    for d in [&inputs, &targets] {
        if !d.is_dir() {
            return Err(fail(
                Kind::MissingFile,
                format!("{} is not a directory", d.display()),
            ));
        }
    }
    let mut names: Vec<String> = std::fs::read_dir(&inputs)
        .with_context(|| format!("listing {}", inputs.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".ppm"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(fail(
            Kind::MissingFile,
            format!("no .ppm files in {}", inputs.display()),
        ));
    }
    names
        .into_iter()
        .map(|name| {
            let input = load_ppm(&inputs.join(&name))?;
            let target = load_ppm(&targets.join(&name))?;
            let pair = Pair::new(input, target).with_context(|| format!("pair {name}"))?;
            Ok((name.trim_end_matches(".ppm").to_owned(), pair))
        })
        .collect()
}

/// Replicates the last row and column up to the next multiple of `m`.
pub fn pad_to_multiple(t: &Tensor<f32>, m: usize) -> Tensor<f32> {
    let [n, c, h, w] = t.shape().0;
    let (ph, pw) = (h.div_ceil(m) * m, w.div_ceil(m) * m);
    if (ph, pw) == (h, w) {
        return t.clone();
    }
    Tensor::from_fn([n, c, ph, pw], |[b, ch, y, x]| {
        t.at([b, ch, y.min(h - 1), x.min(w - 1)])
    })
}

/// Full-resolution restoration of an image of any size, clamped to `[0, 1]`.
pub fn restore(model: &Model<f32>, image: &Tensor<f32>) -> Result<Tensor<f32>> {
    let s = image.shape();
    if s.h() == 0 || s.w() == 0 {
        return Err(fail(Kind::Shape, "empty image"));
    }
    let padded = pad_to_multiple(image, SIZE_MULTIPLE);
    let out = model.infer(&padded)?.swap_remove(0);
    let out = if out.shape() == s {
        out
    } else {
        crop(&out, 0, 0, s.h(), s.w())?
    };
    Ok(out.map(|v| v.clamp(0.0, 1.0)))
}

/// Rows of `[input | restored | target]`, every tile resized to the first
/// input's size.
pub fn grid(rows: &[[Tensor<f32>; 3]]) -> Result<Tensor<f32>> {
    let Some(first) = rows.first() else {
        return Err(fail(Kind::Internal, "empty sample grid"));
    };
    let [_, _, h, w] = first[0].shape().0;
    let tiles: Vec<Vec<Tensor<f32>>> = rows
        .iter()
        .map(|row| {
            row.iter()
                .map(|t| {
                    if t.shape().h() == h && t.shape().w() == w {
                        Ok(t.clone())
                    } else {
                        bilinear_resize(t, h, w)
                    }
                })
                .collect::<ecfnet_core::Result<_>>()
        })
        .collect::<ecfnet_core::Result<_>>()?;
    Ok(Tensor::from_fn(
        [1, 3, h * rows.len(), w * 3],
        |[_, c, y, x]| tiles[y / h][x / w].at([0, c, y % h, x % w]),
    ))
}
