use std::path::Path;
use std::process::{Command, Output};

use ecfnet_core::train::{load_ppm, rng_stream, save_ppm, synthetic_image};
use ecfnet_core::{Model, ModelConfig, Tensor};
use tempfile::TempDir;

fn ecfnet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecfnet"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn tiny_config() -> ModelConfig {
    ModelConfig {
        base_channels: 4,
        blocks_per_stage: 1,
        ..ModelConfig::default()
    }
}

fn image(h: usize, w: usize, seed: u64) -> Tensor<f32> {
    synthetic_image(h, w, &mut rng_stream(seed, 0))
}

const RUN: &str = r#"{
  "model": {"base_channels": 4, "blocks_per_stage": 1},
  "train": {"total_steps": 3, "batch": 2, "patch": 32, "eval_every": 3, "seed": 5},
  "data": {"source": "synthetic", "count": 2, "size": 32, "seed": 1,
           "degradation": {"kind": "blur", "sigma": 1.2, "kernel": 7}},
  "out_dir": "out"
}"#;

#[test]
fn help_lists_exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = ecfnet(dir.path(), &["--help"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("Exit codes:"), "{text}");
    assert!(text.contains("6  corrupt checkpoint"), "{text}");
}

#[test]
fn unknown_flags_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    let out = ecfnet(dir.path(), &["infer", "--model", "m", "--frobnicate"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn failure_kinds_have_distinct_exit_codes() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    save_ppm(&image(20, 20, 1), &d.join("img.ppm")).unwrap();
    std::fs::write(d.join("junk.ecfn"), b"not a checkpoint").unwrap();
    std::fs::write(
        d.join("bad.json"),
        r#"{"out_dir": "o", "data": {"source": "pairs", "train": "t"}, "typo": 1}"#,
    )
    .unwrap();

    let missing = ecfnet(
        d,
        &[
            "infer",
            "--model",
            "none.ecfn",
            "--input",
            "img.ppm",
            "--output",
            "o.ppm",
        ],
    );
    let corrupt = ecfnet(
        d,
        &[
            "infer",
            "--model",
            "junk.ecfn",
            "--input",
            "img.ppm",
            "--output",
            "o.ppm",
        ],
    );
    let config = ecfnet(d, &["train", "--config", "bad.json"]);
    let params = ecfnet(
        d,
        &[
            "degrade",
            "--kind",
            "haze",
            "--params",
            r#"{"transmission": 2}"#,
            "--input",
            "img.ppm",
            "--output",
            "o.ppm",
        ],
    );

    let codes = [code(&missing), code(&corrupt), code(&config), code(&params)];
    assert_eq!(codes, [3, 6, 4, 4], "{}", stderr(&params));
    for out in [&missing, &corrupt, &config, &params] {
        let err = stderr(out);
        assert!(err.starts_with("error["), "{err}");
        assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    }
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ecfnet"))
        .current_dir(dir.path())
        .env("ECFNET_THREADS", "zero")
        .args(["inspect", "--model", "m.ecfn"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 4);
}

#[test]
fn zero_head_model_reproduces_odd_sized_input() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let mut model = Model::<f32>::build(tiny_config(), 3).unwrap();
    model.zero_heads();
    model.save(&d.join("m.ecfn")).unwrap();
    save_ppm(&image(21, 37, 2), &d.join("in.ppm")).unwrap();

    let out = ecfnet(
        d,
        &[
            "infer", "--model", "m.ecfn", "--input", "in.ppm", "--output", "out.ppm",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(
        std::fs::read(d.join("in.ppm")).unwrap(),
        std::fs::read(d.join("out.ppm")).unwrap()
    );
}

#[test]
fn eval_of_identical_pairs_is_perfect() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    for sub in ["input", "target"] {
        std::fs::create_dir_all(d.join("pairs").join(sub)).unwrap();
        save_ppm(&image(24, 24, 4), &d.join("pairs").join(sub).join("x.ppm")).unwrap();
    }
    let out = ecfnet(d, &["eval", "--pairs", "pairs"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("x,inf,1,0\n"), "{text}");
    assert_eq!(
        std::fs::read_to_string(d.join("pairs/metrics.csv")).unwrap(),
        text
    );
}

#[test]
fn degrade_is_deterministic_in_seed() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    save_ppm(&image(32, 32, 6), &d.join("c.ppm")).unwrap();
    let run = |seed: &str, name: &str| {
        let out = ecfnet(
            d,
            &[
                "degrade", "--kind", "snow", "--input", "c.ppm", "--output", name, "--seed", seed,
            ],
        );
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        std::fs::read(d.join(name)).unwrap()
    };
    assert_eq!(run("1", "a.ppm"), run("1", "b.ppm"));
    assert_ne!(run("1", "a.ppm"), run("2", "c2.ppm"));
    assert_eq!(
        load_ppm(&d.join("a.ppm")).unwrap().shape(),
        [1, 3, 32, 32].into()
    );
}

#[test]
fn training_is_reproducible_and_inspectable() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.json"), RUN).unwrap();
    let mut logs = Vec::new();
    for _ in 0..2 {
        let out = ecfnet(d, &["train", "--config", "run.json"]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        assert!(stdout(&out).starts_with("steps=3 "), "{}", stdout(&out));
        logs.push((
            std::fs::read(d.join("out/loss.csv")).unwrap(),
            std::fs::read(d.join("out/model.ecfn")).unwrap(),
        ));
    }
    assert_eq!(logs[0], logs[1]);
    for f in ["samples_initial.ppm", "samples_final.ppm", "run.json"] {
        assert!(d.join("out").join(f).is_file(), "{f}");
    }

    let out = ecfnet(d, &["inspect", "--model", "out/model.ecfn", "--size", "32"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let total = Model::<f32>::build(tiny_config(), 0).unwrap().param_count();
    assert!(text.contains(&format!("total_params\t{total}\n")), "{text}");
}
