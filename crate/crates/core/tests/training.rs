mod common;

use common::*;
use ecfnet_core::train::{
    input_psnr, load_ppm, log_csv, mean_psnr, save_ppm, synthetic_pairs, train_loop, Degradation,
    TrainConfig,
};
use ecfnet_core::{Checkpoint, Model};

fn short_run(seed: u64) -> (String, Vec<u8>) {
    let spec = Degradation::Blur {
        sigma: 1.2,
        kernel: 7,
    };
    let pairs = synthetic_pairs(3, 32, &spec, seed).unwrap();
    let mut model = Model::<f32>::build(tiny_config(), seed).unwrap();
    let cfg = TrainConfig {
        total_steps: 6,
        batch: 2,
        patch: 16,
        seed,
        eval_every: 3,
        ..Default::default()
    };
    let log = train_loop(&mut model, &pairs, &pairs[..1], &cfg, |_| {}).unwrap();
    assert_eq!(log.len(), 6);
    assert!(log.iter().all(|r| r.loss.is_finite()));
    assert_eq!(log.iter().filter(|r| r.psnr.is_some()).count(), 2);
    (log_csv(&log), Checkpoint::of(&model).encode())
}

#[test]
fn training_is_reproducible() {
    let a = short_run(11);
    assert_eq!(a, short_run(11));
    assert_ne!(a.1, short_run(12).1);
}

#[test]
fn zero_steps_leave_the_model_alone() {
    let pairs = overfit_pairs();
    let mut model = Model::<f32>::build(tiny_config(), 0).unwrap();
    let before = Checkpoint::of(&model).encode();
    let cfg = TrainConfig {
        total_steps: 0,
        ..Default::default()
    };
    assert!(train_loop(&mut model, &pairs, &pairs, &cfg, |_| {})
        .unwrap()
        .is_empty());
    assert_eq!(Checkpoint::of(&model).encode(), before);
}

#[test]
fn a_few_steps_improve_on_the_untrained_model() {
    let pairs = overfit_pairs();
    let (mcfg, mut tcfg) = overfit_config();
    tcfg.total_steps = 15;
    let mut model = Model::build(mcfg, OVERFIT_SEED).unwrap();
    let before = mean_psnr(&model, &pairs).unwrap();
    let log = train_loop(&mut model, &pairs, &pairs, &tcfg, |_| {}).unwrap();
    assert!(log.last().unwrap().loss < log[0].loss);
    assert!(mean_psnr(&model, &pairs).unwrap() > before);
    assert!(input_psnr(&pairs).unwrap() > 10.0);
}

#[test]
fn ppm_files_round_trip_quantized_images() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.ppm");
    let img = &overfit_pairs()[0].input;
    save_ppm(img, &path).unwrap();
    let back = load_ppm(&path).unwrap();
    assert_eq!(back.shape(), img.shape());
    assert!(back.max_abs_diff(img).unwrap() <= 0.5 / 255.0 + 1e-6);
    save_ppm(&back, &path).unwrap();
    assert_eq!(load_ppm(&path).unwrap(), back);
}
