mod common;

use common::*;

#[test]
fn conv2d_matches_nested_loops() {
    let run = conv_oracle_suite(25, 1);
    assert!(run.worst < 1e-12, "{:.3e}", run.worst);
}

#[test]
fn unfold_matches_patch_enumeration() {
    assert_eq!(unfold_oracle_suite(25, 2).worst, 0.0);
}

#[test]
fn softmax_matches_definition() {
    let run = softmax_oracle_suite(25, 3);
    assert!(run.worst < 1e-14, "{:.3e}", run.worst);
}

#[test]
fn fft2d_matches_naive_dft() {
    let run = fft_oracle_suite(25, 4);
    assert!(run.worst < 1e-12, "{:.3e}", run.worst);
}

#[test]
fn fdam_lowpass_matches_patch_dot() {
    let run = lowpass_oracle_suite(25, 5);
    assert!(run.worst < 1e-12, "{:.3e}", run.worst);
}

#[test]
fn every_block_and_loss_passes_gradcheck() {
    for (name, err, at) in gradient_suite() {
        assert!(err < 1e-4, "{name} ({at}): {err:.3e}");
    }
}
