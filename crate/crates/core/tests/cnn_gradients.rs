//! Finite-difference checks of the analytic CNN gradients.

mod support;

use hearsay_core::cnn::{CnnConfig, Network, Parameters};
use ndarray::Array4;
use support::{max_gradient_error as max_relative_error, small_config};

#[test]
fn gradients_match_finite_differences() {
    let err = max_relative_error(&small_config(0.0), 0.0);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn gradients_include_weight_decay() {
    let err = max_relative_error(&small_config(0.0), 0.05);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn gradients_match_with_dropout_masks() {
    let err = max_relative_error(&small_config(0.5), 0.001);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn reference_architecture_shapes() {
    let shapes = CnnConfig::reference(50).shapes().unwrap();
    assert_eq!(shapes.conv1, [80, 4, 96]);
    assert_eq!(shapes.pool1, [80, 1, 32]);
    assert_eq!(shapes.conv2, [80, 1, 30]);
    assert_eq!(shapes.pool2, [80, 1, 10]);
    assert_eq!(shapes.flatten, 800);

    let cfg = CnnConfig::reference(50).with_fc_width(64);
    let net = Network::new(&cfg).unwrap();
    let params = Parameters::<f32>::he_uniform(&cfg, 0).unwrap();
    let batch = Array4::<f32>::zeros((2, 60, 101, 2));
    let probs = net.infer(&params, batch.view()).unwrap();
    assert_eq!(probs.dim(), (2, 50));
}
