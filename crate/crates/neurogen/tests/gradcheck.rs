//! Finite-difference gradient checks for every layer kind.
//!
//! The oracle is an independent f64 re-implementation of each forward
//! pass (tests/common). The probe loss is dot(upstream, output) with a
//! fixed random upstream, so its gradient with respect to any parameter
//! can be measured by central differences and compared against the
//! layer's own backward pass at 1e-4 relative error.

mod common;

use common::{assert_grad_close, central_difference, probe_loss, ConvRef, DenseRef, SparseRef};
use neurogen::layers::{Activation, ConvLayer, DenseFcLayer, LayerGrads, SparseFcLayer};
use neurogen::rng::Rng;

fn random_vec(rng: &mut Rng, n: usize, r: f32) -> Vec<f32> {
    (0..n).map(|_| rng.uniform(r)).collect()
}

fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

const H: f64 = 1e-6;

fn check_conv(layer: &ConvLayer, rng: &mut Rng, label: &str) {
    let input = random_vec(rng, layer.in_len(), 1.0);
    let output = {
        let mut out = Vec::new();
        layer.forward_into(&input, &mut out);
        out
    };
    let upstream = random_vec(rng, layer.out_len(), 1.0);
    let mut grads = LayerGrads::default();
    layer.backward_into(&input, &output, &upstream, &mut grads, true);

    let reference = ConvRef::from_layer(layer);
    let input64 = to_f64(&input);
    let upstream64 = to_f64(&upstream);

    // weights
    for i in 0..reference.weights.len() {
        let fd = central_difference(
            |ws| {
                let mut r = ConvRef::from_layer(layer);
                r.weights = ws.to_vec();
                probe_loss(&r.forward(&input64), &upstream64)
            },
            &reference.weights,
            i,
            H,
        );
        assert_grad_close(grads.weight_grads[i], fd, &format!("{label} weight {i}"));
    }
    // biases
    for i in 0..reference.biases.len() {
        let fd = central_difference(
            |bs| {
                let mut r = ConvRef::from_layer(layer);
                r.biases = bs.to_vec();
                probe_loss(&r.forward(&input64), &upstream64)
            },
            &reference.biases,
            i,
            H,
        );
        assert_grad_close(grads.bias_grads[i], fd, &format!("{label} bias {i}"));
    }
    // inputs
    for i in 0..input64.len() {
        let fd = central_difference(
            |xs| probe_loss(&reference.forward(xs), &upstream64),
            &input64,
            i,
            H,
        );
        assert_grad_close(grads.input_grad[i], fd, &format!("{label} input {i}"));
    }
}

#[test]
fn conv_small_random_instance_matches_finite_differences() {
    let mut rng = Rng::new(21);
    // 5x5 input, 3x3 kernel, the canonical small case
    let layer = ConvLayer::new(2, 3, 1, 1, 0, 0, 5, 5, &mut rng);
    check_conv(&layer, &mut rng, "conv 5x5 k3");
}

#[test]
fn conv_with_depth_stride_and_padding_matches_finite_differences() {
    let mut rng = Rng::new(22);
    let layer = ConvLayer::new(3, 3, 2, 2, 1, 2, 5, 5, &mut rng);
    check_conv(&layer, &mut rng, "conv 5x5x2 k3 s2 pad(1,2)");
}

#[test]
fn dense_matches_finite_differences() {
    let mut rng = Rng::new(23);
    for activation in [Activation::Tanh, Activation::Linear] {
        let layer = DenseFcLayer::new(3, 5, activation, &mut rng);
        let input = random_vec(&mut rng, 5, 1.0);
        let output = {
            let mut out = Vec::new();
            layer.forward_into(&input, &mut out);
            out
        };
        let upstream = random_vec(&mut rng, 3, 1.0);
        let mut grads = LayerGrads::default();
        layer.backward_into(&input, &output, &upstream, &mut grads, true);

        let reference = DenseRef::from_layer(&layer);
        let input64 = to_f64(&input);
        let upstream64 = to_f64(&upstream);
        for i in 0..reference.weights.len() {
            let fd = central_difference(
                |ws| {
                    let mut r = DenseRef::from_layer(&layer);
                    r.weights = ws.to_vec();
                    probe_loss(&r.forward(&input64), &upstream64)
                },
                &reference.weights,
                i,
                H,
            );
            assert_grad_close(grads.weight_grads[i], fd, "dense weight");
        }
        for i in 0..reference.biases.len() {
            let fd = central_difference(
                |bs| {
                    let mut r = DenseRef::from_layer(&layer);
                    r.biases = bs.to_vec();
                    probe_loss(&r.forward(&input64), &upstream64)
                },
                &reference.biases,
                i,
                H,
            );
            assert_grad_close(grads.bias_grads[i], fd, "dense bias");
        }
        for i in 0..input64.len() {
            let fd = central_difference(
                |xs| probe_loss(&reference.forward(xs), &upstream64),
                &input64,
                i,
                H,
            );
            assert_grad_close(grads.input_grad[i], fd, "dense input");
        }
    }
}

// The four-input, two-perceptron toy case.
#[test]
fn sparse_matches_finite_differences() {
    let mut rng = Rng::new(24);
    let layer = SparseFcLayer::from_connections(
        4,
        Activation::Tanh,
        &[vec![0, 2], vec![1, 2, 3]],
        &mut rng,
    );
    let input = random_vec(&mut rng, 4, 1.0);
    let output = {
        let mut out = Vec::new();
        layer.forward_into(&input, &mut out);
        out
    };
    let upstream = random_vec(&mut rng, 2, 1.0);
    let mut grads = LayerGrads::default();
    layer.backward_into(&input, &output, &upstream, &mut grads, true);

    let reference = SparseRef::from_layer(&layer);
    let input64 = to_f64(&input);
    let upstream64 = to_f64(&upstream);

    let flat: Vec<f64> = reference
        .perceptrons
        .iter()
        .flat_map(|(_, ws, _)| ws.clone())
        .collect();
    for i in 0..flat.len() {
        let fd = central_difference(
            |ws| {
                let mut r = SparseRef::from_layer(&layer);
                let mut k = 0;
                for p in r.perceptrons.iter_mut() {
                    for w in p.1.iter_mut() {
                        *w = ws[k];
                        k += 1;
                    }
                }
                probe_loss(&r.forward(&input64), &upstream64)
            },
            &flat,
            i,
            H,
        );
        assert_grad_close(grads.weight_grads[i], fd, "sparse weight");
    }
    let biases: Vec<f64> = reference.perceptrons.iter().map(|p| p.2).collect();
    for i in 0..biases.len() {
        let fd = central_difference(
            |bs| {
                let mut r = SparseRef::from_layer(&layer);
                for (p, &b) in r.perceptrons.iter_mut().zip(bs) {
                    p.2 = b;
                }
                probe_loss(&r.forward(&input64), &upstream64)
            },
            &biases,
            i,
            H,
        );
        assert_grad_close(grads.bias_grads[i], fd, "sparse bias");
    }
    for i in 0..input64.len() {
        let fd = central_difference(
            |xs| probe_loss(&reference.forward(xs), &upstream64),
            &input64,
            i,
            H,
        );
        assert_grad_close(grads.input_grad[i], fd, "sparse input");
    }
}

// Gradient of softmax cross-entropy at the logits is softmax(z) - onehot.
#[test]
fn classifier_loss_gradient_matches_finite_differences() {
    let logits64 = [0.3f64, -1.2, 0.8, 0.05];
    let label = 2usize;
    let loss = |z: &[f64]| -> f64 {
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().map(|&v| (v - max).exp()).sum();
        -(((logits_at(z, label) - max).exp() / sum).ln())
    };
    fn logits_at(z: &[f64], i: usize) -> f64 {
        z[i]
    }
    let max = logits64.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits64.iter().map(|&v| (v - max).exp()).sum();
    for i in 0..logits64.len() {
        let p = ((logits64[i] - max).exp()) / sum;
        let analytic = p - if i == label { 1.0 } else { 0.0 };
        let fd = central_difference(|z| loss(z), &logits64, i, H);
        assert!(
            (analytic - fd).abs() < 1e-6,
            "logit {i}: {analytic} vs {fd}"
        );
    }
}
