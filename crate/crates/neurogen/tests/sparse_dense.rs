//! A fully-connected sparse layer must match a dense layer with the same
//! weights bit for bit, forward and backward, because both accumulate in
//! the same order.

mod common;

use neurogen::layers::{Activation, DenseFcLayer, Layer, LayerGrads, SparseFcLayer, SparsePerceptron};
use neurogen::rng::Rng;

fn full_sparse_from_dense(dense: &DenseFcLayer) -> SparseFcLayer {
    let inputs = dense.inputs;
    let perceptrons = dense
        .biases()
        .iter()
        .enumerate()
        .map(|(p, &bias)| SparsePerceptron {
            indices: (0..inputs as u32).collect(),
            weights: dense.weights()[p * inputs..(p + 1) * inputs].to_vec(),
            bias,
        })
        .collect();
    SparseFcLayer::from_perceptrons(inputs, dense.activation, perceptrons, None)
}

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn full_connectivity_matches_dense_bitwise_on_100_cases() {
    let mut rng = Rng::new(88);
    for case in 0..100 {
        let inputs = 1 + rng.below(40);
        let perceptrons = 1 + rng.below(10);
        let activation = if rng.below(2) == 0 {
            Activation::Tanh
        } else {
            Activation::Linear
        };
        let mut dense = DenseFcLayer::new(perceptrons, inputs, activation, &mut rng);
        for b in dense.biases_mut().iter_mut() {
            *b = rng.uniform(0.5);
        }
        let sparse = full_sparse_from_dense(&dense);

        let input: Vec<f32> = (0..inputs).map(|_| rng.uniform(1.0)).collect();
        let dense_layer = Layer::Dense(dense);
        let sparse_layer = Layer::Sparse(sparse);

        let dense_out = dense_layer.forward(&input);
        let sparse_out = sparse_layer.forward(&input);
        assert_eq!(bits(&dense_out), bits(&sparse_out), "case {case} forward");

        let upstream: Vec<f32> = (0..perceptrons).map(|_| rng.uniform(1.0)).collect();
        let mut dense_grads = LayerGrads::default();
        let mut sparse_grads = LayerGrads::default();
        dense_layer.backward_into(&input, &dense_out, &upstream, &mut dense_grads, true);
        sparse_layer.backward_into(&input, &sparse_out, &upstream, &mut sparse_grads, true);

        assert_eq!(
            bits(&dense_grads.weight_grads),
            bits(&sparse_grads.weight_grads),
            "case {case} weight grads"
        );
        assert_eq!(
            bits(&dense_grads.bias_grads),
            bits(&sparse_grads.bias_grads),
            "case {case} bias grads"
        );
        assert_eq!(
            bits(&dense_grads.input_grad),
            bits(&sparse_grads.input_grad),
            "case {case} input grads"
        );
    }
}
