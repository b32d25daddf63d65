//! Networks: ordered layer stacks, the named architectures, weight and
//! connection accounting, and model persistence.

pub mod io;

use serde::Serialize;

use crate::layers::{Activation, ConvLayer, DenseFcLayer, Layer, SparseFcLayer};
use crate::rng::Rng;

pub const INPUT_ROWS: usize = 28;
pub const INPUT_COLS: usize = 28;
pub const CLASS_COUNT: usize = 10;

/// Source-layer width of the two-convolution stack: 3x3 positions of 50
/// filters, channel-last, so index = position * 50 + filter.
pub const SOURCE_SIZE: usize = 450;

#[derive(Debug, Clone)]
pub struct Network {
    pub name: String,
    pub layers: Vec<Layer>,
}

impl Network {
    pub fn new(name: impl Into<String>, layers: Vec<Layer>) -> Self {
        let net = Network {
            name: name.into(),
            layers,
        };
        for pair in net.layers.windows(2) {
            assert_eq!(
                pair[0].out_len(),
                pair[1].in_len(),
                "adjacent layer shapes incompatible in {}",
                net.name
            );
        }
        net
    }

    pub fn input_len(&self) -> usize {
        self.layers.first().map_or(0, Layer::in_len)
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().map_or(0, Layer::out_len)
    }

    /// Forward through the first `upto` layers, returning that prefix's
    /// output. `upto = layers.len()` runs the whole stack.
    pub fn forward_upto(&self, input: &[f32], upto: usize) -> Vec<f32> {
        let mut current = input.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers[..upto] {
            layer.forward_into(&current, &mut next);
            std::mem::swap(&mut current, &mut next);
        }
        current
    }

    pub fn forward(&self, input: &[f32]) -> Vec<f32> {
        self.forward_upto(input, self.layers.len())
    }

    /// Argmax class of the final outputs.
    pub fn classify(&self, input: &[f32]) -> u8 {
        let out = self.forward(input);
        argmax(&out) as u8
    }

    pub fn size_report(&self) -> SizeReport {
        let layers: Vec<LayerCount> = self
            .layers
            .iter()
            .map(|layer| LayerCount {
                kind: layer.label().to_string(),
                perceptrons: layer.perceptron_count(),
                weights: layer.weight_count(),
                connections: layer.connection_count(),
            })
            .collect();
        SizeReport {
            network: self.name.clone(),
            total_perceptrons: layers.iter().map(|l| l.perceptrons).sum(),
            total_weights: layers.iter().map(|l| l.weights).sum(),
            total_connections: layers.iter().map(|l| l.connections).sum(),
            layers,
        }
    }

    pub fn total_weights(&self) -> usize {
        self.layers.iter().map(Layer::weight_count).sum()
    }

    /// Remove and return the final (classifier) layer.
    pub fn pop_classifier(&mut self) -> Layer {
        self.layers.pop().expect("network has no layers")
    }
}

pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Per-layer and total weight/connection accounting.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SizeReport {
    pub network: String,
    pub layers: Vec<LayerCount>,
    pub total_perceptrons: usize,
    pub total_weights: usize,
    pub total_connections: usize,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LayerCount {
    pub kind: String,
    pub perceptrons: usize,
    pub weights: usize,
    pub connections: usize,
}

/// The published connection formula for convolution layers, kept for
/// reference output. It does not reproduce the geometric counts used by
/// [`SizeReport`] and may be non-integral.
pub fn window_formula_connections(
    kernel_rows: usize,
    kernel_cols: usize,
    input_window_row: usize,
    stride: usize,
) -> f64 {
    let windows = (input_window_row as f64 - kernel_rows as f64 - stride as f64) / stride as f64;
    (kernel_rows * kernel_cols + 1) as f64 * windows * windows
}

fn conv_stack(rng: &mut Rng) -> (ConvLayer, ConvLayer) {
    // 28x28 padded to 30x30, 7x7 stride 2 -> 12x12 maps
    let conv1 = ConvLayer::new(6, 7, 1, 2, 1, 1, INPUT_ROWS, INPUT_COLS, rng);
    // 12x12x6 padded to 15x15x6, 7x7x6 stride 4 -> 3x3 maps
    let conv2 = ConvLayer::new(50, 7, 6, 4, 1, 2, 12, 12, rng);
    (conv1, conv2)
}

/// Four-layer dense reference network: two convolutions, a 100-perceptron
/// fully-connected layer, and a 10-way classifier. 61,160 weights.
pub fn build_baseline(rng: &mut Rng) -> Network {
    let (conv1, conv2) = conv_stack(rng);
    let full = DenseFcLayer::new(100, SOURCE_SIZE, Activation::Tanh, rng);
    let classifier = DenseFcLayer::new(CLASS_COUNT, 100, Activation::Linear, rng);
    Network::new(
        "baseline",
        vec![
            Layer::Conv(conv1),
            Layer::Conv(conv2),
            Layer::Dense(full),
            Layer::Dense(classifier),
        ],
    )
}

/// Connection pattern of the temporary seed-network classifier: 100
/// connections per class perceptron, 1,010 weights in total.
///
/// Perceptron `c` takes filters `f` with `f % 5 == c % 5` at every one of
/// the nine source positions (90 connections) plus filters with
/// `f % 5 == (c + 2) % 5` at the central position (10 more). Every
/// (position, filter) source output is covered by at least two class
/// perceptrons, so priming trains the whole convolution stack.
pub fn temp_classifier_connections() -> Vec<Vec<u32>> {
    (0..CLASS_COUNT)
        .map(|c| {
            let mut indices: Vec<u32> = Vec::with_capacity(100);
            for position in 0..9u32 {
                for f in 0..50u32 {
                    if f % 5 == (c as u32) % 5 {
                        indices.push(position * 50 + f);
                    }
                }
            }
            let center = 4u32;
            for f in 0..50u32 {
                if f % 5 == (c as u32 + 2) % 5 {
                    indices.push(center * 50 + f);
                }
            }
            indices.sort_unstable();
            indices
        })
        .collect()
}

/// The two-convolution seed network, optionally with its temporary
/// classifier attached: 16,060 weights with it, 15,050 without.
pub fn build_seed(with_temp_classifier: bool, rng: &mut Rng) -> Network {
    let (conv1, conv2) = conv_stack(rng);
    let mut layers = vec![Layer::Conv(conv1), Layer::Conv(conv2)];
    if with_temp_classifier {
        let classifier = SparseFcLayer::from_connections(
            SOURCE_SIZE,
            Activation::Linear,
            &temp_classifier_connections(),
            rng,
        );
        layers.push(Layer::Sparse(classifier));
    }
    Network::new("seed", layers)
}

/// Dense control with the grown network's perceptron counts: a
/// 20-perceptron fully-connected layer plus a 10-way classifier.
/// 24,280 weights.
pub fn build_fc20(rng: &mut Rng) -> Network {
    let (conv1, conv2) = conv_stack(rng);
    let full = DenseFcLayer::new(20, SOURCE_SIZE, Activation::Tanh, rng);
    let classifier = DenseFcLayer::new(CLASS_COUNT, 20, Activation::Linear, rng);
    Network::new(
        "fc20",
        vec![
            Layer::Conv(conv1),
            Layer::Conv(conv2),
            Layer::Dense(full),
            Layer::Dense(classifier),
        ],
    )
}
