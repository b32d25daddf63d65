//! Shared test support: an independent f64 re-implementation of each
//! layer's forward pass for finite-difference gradient checks, plus data
//! directory resolution for tests that need the real image files.

#![allow(dead_code)]

use std::path::PathBuf;

use neurogen::layers::{ConvLayer, DenseFcLayer, SparseFcLayer};

/// Resolve the MNIST directory: `NEUROGEN_DATA_DIR` or `<workspace>/data`.
pub fn data_dir() -> PathBuf {
    if let Ok(dir) = std::env::var("NEUROGEN_DATA_DIR") {
        return PathBuf::from(dir);
    }
    let mut path = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    path.pop();
    path.pop();
    path.join("data")
}

/// Plain f64 convolution forward written independently of the crate's
/// kernels: direct index arithmetic, sequential accumulation.
pub struct ConvRef {
    pub filters: usize,
    pub kernel: usize,
    pub depth: usize,
    pub stride: usize,
    pub pad_before: usize,
    pub pad_after: usize,
    pub in_rows: usize,
    pub in_cols: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl ConvRef {
    pub fn from_layer(layer: &ConvLayer) -> Self {
        ConvRef {
            filters: layer.filters,
            kernel: layer.kernel,
            depth: layer.depth,
            stride: layer.stride,
            pad_before: layer.pad_before,
            pad_after: layer.pad_after,
            in_rows: layer.in_rows,
            in_cols: layer.in_cols,
            weights: layer.weights().iter().map(|&w| w as f64).collect(),
            biases: layer.biases().iter().map(|&b| b as f64).collect(),
        }
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let pr = self.in_rows + self.pad_before + self.pad_after;
        let pc = self.in_cols + self.pad_before + self.pad_after;
        let out_rows = (pr - self.kernel) / self.stride + 1;
        let out_cols = (pc - self.kernel) / self.stride + 1;
        let mut out = vec![0.0f64; out_rows * out_cols * self.filters];
        for or in 0..out_rows {
            for oc in 0..out_cols {
                for f in 0..self.filters {
                    let mut sum = self.biases[f];
                    for kr in 0..self.kernel {
                        for kc in 0..self.kernel {
                            for d in 0..self.depth {
                                let pad_r = or * self.stride + kr;
                                let pad_c = oc * self.stride + kc;
                                // translate padded coordinates back into
                                // the unpadded input, skipping the border
                                if pad_r < self.pad_before || pad_c < self.pad_before {
                                    continue;
                                }
                                let r = pad_r - self.pad_before;
                                let c = pad_c - self.pad_before;
                                if r >= self.in_rows || c >= self.in_cols {
                                    continue;
                                }
                                let x = input[(r * self.in_cols + c) * self.depth + d];
                                let w = self.weights
                                    [((f * self.kernel + kr) * self.kernel + kc) * self.depth + d];
                                sum += w * x;
                            }
                        }
                    }
                    out[(or * out_cols + oc) * self.filters + f] = sum.tanh();
                }
            }
        }
        out
    }
}

pub struct DenseRef {
    pub inputs: usize,
    pub tanh: bool,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseRef {
    pub fn from_layer(layer: &DenseFcLayer) -> Self {
        DenseRef {
            inputs: layer.inputs,
            tanh: layer.activation == neurogen::layers::Activation::Tanh,
            weights: layer.weights().iter().map(|&w| w as f64).collect(),
            biases: layer.biases().iter().map(|&b| b as f64).collect(),
        }
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.biases
            .iter()
            .enumerate()
            .map(|(p, &b)| {
                let mut sum = b;
                for i in 0..self.inputs {
                    sum += self.weights[p * self.inputs + i] * input[i];
                }
                if self.tanh {
                    sum.tanh()
                } else {
                    sum
                }
            })
            .collect()
    }
}

pub struct SparseRef {
    pub source_size: usize,
    pub tanh: bool,
    pub perceptrons: Vec<(Vec<u32>, Vec<f64>, f64)>,
}

impl SparseRef {
    pub fn from_layer(layer: &SparseFcLayer) -> Self {
        SparseRef {
            source_size: layer.source_size,
            tanh: layer.activation == neurogen::layers::Activation::Tanh,
            perceptrons: layer
                .perceptrons()
                .iter()
                .map(|p| {
                    (
                        p.indices.clone(),
                        p.weights.iter().map(|&w| w as f64).collect(),
                        p.bias as f64,
                    )
                })
                .collect(),
        }
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.perceptrons
            .iter()
            .map(|(indices, weights, bias)| {
                let mut sum = *bias;
                for (w, &i) in weights.iter().zip(indices) {
                    sum += w * input[i as usize];
                }
                if self.tanh {
                    sum.tanh()
                } else {
                    sum
                }
            })
            .collect()
    }
}

/// Loss functional for gradient checks: dot(upstream, output).
pub fn probe_loss(output: &[f64], upstream: &[f64]) -> f64 {
    output.iter().zip(upstream).map(|(&o, &u)| o * u).sum()
}

/// Central finite difference of `loss(params)` at `params[i]`.
pub fn central_difference(
    mut eval: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    i: usize,
    h: f64,
) -> f64 {
    let mut plus = params.to_vec();
    plus[i] += h;
    let mut minus = params.to_vec();
    minus[i] -= h;
    (eval(&plus) - eval(&minus)) / (2.0 * h)
}

/// Relative agreement at 1e-4, with an absolute guard for values near
/// zero where relative error is meaningless.
pub fn assert_grad_close(analytic: f32, fd: f64, what: &str) {
    let a = analytic as f64;
    let scale = a.abs().max(fd.abs());
    if scale >= 1e-3 {
        let rel = (a - fd).abs() / scale;
        assert!(rel <= 1e-4, "{what}: analytic {a} vs fd {fd} (rel {rel:e})");
    } else {
        assert!(
            (a - fd).abs() <= 1e-6,
            "{what}: analytic {a} vs fd {fd} (abs)"
        );
    }
}
