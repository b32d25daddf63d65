//! Layer kinds and their forward/backward passes.
//!
//! Four kinds: 2D convolution (depth 1), 3D convolution (depth > 1),
//! dense fully-connected, and sparse fully-connected built from explicit
//! per-perceptron connection lists. Backpropagation is hand-derived per
//! layer; there is no autodiff graph.
//!
//! Dot products accumulate into eight `f32` lanes that are combined in a
//! fixed order. The dense and indexed variants share the same lane
//! structure, so a sparse layer with full connectivity produces
//! bit-identical sums to a dense layer with the same weights.

mod conv;
mod fc;
mod sparse;

pub use conv::ConvLayer;
pub use fc::DenseFcLayer;
pub use sparse::{SparseFcLayer, SparsePerceptron};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MaskError {
    #[error("mask length {mask} does not match {weights} prunable weights")]
    Misaligned { mask: usize, weights: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f32) -> f32 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    pub fn prime_from_output(self, y: f32) -> f32 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }
}

/// Per-weight alive flags aligned to one layer's prunable (non-bias)
/// weight storage. Dead weights are held at zero and never updated.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneMask {
    pub alive: Vec<bool>,
}

impl PruneMask {
    pub fn all_alive(len: usize) -> Self {
        PruneMask {
            alive: vec![true; len],
        }
    }

    pub fn dead_count(&self) -> usize {
        self.alive.iter().filter(|&&a| !a).count()
    }
}

/// Gradients of one layer for one training example. Buffers are reused
/// across examples; `backward_into` resizes them as needed.
#[derive(Debug, Clone, Default)]
pub struct LayerGrads {
    pub input_grad: Vec<f32>,
    pub weight_grads: Vec<f32>,
    pub bias_grads: Vec<f32>,
}

#[derive(Debug, Clone)]
pub enum Layer {
    Conv(ConvLayer),
    Dense(DenseFcLayer),
    Sparse(SparseFcLayer),
}

impl Layer {
    pub fn in_len(&self) -> usize {
        match self {
            Layer::Conv(l) => l.in_len(),
            Layer::Dense(l) => l.inputs,
            Layer::Sparse(l) => l.source_size,
        }
    }

    pub fn out_len(&self) -> usize {
        match self {
            Layer::Conv(l) => l.out_len(),
            Layer::Dense(l) => l.perceptron_count(),
            Layer::Sparse(l) => l.perceptron_count(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Layer::Conv(l) => {
                if l.depth == 1 {
                    "conv2d"
                } else {
                    "conv3d"
                }
            }
            Layer::Dense(_) => "dense",
            Layer::Sparse(_) => "sparse",
        }
    }

    pub fn perceptron_count(&self) -> usize {
        match self {
            Layer::Conv(l) => l.perceptron_count(),
            Layer::Dense(l) => l.perceptron_count(),
            Layer::Sparse(l) => l.perceptron_count(),
        }
    }

    /// Alive weights including biases.
    pub fn weight_count(&self) -> usize {
        match self {
            Layer::Conv(l) => l.weight_count(),
            Layer::Dense(l) => l.weight_count(),
            Layer::Sparse(l) => l.weight_count(),
        }
    }

    /// Alive inter-layer connections (weights minus biases; geometric for
    /// convolution layers, where each kernel weight connects once per
    /// output position).
    pub fn connection_count(&self) -> usize {
        match self {
            Layer::Conv(l) => l.connection_count(),
            Layer::Dense(l) => l.connection_count(),
            Layer::Sparse(l) => l.connection_count(),
        }
    }

    pub fn forward_into(&self, input: &[f32], out: &mut Vec<f32>) {
        match self {
            Layer::Conv(l) => l.forward_into(input, out),
            Layer::Dense(l) => l.forward_into(input, out),
            Layer::Sparse(l) => l.forward_into(input, out),
        }
    }

    pub fn forward(&self, input: &[f32]) -> Vec<f32> {
        let mut out = Vec::new();
        self.forward_into(input, &mut out);
        out
    }

    /// Exact gradients of the forward computation for one example.
    /// `upstream` is the loss gradient with respect to this layer's
    /// (post-activation) output. Skipping the input gradient saves work
    /// on the first layer of a network.
    pub fn backward_into(
        &self,
        input: &[f32],
        output: &[f32],
        upstream: &[f32],
        grads: &mut LayerGrads,
        compute_input_grad: bool,
    ) {
        match self {
            Layer::Conv(l) => l.backward_into(input, output, upstream, grads, compute_input_grad),
            Layer::Dense(l) => l.backward_into(input, output, upstream, grads, compute_input_grad),
            Layer::Sparse(l) => {
                l.backward_into(input, output, upstream, grads, compute_input_grad)
            }
        }
    }

    /// One SGD step: `w -= lr * grad`. Masked weights are skipped.
    pub fn apply_grads(&mut self, grads: &LayerGrads, learning_rate: f32) {
        match self {
            Layer::Conv(l) => l.apply_grads(grads, learning_rate),
            Layer::Dense(l) => l.apply_grads(grads, learning_rate),
            Layer::Sparse(l) => l.apply_grads(grads, learning_rate),
        }
    }

    /// Number of prunable (non-bias) weights, dead ones included.
    pub fn prunable_len(&self) -> usize {
        match self {
            Layer::Conv(l) => l.prunable_len(),
            Layer::Dense(l) => l.prunable_len(),
            Layer::Sparse(l) => l.prunable_len(),
        }
    }

    /// Push magnitudes of currently alive prunable weights.
    pub fn alive_magnitudes(&self, out: &mut Vec<f32>) {
        match self {
            Layer::Conv(l) => l.alive_magnitudes(out),
            Layer::Dense(l) => l.alive_magnitudes(out),
            Layer::Sparse(l) => l.alive_magnitudes(out),
        }
    }

    /// Mask with `alive = false` where an alive weight has `|w| < threshold`.
    /// Already-dead weights stay dead. Biases are not represented here and
    /// are never pruned.
    pub fn threshold_mask(&self, threshold: f32) -> PruneMask {
        match self {
            Layer::Conv(l) => l.threshold_mask(threshold),
            Layer::Dense(l) => l.threshold_mask(threshold),
            Layer::Sparse(l) => l.threshold_mask(threshold),
        }
    }

    /// Zero the masked weights and freeze them. Combines with any mask
    /// already applied; a mask without dead weights leaves the layer
    /// unchanged.
    pub fn apply_mask(&mut self, mask: &PruneMask) -> Result<(), MaskError> {
        match self {
            Layer::Conv(l) => l.apply_mask(mask),
            Layer::Dense(l) => l.apply_mask(mask),
            Layer::Sparse(l) => l.apply_mask(mask),
        }
    }

    pub fn mask(&self) -> Option<&[bool]> {
        match self {
            Layer::Conv(l) => l.mask(),
            Layer::Dense(l) => l.mask(),
            Layer::Sparse(l) => l.mask(),
        }
    }
}

/// Combine a new mask into an existing one and zero newly dead weights.
/// Returns `None` when nothing is dead.
pub(crate) fn merge_mask(
    existing: &mut Option<Vec<bool>>,
    weights: &mut [f32],
    mask: &PruneMask,
) -> Result<(), MaskError> {
    if mask.alive.len() != weights.len() {
        return Err(MaskError::Misaligned {
            mask: mask.alive.len(),
            weights: weights.len(),
        });
    }
    let mut merged = existing
        .take()
        .unwrap_or_else(|| vec![true; weights.len()]);
    for (slot, &new_alive) in merged.iter_mut().zip(&mask.alive) {
        *slot &= new_alive;
    }
    for (w, &alive) in weights.iter_mut().zip(&merged) {
        if !alive {
            *w = 0.0;
        }
    }
    if merged.iter().any(|&a| !a) {
        *existing = Some(merged);
    }
    Ok(())
}

pub(crate) fn alive_count(mask: &Option<Vec<bool>>, total: usize) -> usize {
    match mask {
        None => total,
        Some(m) => m.iter().filter(|&&a| a).count(),
    }
}

/// Eight-lane dot product with a fixed combine order. The reference
/// accumulation pattern for all fully-connected sums.
#[inline]
pub(crate) fn dot(w: &[f32], x: &[f32]) -> f32 {
    debug_assert_eq!(w.len(), x.len());
    let mut acc = [0.0f32; 8];
    let main = w.len() - w.len() % 8;
    let (w_main, w_tail) = w.split_at(main);
    let (x_main, x_tail) = x.split_at(main);
    for (wc, xc) in w_main.chunks_exact(8).zip(x_main.chunks_exact(8)) {
        for l in 0..8 {
            acc[l] += wc[l] * xc[l];
        }
    }
    for (l, (&wv, &xv)) in w_tail.iter().zip(x_tail).enumerate() {
        acc[l] += wv * xv;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))
}

/// Same lane structure as [`dot`], reading `x` through an index list.
/// With `idx = 0..n` this is bit-identical to `dot`.
#[inline]
pub(crate) fn dot_indexed(w: &[f32], x: &[f32], idx: &[u32]) -> f32 {
    debug_assert_eq!(w.len(), idx.len());
    let mut acc = [0.0f32; 8];
    let main = w.len() - w.len() % 8;
    let (w_main, w_tail) = w.split_at(main);
    let (i_main, i_tail) = idx.split_at(main);
    for (wc, ic) in w_main.chunks_exact(8).zip(i_main.chunks_exact(8)) {
        for l in 0..8 {
            acc[l] += wc[l] * x[ic[l] as usize];
        }
    }
    for (l, (&wv, &iv)) in w_tail.iter().zip(i_tail).enumerate() {
        acc[l] += wv * x[iv as usize];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))
}

/// `y += a * x`, elementwise in index order.
#[inline]
pub(crate) fn axpy(a: f32, x: &[f32], y: &mut [f32]) {
    debug_assert_eq!(x.len(), y.len());
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}
