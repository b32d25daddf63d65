//! Convolution over channel-last inputs.
//!
//! Input layout is `[rows][cols][depth]`, kernels are square and span the
//! full input depth, output layout is `[out_rows][out_cols][filters]`.
//! A layer with depth 1 is the 2D case. Outputs pass through tanh.
//! Zero padding may differ before/after an axis so odd paddings are
//! possible; both spatial axes use the same padding.

use super::{alive_count, axpy, dot, merge_mask, LayerGrads, MaskError, PruneMask};
use crate::rng::Rng;

#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub filters: usize,
    pub kernel: usize,
    pub depth: usize,
    pub stride: usize,
    pub pad_before: usize,
    pub pad_after: usize,
    pub in_rows: usize,
    pub in_cols: usize,
    /// `[filter][kernel_row][kernel_col][depth]`
    weights: Vec<f32>,
    biases: Vec<f32>,
    mask: Option<Vec<bool>>,
}

impl ConvLayer {
    /// Weights are uniform in `[-r, r]` with `r = 1/sqrt(kernel^2 * depth)`,
    /// drawn from `rng` in storage order. Biases start at zero.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        filters: usize,
        kernel: usize,
        depth: usize,
        stride: usize,
        pad_before: usize,
        pad_after: usize,
        in_rows: usize,
        in_cols: usize,
        rng: &mut Rng,
    ) -> Self {
        let fan_in = kernel * kernel * depth;
        let r = 1.0 / (fan_in as f32).sqrt();
        let weights: Vec<f32> = (0..filters * fan_in).map(|_| rng.uniform(r)).collect();
        let layer = ConvLayer {
            filters,
            kernel,
            depth,
            stride,
            pad_before,
            pad_after,
            in_rows,
            in_cols,
            weights,
            biases: vec![0.0; filters],
            mask: None,
        };
        assert!(
            layer.padded_rows() >= kernel && layer.padded_cols() >= kernel,
            "padded input {}x{} admits no {}x{} kernel placement",
            layer.padded_rows(),
            layer.padded_cols(),
            kernel,
            kernel
        );
        // the counting identity every constructed layer satisfies
        assert_eq!(
            layer.weight_count(),
            (kernel * kernel * depth + 1) * filters
        );
        layer
    }

    pub fn padded_rows(&self) -> usize {
        self.in_rows + self.pad_before + self.pad_after
    }

    pub fn padded_cols(&self) -> usize {
        self.in_cols + self.pad_before + self.pad_after
    }

    pub fn out_rows(&self) -> usize {
        (self.padded_rows() - self.kernel) / self.stride + 1
    }

    pub fn out_cols(&self) -> usize {
        (self.padded_cols() - self.kernel) / self.stride + 1
    }

    pub fn in_len(&self) -> usize {
        self.in_rows * self.in_cols * self.depth
    }

    pub fn out_len(&self) -> usize {
        self.out_rows() * self.out_cols() * self.filters
    }

    /// One perceptron per output position per filter.
    pub fn perceptron_count(&self) -> usize {
        self.out_rows() * self.out_cols() * self.filters
    }

    pub fn weight_count(&self) -> usize {
        alive_count(&self.mask, self.weights.len()) + self.biases.len()
    }

    /// Geometric connection count: every alive kernel weight connects once
    /// per output position of its filter.
    pub fn connection_count(&self) -> usize {
        self.out_rows() * self.out_cols() * alive_count(&self.mask, self.weights.len())
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn biases(&self) -> &[f32] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut Vec<f32> {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut Vec<f32> {
        &mut self.biases
    }

    pub fn from_parts(
        filters: usize,
        kernel: usize,
        depth: usize,
        stride: usize,
        pad_before: usize,
        pad_after: usize,
        in_rows: usize,
        in_cols: usize,
        weights: Vec<f32>,
        biases: Vec<f32>,
        mask: Option<Vec<bool>>,
    ) -> Self {
        assert_eq!(weights.len(), filters * kernel * kernel * depth);
        assert_eq!(biases.len(), filters);
        if let Some(m) = &mask {
            assert_eq!(m.len(), weights.len());
        }
        ConvLayer {
            filters,
            kernel,
            depth,
            stride,
            pad_before,
            pad_after,
            in_rows,
            in_cols,
            weights,
            biases,
            mask,
        }
    }

    fn pad_input(&self, input: &[f32]) -> Vec<f32> {
        let pc = self.padded_cols();
        let row_len = self.in_cols * self.depth;
        let mut padded = vec![0.0f32; self.padded_rows() * pc * self.depth];
        for r in 0..self.in_rows {
            let src = &input[r * row_len..(r + 1) * row_len];
            let dst = ((r + self.pad_before) * pc + self.pad_before) * self.depth;
            padded[dst..dst + row_len].copy_from_slice(src);
        }
        padded
    }

    /// Window values accumulate in kernel-row-major order through the
    /// shared eight-lane dot; the window is gathered once per output
    /// position and shared by every filter.
    pub fn forward_into(&self, input: &[f32], out: &mut Vec<f32>) {
        assert_eq!(
            input.len(),
            self.in_len(),
            "conv input length {} does not match {}x{}x{}",
            input.len(),
            self.in_rows,
            self.in_cols,
            self.depth
        );
        let padded = self.pad_input(input);
        let (out_rows, out_cols) = (self.out_rows(), self.out_cols());
        let pc = self.padded_cols();
        let kd = self.kernel * self.depth;
        let wlen = self.kernel * kd;
        let mut window = vec![0.0f32; wlen];
        out.clear();
        out.resize(out_rows * out_cols * self.filters, 0.0);
        for orow in 0..out_rows {
            let ir0 = orow * self.stride;
            for ocol in 0..out_cols {
                let ic0 = ocol * self.stride;
                for kr in 0..self.kernel {
                    let xs = ((ir0 + kr) * pc + ic0) * self.depth;
                    window[kr * kd..(kr + 1) * kd].copy_from_slice(&padded[xs..xs + kd]);
                }
                let obase = (orow * out_cols + ocol) * self.filters;
                for f in 0..self.filters {
                    let sum = self.biases[f] + dot(&self.weights[f * wlen..(f + 1) * wlen], &window);
                    out[obase + f] = sum.tanh();
                }
            }
        }
    }

    pub fn backward_into(
        &self,
        input: &[f32],
        output: &[f32],
        upstream: &[f32],
        grads: &mut LayerGrads,
        compute_input_grad: bool,
    ) {
        assert_eq!(input.len(), self.in_len());
        assert_eq!(output.len(), self.out_len());
        assert_eq!(upstream.len(), self.out_len());
        let padded = self.pad_input(input);
        let (out_rows, out_cols) = (self.out_rows(), self.out_cols());
        let pc = self.padded_cols();
        let kd = self.kernel * self.depth;
        let wlen = self.kernel * kd;

        grads.weight_grads.clear();
        grads.weight_grads.resize(self.weights.len(), 0.0);
        grads.bias_grads.clear();
        grads.bias_grads.resize(self.filters, 0.0);
        let mut padded_grad = if compute_input_grad {
            vec![0.0f32; padded.len()]
        } else {
            Vec::new()
        };

        let mut window = vec![0.0f32; wlen];
        let mut window_grad = vec![0.0f32; wlen];
        for orow in 0..out_rows {
            let ir0 = orow * self.stride;
            for ocol in 0..out_cols {
                let ic0 = ocol * self.stride;
                for kr in 0..self.kernel {
                    let xs = ((ir0 + kr) * pc + ic0) * self.depth;
                    window[kr * kd..(kr + 1) * kd].copy_from_slice(&padded[xs..xs + kd]);
                }
                if compute_input_grad {
                    window_grad.fill(0.0);
                }
                let obase = (orow * out_cols + ocol) * self.filters;
                for f in 0..self.filters {
                    let y = output[obase + f];
                    let delta = upstream[obase + f] * (1.0 - y * y);
                    if delta == 0.0 {
                        continue;
                    }
                    grads.bias_grads[f] += delta;
                    axpy(
                        delta,
                        &window,
                        &mut grads.weight_grads[f * wlen..(f + 1) * wlen],
                    );
                    if compute_input_grad {
                        axpy(
                            delta,
                            &self.weights[f * wlen..(f + 1) * wlen],
                            &mut window_grad,
                        );
                    }
                }
                if compute_input_grad {
                    for kr in 0..self.kernel {
                        let xs = ((ir0 + kr) * pc + ic0) * self.depth;
                        for (pg, &wg) in padded_grad[xs..xs + kd]
                            .iter_mut()
                            .zip(&window_grad[kr * kd..(kr + 1) * kd])
                        {
                            *pg += wg;
                        }
                    }
                }
            }
        }

        if let Some(mask) = &self.mask {
            for (g, &alive) in grads.weight_grads.iter_mut().zip(mask) {
                if !alive {
                    *g = 0.0;
                }
            }
        }

        grads.input_grad.clear();
        if compute_input_grad {
            grads.input_grad.resize(self.in_len(), 0.0);
            let row_len = self.in_cols * self.depth;
            for r in 0..self.in_rows {
                let src = ((r + self.pad_before) * pc + self.pad_before) * self.depth;
                grads.input_grad[r * row_len..(r + 1) * row_len]
                    .copy_from_slice(&padded_grad[src..src + row_len]);
            }
        }
    }

    pub fn apply_grads(&mut self, grads: &LayerGrads, learning_rate: f32) {
        match &self.mask {
            None => {
                for (w, &g) in self.weights.iter_mut().zip(&grads.weight_grads) {
                    *w -= learning_rate * g;
                }
            }
            Some(mask) => {
                for ((w, &g), &alive) in self.weights.iter_mut().zip(&grads.weight_grads).zip(mask)
                {
                    if alive {
                        *w -= learning_rate * g;
                    }
                }
            }
        }
        for (b, &g) in self.biases.iter_mut().zip(&grads.bias_grads) {
            *b -= learning_rate * g;
        }
    }

    pub fn prunable_len(&self) -> usize {
        self.weights.len()
    }

    pub fn alive_magnitudes(&self, out: &mut Vec<f32>) {
        match &self.mask {
            None => out.extend(self.weights.iter().map(|w| w.abs())),
            Some(mask) => out.extend(
                self.weights
                    .iter()
                    .zip(mask)
                    .filter(|(_, &alive)| alive)
                    .map(|(w, _)| w.abs()),
            ),
        }
    }

    pub fn threshold_mask(&self, threshold: f32) -> PruneMask {
        let alive = self
            .weights
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let already_dead = self.mask.as_ref().is_some_and(|m| !m[i]);
                !already_dead && w.abs() >= threshold
            })
            .collect();
        PruneMask { alive }
    }

    pub fn apply_mask(&mut self, mask: &PruneMask) -> Result<(), MaskError> {
        merge_mask(&mut self.mask, &mut self.weights, mask)
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

}
