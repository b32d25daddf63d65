//! Sparse fully-connected layer: each perceptron carries an explicit
//! connection list of (source index, weight) pairs plus one bias.
//!
//! Connection lists are sorted by source index and free of duplicates,
//! which fixes the accumulation order. Gradients flow only along the
//! listed connections.

use super::{dot_indexed, merge_mask, Activation, LayerGrads, MaskError, PruneMask};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SparsePerceptron {
    /// Source output indices, sorted ascending, unique, `< source_size`.
    pub indices: Vec<u32>,
    pub weights: Vec<f32>,
    pub bias: f32,
}

#[derive(Debug, Clone)]
pub struct SparseFcLayer {
    pub source_size: usize,
    pub activation: Activation,
    perceptrons: Vec<SparsePerceptron>,
    /// Flat over connections in perceptron order.
    mask: Option<Vec<bool>>,
}

fn validate_indices(indices: &[u32], source_size: usize) {
    for pair in indices.windows(2) {
        assert!(
            pair[0] < pair[1],
            "connection indices must be sorted and unique"
        );
    }
    if let Some(&last) = indices.last() {
        assert!(
            (last as usize) < source_size,
            "connection index {last} out of range for source size {source_size}"
        );
    }
}

impl SparseFcLayer {
    /// Build from connection lists. Each perceptron's weights are uniform
    /// in `[-r, r]` with `r = 1/sqrt(connection count)`, drawn in listed
    /// order; biases start at zero.
    pub fn from_connections(
        source_size: usize,
        activation: Activation,
        connection_lists: &[Vec<u32>],
        rng: &mut Rng,
    ) -> Self {
        let perceptrons = connection_lists
            .iter()
            .map(|indices| {
                validate_indices(indices, source_size);
                let r = 1.0 / (indices.len().max(1) as f32).sqrt();
                SparsePerceptron {
                    indices: indices.clone(),
                    weights: indices.iter().map(|_| rng.uniform(r)).collect(),
                    bias: 0.0,
                }
            })
            .collect();
        SparseFcLayer {
            source_size,
            activation,
            perceptrons,
            mask: None,
        }
    }

    pub fn from_perceptrons(
        source_size: usize,
        activation: Activation,
        perceptrons: Vec<SparsePerceptron>,
        mask: Option<Vec<bool>>,
    ) -> Self {
        for p in &perceptrons {
            validate_indices(&p.indices, source_size);
            assert_eq!(p.indices.len(), p.weights.len());
        }
        if let Some(m) = &mask {
            let total: usize = perceptrons.iter().map(|p| p.indices.len()).sum();
            assert_eq!(m.len(), total);
        }
        SparseFcLayer {
            source_size,
            activation,
            perceptrons,
            mask,
        }
    }

    pub fn perceptrons(&self) -> &[SparsePerceptron] {
        &self.perceptrons
    }

    /// Append grown perceptrons. Existing ones are untouched.
    pub fn extend_perceptrons(&mut self, connection_lists: &[Vec<u32>], rng: &mut Rng) {
        assert!(self.mask.is_none(), "cannot grow a pruned layer");
        for indices in connection_lists {
            validate_indices(indices, self.source_size);
            let r = 1.0 / (indices.len().max(1) as f32).sqrt();
            self.perceptrons.push(SparsePerceptron {
                indices: indices.clone(),
                weights: indices.iter().map(|_| rng.uniform(r)).collect(),
                bias: 0.0,
            });
        }
    }

    pub fn perceptron_count(&self) -> usize {
        self.perceptrons.len()
    }

    pub fn total_connections(&self) -> usize {
        self.perceptrons.iter().map(|p| p.indices.len()).sum()
    }

    pub fn weight_count(&self) -> usize {
        self.connection_count() + self.perceptron_count()
    }

    pub fn connection_count(&self) -> usize {
        match &self.mask {
            None => self.total_connections(),
            Some(m) => m.iter().filter(|&&a| a).count(),
        }
    }

    pub fn forward_into(&self, input: &[f32], out: &mut Vec<f32>) {
        assert_eq!(
            input.len(),
            self.source_size,
            "sparse input length mismatch"
        );
        out.clear();
        out.reserve(self.perceptrons.len());
        for p in &self.perceptrons {
            let z = p.bias + dot_indexed(&p.weights, input, &p.indices);
            out.push(self.activation.apply(z));
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
        assert_eq!(input.len(), self.source_size);
        assert_eq!(output.len(), self.perceptrons.len());
        assert_eq!(upstream.len(), self.perceptrons.len());
        grads.weight_grads.clear();
        grads.weight_grads.resize(self.total_connections(), 0.0);
        grads.bias_grads.clear();
        grads.bias_grads.resize(self.perceptrons.len(), 0.0);
        grads.input_grad.clear();
        if compute_input_grad {
            grads.input_grad.resize(self.source_size, 0.0);
        }
        let mut seg = 0;
        for (p, perceptron) in self.perceptrons.iter().enumerate() {
            let delta = upstream[p] * self.activation.prime_from_output(output[p]);
            grads.bias_grads[p] = delta;
            // same accumulation step as the dense layer's axpy loops
            for (k, &idx) in perceptron.indices.iter().enumerate() {
                let i = idx as usize;
                grads.weight_grads[seg + k] += delta * input[i];
                if compute_input_grad {
                    grads.input_grad[i] += delta * perceptron.weights[k];
                }
            }
            seg += perceptron.indices.len();
        }
        if let Some(mask) = &self.mask {
            for (g, &alive) in grads.weight_grads.iter_mut().zip(mask) {
                if !alive {
                    *g = 0.0;
                }
            }
        }
    }

    pub fn apply_grads(&mut self, grads: &LayerGrads, learning_rate: f32) {
        let mut seg = 0;
        for (p, perceptron) in self.perceptrons.iter_mut().enumerate() {
            let n = perceptron.indices.len();
            for (k, w) in perceptron.weights.iter_mut().enumerate() {
                let alive = self.mask.as_ref().map_or(true, |m| m[seg + k]);
                if alive {
                    *w -= learning_rate * grads.weight_grads[seg + k];
                }
            }
            perceptron.bias -= learning_rate * grads.bias_grads[p];
            seg += n;
        }
    }

    pub fn prunable_len(&self) -> usize {
        self.total_connections()
    }

    pub fn alive_magnitudes(&self, out: &mut Vec<f32>) {
        let mut seg = 0;
        for p in &self.perceptrons {
            for (k, w) in p.weights.iter().enumerate() {
                if self.mask.as_ref().map_or(true, |m| m[seg + k]) {
                    out.push(w.abs());
                }
            }
            seg += p.weights.len();
        }
    }

    pub fn threshold_mask(&self, threshold: f32) -> PruneMask {
        let mut alive = Vec::with_capacity(self.total_connections());
        let mut seg = 0;
        for p in &self.perceptrons {
            for (k, w) in p.weights.iter().enumerate() {
                let already_dead = self.mask.as_ref().is_some_and(|m| !m[seg + k]);
                alive.push(!already_dead && w.abs() >= threshold);
            }
            seg += p.weights.len();
        }
        PruneMask { alive }
    }

    pub fn apply_mask(&mut self, mask: &PruneMask) -> Result<(), MaskError> {
        let total = self.total_connections();
        if mask.alive.len() != total {
            return Err(MaskError::Misaligned {
                mask: mask.alive.len(),
                weights: total,
            });
        }
        // flatten, merge, scatter back
        let mut flat: Vec<f32> = Vec::with_capacity(total);
        for p in &self.perceptrons {
            flat.extend_from_slice(&p.weights);
        }
        merge_mask(&mut self.mask, &mut flat, mask)?;
        let mut seg = 0;
        for p in &mut self.perceptrons {
            let n = p.weights.len();
            p.weights.copy_from_slice(&flat[seg..seg + n]);
            seg += n;
        }
        Ok(())
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }


}
