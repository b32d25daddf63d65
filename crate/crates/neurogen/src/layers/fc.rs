//! Dense fully-connected layer.

use super::{alive_count, axpy, dot, merge_mask, Activation, LayerGrads, MaskError, PruneMask};
use crate::rng::Rng;

#[derive(Debug, Clone)]
pub struct DenseFcLayer {
    pub inputs: usize,
    pub activation: Activation,
    /// `[perceptron][input]`
    weights: Vec<f32>,
    biases: Vec<f32>,
    mask: Option<Vec<bool>>,
}

impl DenseFcLayer {
    /// Weights uniform in `[-r, r]` with `r = 1/sqrt(inputs)`, drawn in
    /// storage order; biases start at zero.
    pub fn new(perceptrons: usize, inputs: usize, activation: Activation, rng: &mut Rng) -> Self {
        let r = 1.0 / (inputs as f32).sqrt();
        let weights: Vec<f32> = (0..perceptrons * inputs).map(|_| rng.uniform(r)).collect();
        let layer = DenseFcLayer {
            inputs,
            activation,
            weights,
            biases: vec![0.0; perceptrons],
            mask: None,
        };
        assert_eq!(layer.weight_count(), perceptrons * (inputs + 1));
        layer
    }

    pub fn perceptron_count(&self) -> usize {
        self.biases.len()
    }

    pub fn weight_count(&self) -> usize {
        alive_count(&self.mask, self.weights.len()) + self.biases.len()
    }

    pub fn connection_count(&self) -> usize {
        alive_count(&self.mask, self.weights.len())
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
        inputs: usize,
        activation: Activation,
        weights: Vec<f32>,
        biases: Vec<f32>,
        mask: Option<Vec<bool>>,
    ) -> Self {
        assert_eq!(weights.len() % inputs.max(1), 0);
        assert_eq!(weights.len(), biases.len() * inputs);
        if let Some(m) = &mask {
            assert_eq!(m.len(), weights.len());
        }
        DenseFcLayer {
            inputs,
            activation,
            weights,
            biases,
            mask,
        }
    }

    /// Append `added` input slots to every perceptron, keeping existing
    /// weights. New weights are uniform in `[-r, r]` with `r` from the new
    /// input count, drawn perceptron by perceptron.
    pub fn grow_inputs(&mut self, added: usize, rng: &mut Rng) {
        assert!(self.mask.is_none(), "cannot grow a pruned layer");
        let new_inputs = self.inputs + added;
        let r = 1.0 / (new_inputs as f32).sqrt();
        let mut weights = Vec::with_capacity(self.perceptron_count() * new_inputs);
        for p in 0..self.perceptron_count() {
            weights.extend_from_slice(&self.weights[p * self.inputs..(p + 1) * self.inputs]);
            weights.extend((0..added).map(|_| rng.uniform(r)));
        }
        self.inputs = new_inputs;
        self.weights = weights;
    }

    pub fn forward_into(&self, input: &[f32], out: &mut Vec<f32>) {
        assert_eq!(input.len(), self.inputs, "dense input length mismatch");
        out.clear();
        out.reserve(self.perceptron_count());
        for p in 0..self.perceptron_count() {
            let row = &self.weights[p * self.inputs..(p + 1) * self.inputs];
            let z = self.biases[p] + dot(row, input);
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
        assert_eq!(input.len(), self.inputs);
        assert_eq!(output.len(), self.perceptron_count());
        assert_eq!(upstream.len(), self.perceptron_count());
        grads.weight_grads.clear();
        grads.weight_grads.resize(self.weights.len(), 0.0);
        grads.bias_grads.clear();
        grads.bias_grads.resize(self.perceptron_count(), 0.0);
        grads.input_grad.clear();
        if compute_input_grad {
            grads.input_grad.resize(self.inputs, 0.0);
        }
        for p in 0..self.perceptron_count() {
            let delta = upstream[p] * self.activation.prime_from_output(output[p]);
            grads.bias_grads[p] = delta;
            let seg = p * self.inputs..(p + 1) * self.inputs;
            axpy(delta, input, &mut grads.weight_grads[seg.clone()]);
            if compute_input_grad {
                axpy(delta, &self.weights[seg], &mut grads.input_grad);
            }
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
