//! The training protocol: per-image SGD cycles, validation-gated test
//! inference, stopping criteria, and seed-network priming.
//!
//! One cycle forward- and back-propagates every training image once, in
//! the current shuffle order, applying a plain SGD update after each
//! image. After each cycle the validation set is scored; the test set is
//! scored only when validation sets a new maximum, then the training
//! order is reshuffled. Stopping logic sees only validation history.
//!
//! RNG stream order per experiment: network weights are drawn at
//! construction, then training consumes exactly one shuffle per cycle.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::data::{shuffle, DataSplit, LabeledImage};
use crate::layers::LayerGrads;
use crate::network::{argmax, Network, CLASS_COUNT};
use crate::rng::Rng;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error("non-finite loss at image {image_index} (label {label}): logits {logits:?}")]
    NonFiniteLoss {
        image_index: usize,
        label: u8,
        logits: Vec<f32>,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainConfig {
    pub max_cycles: usize,
    pub patience: usize,
    /// Validation accuracy (percent) that ends training when reached.
    pub target_val_accuracy: f32,
    pub learning_rate: f32,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_cycles: 30,
            patience: 20,
            target_val_accuracy: 100.0,
            learning_rate: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_cycles == 0 {
            return Err("max-cycles must be at least 1".into());
        }
        if self.patience == 0 {
            return Err("patience must be at least 1".into());
        }
        if !(self.learning_rate > 0.0) {
            return Err("learning-rate must be positive".into());
        }
        Ok(())
    }
}

/// Accuracies are percentages. `test_accuracy` is present only for cycles
/// where validation reached a new maximum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleMetrics {
    pub cycle: usize,
    pub train_accuracy: f32,
    pub validation_accuracy: f32,
    pub test_accuracy: Option<f32>,
    pub weight_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StoppingReason {
    MaxCycles,
    PerfectValidation,
    Patience,
}

/// Reusable per-layer gradient buffers plus the activation trace.
struct Trainer {
    activations: Vec<Vec<f32>>,
    grads: Vec<LayerGrads>,
}

impl Trainer {
    fn new(layer_count: usize) -> Self {
        Trainer {
            activations: vec![Vec::new(); layer_count + 1],
            grads: vec![LayerGrads::default(); layer_count],
        }
    }
}

fn softmax_inplace(logits: &mut [f32]) {
    let mut max = f32::NEG_INFINITY;
    for &v in logits.iter() {
        if v > max {
            max = v;
        }
    }
    let mut sum = 0.0f32;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in logits.iter_mut() {
        *v /= sum;
    }
}

fn sgd_step(
    net: &mut Network,
    trainer: &mut Trainer,
    image: &LabeledImage,
    image_index: usize,
    learning_rate: f32,
) -> Result<bool, TrainError> {
    let layer_count = net.layers.len();
    trainer.activations[0].clear();
    trainer.activations[0].extend_from_slice(image.pixels.data());
    for i in 0..layer_count {
        let (inputs, outputs) = trainer.activations.split_at_mut(i + 1);
        net.layers[i].forward_into(&inputs[i], &mut outputs[0]);
    }

    let logits = &trainer.activations[layer_count];
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(TrainError::NonFiniteLoss {
            image_index,
            label: image.label,
            logits: logits.clone(),
        });
    }
    let correct = argmax(logits) == image.label as usize;

    // softmax cross-entropy: gradient at the logits is p - onehot
    let mut delta = logits.clone();
    softmax_inplace(&mut delta);
    if delta.iter().any(|v| !v.is_finite()) {
        return Err(TrainError::NonFiniteLoss {
            image_index,
            label: image.label,
            logits: trainer.activations[layer_count].clone(),
        });
    }
    delta[image.label as usize] -= 1.0;

    for i in (0..layer_count).rev() {
        let (own, later) = trainer.grads.split_at_mut(i + 1);
        let upstream: &[f32] = if i == layer_count - 1 {
            &delta
        } else {
            // input gradient computed for layer i + 1
            &later[0].input_grad
        };
        net.layers[i].backward_into(
            &trainer.activations[i],
            &trainer.activations[i + 1],
            upstream,
            &mut own[i],
            i > 0,
        );
        net.layers[i].apply_grads(&own[i], learning_rate);
    }
    Ok(correct)
}

/// One pass over the training images in `order`. Returns the fraction of
/// images classified correctly during the pass (percent), measured as the
/// weights move.
pub fn train_cycle(
    net: &mut Network,
    train: &[LabeledImage],
    order: &[u32],
    learning_rate: f32,
) -> Result<f32, TrainError> {
    if order.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    let mut trainer = Trainer::new(net.layers.len());
    let mut correct = 0usize;
    for &idx in order {
        let image = &train[idx as usize];
        if sgd_step(net, &mut trainer, image, idx as usize, learning_rate)? {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f32 / order.len() as f32)
}

/// Argmax classification accuracy, in percent. Images are scored in
/// parallel; the aggregate is an integer count and does not depend on
/// evaluation order.
pub fn evaluate(net: &Network, images: &[LabeledImage]) -> Result<f32, TrainError> {
    if images.is_empty() {
        return Err(TrainError::EmptyEvalSet);
    }
    let correct: usize = images
        .par_iter()
        .map(|img| (net.classify(img.pixels.data()) == img.label) as usize)
        .sum();
    Ok(100.0 * correct as f32 / images.len() as f32)
}

/// Per-class recall (percent) on an image set; classes with no members
/// score zero.
pub fn class_recall(net: &Network, images: &[LabeledImage]) -> Vec<f32> {
    let per_class: Vec<(usize, usize)> = images
        .par_iter()
        .fold(
            || vec![(0usize, 0usize); CLASS_COUNT],
            |mut acc, img| {
                let c = img.label as usize;
                acc[c].0 += 1;
                acc[c].1 += (net.classify(img.pixels.data()) == img.label) as usize;
                acc
            },
        )
        .reduce(
            || vec![(0usize, 0usize); CLASS_COUNT],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    x.0 += y.0;
                    x.1 += y.1;
                }
                a
            },
        );
    per_class
        .iter()
        .map(|&(count, correct)| {
            if count == 0 {
                0.0
            } else {
                100.0 * correct as f32 / count as f32
            }
        })
        .collect()
}

/// Run the full protocol until a stopping criterion fires. The observer
/// sees the network and metrics after each cycle's validation (and
/// test, when one ran), before the reshuffle.
pub fn run_with_observer(
    net: &mut Network,
    split: &DataSplit,
    config: &TrainConfig,
    rng: &mut Rng,
    mut observer: impl FnMut(&Network, &CycleMetrics),
) -> Result<(Vec<CycleMetrics>, StoppingReason), TrainError> {
    let mut order: Vec<u32> = (0..split.train.len() as u32).collect();
    let mut metrics = Vec::new();
    let mut best_val: Option<f32> = None;
    let mut stale_cycles = 0usize;
    let weight_count = net.total_weights();

    for cycle in 1..=config.max_cycles {
        let train_accuracy = train_cycle(net, &split.train, &order, config.learning_rate)?;
        let validation_accuracy = evaluate(net, &split.validation)?;
        let improved = best_val.is_none_or(|best| validation_accuracy > best);
        let test_accuracy = if improved {
            best_val = Some(validation_accuracy);
            stale_cycles = 0;
            Some(evaluate(net, &split.test)?)
        } else {
            stale_cycles += 1;
            None
        };
        let entry = CycleMetrics {
            cycle,
            train_accuracy,
            validation_accuracy,
            test_accuracy,
            weight_count,
        };
        observer(net, &entry);
        metrics.push(entry);
        shuffle(&mut order, rng);

        if validation_accuracy >= config.target_val_accuracy {
            return Ok((metrics, StoppingReason::PerfectValidation));
        }
        if stale_cycles >= config.patience {
            return Ok((metrics, StoppingReason::Patience));
        }
    }
    Ok((metrics, StoppingReason::MaxCycles))
}

pub fn run(
    net: &mut Network,
    split: &DataSplit,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<(Vec<CycleMetrics>, StoppingReason), TrainError> {
    run_with_observer(net, split, config, rng, |_, _| {})
}

/// Exactly `cycles` training passes with a reshuffle after each and no
/// validation. Consumes the same RNG stream as [`run`] over the same
/// number of cycles, so a primed network matches the corresponding
/// mid-run state.
pub fn prime(
    net: &mut Network,
    train: &[LabeledImage],
    cycles: usize,
    learning_rate: f32,
    rng: &mut Rng,
) -> Result<(), TrainError> {
    let mut order: Vec<u32> = (0..train.len() as u32).collect();
    for _ in 0..cycles {
        train_cycle(net, train, &order, learning_rate)?;
        shuffle(&mut order, rng);
    }
    Ok(())
}

/// Best test accuracy recorded at a validation peak, with its cycle.
pub fn peak_test_accuracy(metrics: &[CycleMetrics]) -> Option<(usize, f32)> {
    metrics
        .iter()
        .rev()
        .find_map(|m| m.test_accuracy.map(|t| (m.cycle, t)))
}

/// `cycle,train,validate,test,weights` rows, one per cycle; the test
/// column is empty for cycles without a test inference.
pub fn metrics_csv(metrics: &[CycleMetrics]) -> String {
    let mut out = String::from("cycle,train,validate,test,weights\n");
    for m in metrics {
        let test = m.test_accuracy.map_or(String::new(), |t| t.to_string());
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            m.cycle, m.train_accuracy, m.validation_accuracy, test, m.weight_count
        ));
    }
    out
}

pub fn write_metrics_csv(path: &Path, metrics: &[CycleMetrics]) -> std::io::Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(metrics_csv(metrics).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabeledImage;
    use crate::layers::{Activation, DenseFcLayer, Layer};
    use crate::tensor::Tensor;

    // Two-pixel images, linear two-class head: enough to drive the
    // protocol without real data.
    fn stub_net(seed: u64) -> Network {
        let mut rng = Rng::new(seed);
        let dense = DenseFcLayer::new(2, 2, Activation::Linear, &mut rng);
        Network::new("stub", vec![Layer::Dense(dense)])
    }

    fn stub_images(n: usize) -> Vec<LabeledImage> {
        (0..n)
            .map(|i| {
                let on = (i % 2) as f32;
                LabeledImage {
                    pixels: Tensor::new(vec![1, 2], vec![on, 1.0 - on]),
                    label: (i % 2) as u8,
                }
            })
            .collect()
    }

    fn stub_split(train: usize, val: usize, test: usize) -> DataSplit {
        DataSplit {
            train: stub_images(train),
            validation: stub_images(val),
            test: stub_images(test),
        }
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let mut net = stub_net(1);
        let images = stub_images(8);
        let order: Vec<u32> = (0..8).collect();
        let before = crate::network::io::to_bytes(&net);
        let static_acc = evaluate(&net, &images).unwrap();
        let online_acc = train_cycle(&mut net, &images, &order, 0.0).unwrap();
        assert_eq!(crate::network::io::to_bytes(&net), before);
        assert_eq!(online_acc, static_acc);
    }

    #[test]
    fn single_image_is_memorized() {
        let mut net = stub_net(2);
        let images = stub_images(1);
        let order = vec![0u32];
        for _ in 0..200 {
            train_cycle(&mut net, &images, &order, 0.1).unwrap();
        }
        assert_eq!(evaluate(&net, &images).unwrap(), 100.0);
    }

    #[test]
    fn flat_validation_stops_on_patience() {
        let mut net = stub_net(3);
        let split = stub_split(4, 4, 4);
        // learning rate small enough that validation accuracy never moves
        let config = TrainConfig {
            max_cycles: 100,
            patience: 5,
            learning_rate: 1e-9,
            target_val_accuracy: 200.0,
            seed: 0,
        };
        let mut rng = Rng::new(0);
        let (metrics, reason) = run(&mut net, &split, &config, &mut rng).unwrap();
        assert_eq!(reason, StoppingReason::Patience);
        // first cycle improves over no history, then `patience` stale ones
        assert_eq!(metrics.len(), 6);
    }

    #[test]
    fn max_cycles_is_reported() {
        let mut net = stub_net(4);
        let split = stub_split(4, 4, 4);
        let config = TrainConfig {
            max_cycles: 3,
            patience: 50,
            learning_rate: 1e-9,
            target_val_accuracy: 200.0,
            seed: 0,
        };
        let mut rng = Rng::new(0);
        let (metrics, reason) = run(&mut net, &split, &config, &mut rng).unwrap();
        assert_eq!(reason, StoppingReason::MaxCycles);
        assert_eq!(metrics.len(), 3);
    }

    #[test]
    fn perfect_validation_stops_early() {
        let mut net = stub_net(5);
        let split = stub_split(8, 4, 4);
        let config = TrainConfig {
            max_cycles: 500,
            patience: 500,
            learning_rate: 0.1,
            target_val_accuracy: 100.0,
            seed: 0,
        };
        let mut rng = Rng::new(0);
        let (metrics, reason) = run(&mut net, &split, &config, &mut rng).unwrap();
        assert_eq!(reason, StoppingReason::PerfectValidation);
        assert_eq!(metrics.last().unwrap().validation_accuracy, 100.0);
    }

    #[test]
    fn test_inference_only_on_validation_improvements() {
        let mut net = stub_net(6);
        let split = stub_split(8, 4, 4);
        let config = TrainConfig {
            max_cycles: 20,
            patience: 20,
            learning_rate: 0.05,
            target_val_accuracy: 200.0,
            seed: 0,
        };
        let mut rng = Rng::new(0);
        let (metrics, _) = run(&mut net, &split, &config, &mut rng).unwrap();
        let mut best = f32::NEG_INFINITY;
        for m in &metrics {
            if m.validation_accuracy > best {
                best = m.validation_accuracy;
                assert!(m.test_accuracy.is_some());
            } else {
                assert!(m.test_accuracy.is_none());
            }
        }
    }

    #[test]
    fn identical_runs_produce_identical_metrics() {
        let split = stub_split(16, 8, 8);
        let config = TrainConfig {
            max_cycles: 10,
            patience: 10,
            learning_rate: 0.05,
            target_val_accuracy: 200.0,
            seed: 9,
        };
        let mut net_a = stub_net(9);
        let mut net_b = stub_net(9);
        let (ma, ra) = run(&mut net_a, &split, &config, &mut Rng::new(9)).unwrap();
        let (mb, rb) = run(&mut net_b, &split, &config, &mut Rng::new(9)).unwrap();
        assert_eq!(ma, mb);
        assert_eq!(ra, rb);
        assert_eq!(
            crate::network::io::to_bytes(&net_a),
            crate::network::io::to_bytes(&net_b)
        );
    }

    #[test]
    fn weight_count_constant_across_training() {
        let mut net = stub_net(10);
        let split = stub_split(8, 4, 4);
        let config = TrainConfig {
            max_cycles: 5,
            patience: 5,
            learning_rate: 0.05,
            target_val_accuracy: 200.0,
            seed: 0,
        };
        let before = net.total_weights();
        let (metrics, _) = run(&mut net, &split, &config, &mut Rng::new(0)).unwrap();
        assert!(metrics.iter().all(|m| m.weight_count == before));
        assert_eq!(net.total_weights(), before);
    }

    #[test]
    fn prime_matches_run_prefix_state() {
        let split = stub_split(16, 4, 4);
        let config = TrainConfig {
            max_cycles: 4,
            patience: 50,
            learning_rate: 0.05,
            target_val_accuracy: 200.0,
            seed: 0,
        };
        let mut primed = stub_net(11);
        prime(&mut primed, &split.train, 4, 0.05, &mut Rng::new(0)).unwrap();
        let mut ran = stub_net(11);
        run(&mut ran, &split, &config, &mut Rng::new(0)).unwrap();
        assert_eq!(
            crate::network::io::to_bytes(&primed),
            crate::network::io::to_bytes(&ran)
        );
    }

    #[test]
    fn evaluate_rejects_empty_set() {
        let net = stub_net(12);
        assert!(matches!(
            evaluate(&net, &[]),
            Err(TrainError::EmptyEvalSet)
        ));
    }

    #[test]
    fn constant_classifier_scores_class_share() {
        let mut net = stub_net(13);
        if let Layer::Dense(l) = &mut net.layers[0] {
            l.weights_mut().fill(0.0);
            l.biases_mut().copy_from_slice(&[1.0, 0.0]);
        }
        // stub images alternate labels 0/1, so always-0 scores 50%
        assert_eq!(evaluate(&net, &stub_images(10)).unwrap(), 50.0);
    }

    #[test]
    fn non_finite_logits_abort_with_diagnostics() {
        let mut net = stub_net(14);
        if let Layer::Dense(l) = &mut net.layers[0] {
            l.weights_mut()[0] = f32::INFINITY;
        }
        let images = stub_images(2);
        let order = vec![0u32, 1];
        match train_cycle(&mut net, &images, &order, 0.01) {
            Err(TrainError::NonFiniteLoss { image_index, .. }) => assert_eq!(image_index, 0),
            other => panic!("expected NonFiniteLoss, got {other:?}"),
        }
    }

    #[test]
    fn metrics_csv_shape() {
        let metrics = vec![
            CycleMetrics {
                cycle: 1,
                train_accuracy: 50.0,
                validation_accuracy: 60.0,
                test_accuracy: Some(55.5),
                weight_count: 42,
            },
            CycleMetrics {
                cycle: 2,
                train_accuracy: 51.0,
                validation_accuracy: 59.0,
                test_accuracy: None,
                weight_count: 42,
            },
        ];
        let csv = metrics_csv(&metrics);
        assert_eq!(
            csv,
            "cycle,train,validate,test,weights\n1,50,60,55.5,42\n2,51,59,,42\n"
        );
    }
}
