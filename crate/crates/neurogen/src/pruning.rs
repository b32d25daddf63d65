//! Weight-magnitude pruning with threshold sweeps.
//!
//! A weight dies when its magnitude falls below the threshold; biases are
//! exempt. Removed fractions are measured against the whole network's
//! weight count, matching how the architecture tables report size.

use serde::Serialize;

use crate::data::LabeledImage;
use crate::layers::Layer;
use crate::network::Network;
use crate::training::{evaluate, TrainError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum PruneTargets {
    /// Dense and sparse fully-connected layers, classifier included.
    FcAndClassifier,
    All,
    Layers(Vec<usize>),
}

impl PruneTargets {
    pub fn selects(&self, index: usize, layer: &Layer) -> bool {
        match self {
            PruneTargets::FcAndClassifier => {
                matches!(layer, Layer::Dense(_) | Layer::Sparse(_))
            }
            PruneTargets::All => true,
            PruneTargets::Layers(indices) => indices.contains(&index),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PruneSpec {
    pub threshold: f32,
    pub targets: PruneTargets,
}

#[derive(Debug, Clone, Serialize)]
pub struct PruneResult {
    pub threshold: f32,
    pub removed_weights: usize,
    /// Fraction of the whole network's weights removed, in `[0, 1]`.
    pub removed_fraction: f32,
    pub remaining_weights: usize,
    pub test_accuracy: Option<f32>,
    /// `100 - test_accuracy` when evaluated.
    pub error_rate: Option<f32>,
    pub retrained: bool,
}

/// Mask weights with `|w| < threshold` in the target layers of a copy of
/// the network. Counts come back alongside the masked copy.
pub fn prune(net: &Network, spec: &PruneSpec) -> (Network, PruneResult) {
    let before = net.total_weights();
    let mut pruned = net.clone();
    for (index, layer) in pruned.layers.iter_mut().enumerate() {
        if spec.targets.selects(index, layer) {
            let mask = layer.threshold_mask(spec.threshold);
            layer.apply_mask(&mask).expect("mask built from layer");
        }
    }
    let remaining = pruned.total_weights();
    let removed = before - remaining;
    let result = PruneResult {
        threshold: spec.threshold,
        removed_weights: removed,
        removed_fraction: if before == 0 {
            0.0
        } else {
            removed as f32 / before as f32
        },
        remaining_weights: remaining,
        test_accuracy: None,
        error_rate: None,
        retrained: false,
    };
    (pruned, result)
}

/// Prune at each threshold independently (always from the given network)
/// and score the masked copy on `eval_set`.
pub fn sweep(
    net: &Network,
    thresholds: &[f32],
    targets: &PruneTargets,
    eval_set: &[LabeledImage],
) -> Result<Vec<PruneResult>, TrainError> {
    let mut results = Vec::with_capacity(thresholds.len());
    for &threshold in thresholds {
        let (masked, mut result) = prune(
            net,
            &PruneSpec {
                threshold,
                targets: targets.clone(),
            },
        );
        let accuracy = evaluate(&masked, eval_set)?;
        result.test_accuracy = Some(accuracy);
        result.error_rate = Some(100.0 - accuracy);
        results.push(result);
    }
    Ok(results)
}

/// Threshold that keeps roughly `target_remaining` weights in the whole
/// network by removing the smallest-magnitude weights in the target
/// layers. Exact when the relevant magnitudes are distinct.
pub fn threshold_for_remaining(
    net: &Network,
    targets: &PruneTargets,
    target_remaining: usize,
) -> f32 {
    let total = net.total_weights();
    if target_remaining >= total {
        return 0.0;
    }
    let to_remove = total - target_remaining;
    let mut magnitudes = Vec::new();
    for (index, layer) in net.layers.iter().enumerate() {
        if targets.selects(index, layer) {
            layer.alive_magnitudes(&mut magnitudes);
        }
    }
    if to_remove >= magnitudes.len() {
        return f32::INFINITY;
    }
    magnitudes.sort_by(f32::total_cmp);
    magnitudes[to_remove]
}

/// `removed_pct,weights,test_accuracy,error` rows, one per sweep point.
pub fn sweep_csv(results: &[PruneResult]) -> String {
    let mut out = String::from("removed_pct,weights,test_accuracy,error\n");
    for r in results {
        out.push_str(&format!(
            "{},{},{},{}\n",
            100.0 * r.removed_fraction,
            r.remaining_weights,
            r.test_accuracy.map_or(String::new(), |v| v.to_string()),
            r.error_rate.map_or(String::new(), |v| v.to_string()),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{Activation, DenseFcLayer};
    use crate::network::io::to_bytes;
    use crate::rng::Rng;
    use crate::tensor::Tensor;

    fn three_weight_net() -> Network {
        let mut rng = Rng::new(0);
        let mut dense = DenseFcLayer::new(1, 3, Activation::Tanh, &mut rng);
        dense.weights_mut().copy_from_slice(&[0.5, -0.01, 0.2]);
        Network::new("tiny", vec![Layer::Dense(dense)])
    }

    fn spec(threshold: f32) -> PruneSpec {
        PruneSpec {
            threshold,
            targets: PruneTargets::FcAndClassifier,
        }
    }

    #[test]
    fn zero_threshold_removes_nothing() {
        let net = three_weight_net();
        let (_, result) = prune(&net, &spec(0.0));
        assert_eq!(result.removed_weights, 0);
        assert_eq!(result.remaining_weights, 4);
    }

    #[test]
    fn infinite_threshold_removes_all_non_bias() {
        let net = three_weight_net();
        let (masked, result) = prune(&net, &spec(f32::INFINITY));
        assert_eq!(result.removed_weights, 3);
        assert_eq!(result.remaining_weights, 1); // bias survives
        let Layer::Dense(l) = &masked.layers[0] else {
            unreachable!()
        };
        assert_eq!(l.weights(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn threshold_predicate_hand_case() {
        let net = three_weight_net();
        let (masked, result) = prune(&net, &spec(0.1));
        assert_eq!(result.removed_weights, 1);
        let Layer::Dense(l) = &masked.layers[0] else {
            unreachable!()
        };
        assert_eq!(l.weights(), &[0.5, 0.0, 0.2]);
    }

    fn random_net(seed: u64) -> Network {
        let mut rng = Rng::new(seed);
        let hidden = DenseFcLayer::new(6, 10, Activation::Tanh, &mut rng);
        let classifier = DenseFcLayer::new(3, 6, Activation::Linear, &mut rng);
        Network::new(
            "rand",
            vec![Layer::Dense(hidden), Layer::Dense(classifier)],
        )
    }

    #[test]
    fn removed_fraction_monotone_in_threshold() {
        let net = random_net(1);
        let mut last_remaining = usize::MAX;
        for step in 0..20 {
            let t = step as f32 * 0.02;
            let (_, result) = prune(&net, &spec(t));
            assert!(result.remaining_weights <= last_remaining);
            last_remaining = result.remaining_weights;
        }
    }

    #[test]
    fn pruning_composition_is_idempotent() {
        let net = random_net(2);
        let (once_small, _) = prune(&net, &spec(0.05));
        let (then_large, _) = prune(&once_small, &spec(0.15));
        let (direct_large, _) = prune(&net, &spec(0.15));
        assert_eq!(to_bytes(&then_large), to_bytes(&direct_large));
    }

    #[test]
    fn mask_equals_literal_zeroing() {
        let net = random_net(3);
        let (masked, _) = prune(&net, &spec(0.1));
        // same weights written as plain zeros, no mask
        let mut zeroed = net.clone();
        for layer in zeroed.layers.iter_mut() {
            let Layer::Dense(l) = layer else { unreachable!() };
            for w in l.weights_mut().iter_mut() {
                if w.abs() < 0.1 {
                    *w = 0.0;
                }
            }
        }
        let mut rng = Rng::new(9);
        for _ in 0..20 {
            let input: Vec<f32> = (0..10).map(|_| rng.uniform(1.0)).collect();
            assert_eq!(masked.forward(&input), zeroed.forward(&input));
        }
    }

    #[test]
    fn threshold_selection_hits_target_count() {
        let net = random_net(4);
        let total = net.total_weights();
        let target = total - 13;
        let t = threshold_for_remaining(&net, &PruneTargets::FcAndClassifier, target);
        let (_, result) = prune(
            &net,
            &PruneSpec {
                threshold: t,
                targets: PruneTargets::FcAndClassifier,
            },
        );
        assert_eq!(result.remaining_weights, target);
    }

    mod prune_properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn composition_equals_single_prune(seed in 0u64..500, t1 in 0.0f32..0.1, dt in 0.0f32..0.1) {
                let net = random_net(seed);
                let t2 = t1 + dt;
                let (once, _) = prune(&net, &spec(t1));
                let (composed, _) = prune(&once, &spec(t2));
                let (direct, _) = prune(&net, &spec(t2));
                prop_assert_eq!(to_bytes(&composed), to_bytes(&direct));
            }

            #[test]
            fn remaining_weights_monotone(seed in 0u64..500, t1 in 0.0f32..0.2, dt in 0.0f32..0.2) {
                let net = random_net(seed);
                let (_, small) = prune(&net, &spec(t1));
                let (_, large) = prune(&net, &spec(t1 + dt));
                prop_assert!(large.remaining_weights <= small.remaining_weights);
            }
        }
    }

    #[test]
    fn sweep_scores_each_point() {
        let net = random_net(5);
        let images: Vec<LabeledImage> = (0..6)
            .map(|i| LabeledImage {
                pixels: Tensor::new(vec![1, 10], vec![0.1 * i as f32; 10]),
                label: (i % 3) as u8,
            })
            .collect();
        let results = sweep(
            &net,
            &[0.0, 0.05, 0.2],
            &PruneTargets::FcAndClassifier,
            &images,
        )
        .unwrap();
        assert_eq!(results.len(), 3);
        assert!(results.iter().all(|r| r.test_accuracy.is_some()));
        assert!(results[0].remaining_weights >= results[2].remaining_weights);
    }
}
