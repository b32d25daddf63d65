//! Growing a sparse destination layer from data.
//!
//! The destination layer is grown in three steps. First, for every class,
//! all remaining members are forward-propagated to the source layer and
//! an average feature map is accumulated; members are then sorted by
//! mean squared error to that average, and the first and last of the
//! sorted list are the class's extreme members. Second, each extreme
//! member selects its *critical* source outputs: those within
//! `x * sigma` of the member's own source-output mean. Third, one new
//! perceptron per extreme member is connected to exactly those outputs,
//! a fresh classifier is attached, and the whole network is trained.
//!
//! If a validation target is not met, the consumed extreme members are
//! excluded from the search and another pair of perceptrons per class is
//! grown from the next extremes.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::data::{DataSplit, LabeledImage};
use crate::layers::{Activation, DenseFcLayer, Layer, SparseFcLayer};
use crate::network::{build_seed, Network, SizeReport};
use crate::rng::Rng;
use crate::tensor::{mean, mse, std_dev};
use crate::training::{
    class_recall, peak_test_accuracy, prime, run, CycleMetrics, StoppingReason, TrainConfig,
    TrainError,
};

#[derive(Debug, Error)]
pub enum GrowthError {
    #[error("class {class} has no remaining members")]
    ClassExhausted { class: u8 },
    #[error("class {class} profile is empty")]
    EmptyProfile { class: u8 },
    #[error("class {class} is down to one remaining member; cannot grow a pair")]
    DegeneratePair { class: u8 },
    #[error(transparent)]
    Train(#[from] TrainError),
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthConfig {
    /// Multiplier on sigma; larger bands connect more source outputs.
    pub scaling_factor: f32,
    pub priming_cycles: usize,
    /// Validation accuracy (percent) that stops the growth loop. Zero
    /// grows exactly once.
    pub accuracy_target: f32,
    /// Hard bound on growth iterations.
    pub max_iterations: usize,
    /// Invert the band: connect outputs at least `x * sigma` away from
    /// the mean instead of at most.
    pub band_outside: bool,
}

impl Default for GrowthConfig {
    fn default() -> Self {
        GrowthConfig {
            scaling_factor: 1.0,
            priming_cycles: 11,
            accuracy_target: 0.0,
            max_iterations: 5,
            band_outside: false,
        }
    }
}

/// Distance of one class member's source feature map to the class
/// average. `member` indexes into the training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MemberDistance {
    pub member: u32,
    pub mse: f32,
}

/// Per-class average source feature map plus members sorted ascending by
/// MSE to it (ties broken by training-set index).
#[derive(Debug, Clone)]
pub struct ClassProfile {
    pub class: u8,
    pub average: Vec<f32>,
    pub members: Vec<MemberDistance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtremePair {
    pub class: u8,
    pub most_similar: u32,
    pub least_similar: u32,
    /// Both references name the same member (single-member class).
    pub degenerate: bool,
}

/// One extreme member's critical-output selection.
#[derive(Debug, Clone, Serialize)]
pub struct CriticalSelection {
    pub mean: f32,
    pub std_dev: f32,
    pub indices: Vec<u32>,
}

/// Forward a batch of members to the source layer, preserving order.
fn source_features(
    net: &Network,
    source_layers: usize,
    train: &[LabeledImage],
    members: &[u32],
) -> Vec<Vec<f32>> {
    members
        .par_iter()
        .map(|&m| net.forward_upto(train[m as usize].pixels.data(), source_layers))
        .collect()
}

/// Extreme member search over every class present in the training set.
/// `source_layers` is the number of leading layers forming the seed
/// prefix whose last layer is the source layer. Excluded members take no
/// part in averages or rankings.
pub fn class_profiles(
    net: &Network,
    source_layers: usize,
    train: &[LabeledImage],
    excluded: &HashSet<u32>,
) -> Result<Vec<ClassProfile>, GrowthError> {
    let mut classes: Vec<u8> = train.iter().map(|img| img.label).collect();
    classes.sort_unstable();
    classes.dedup();

    let mut profiles = Vec::with_capacity(classes.len());
    for class in classes {
        let members: Vec<u32> = train
            .iter()
            .enumerate()
            .filter(|(i, img)| img.label == class && !excluded.contains(&(*i as u32)))
            .map(|(i, _)| i as u32)
            .collect();
        if members.is_empty() {
            return Err(GrowthError::ClassExhausted { class });
        }

        let features = source_features(net, source_layers, train, &members);
        let width = features[0].len();

        // average feature map, accumulated in member order
        let mut sums = vec![0.0f64; width];
        for feature in &features {
            for (s, &v) in sums.iter_mut().zip(feature) {
                *s += v as f64;
            }
        }
        let average: Vec<f32> = sums
            .iter()
            .map(|&s| (s / members.len() as f64) as f32)
            .collect();

        let mut distances: Vec<MemberDistance> = members
            .iter()
            .zip(&features)
            .map(|(&member, feature)| MemberDistance {
                member,
                mse: mse(feature, &average).expect("feature widths match"),
            })
            .collect();
        distances.sort_by(|a, b| a.mse.total_cmp(&b.mse).then(a.member.cmp(&b.member)));

        profiles.push(ClassProfile {
            class,
            average,
            members: distances,
        });
    }
    Ok(profiles)
}

/// First and last of the sorted member list. A single-member class yields
/// a pair flagged degenerate.
pub fn select_extremes(profile: &ClassProfile) -> Result<ExtremePair, GrowthError> {
    let first = profile.members.first().ok_or(GrowthError::EmptyProfile {
        class: profile.class,
    })?;
    let last = profile.members.last().unwrap();
    Ok(ExtremePair {
        class: profile.class,
        most_similar: first.member,
        least_similar: last.member,
        degenerate: profile.members.len() == 1,
    })
}

/// The band rule over a raw output vector: output `i` is critical iff
/// `|output[i] - mean| <= x * sigma` (or `>=` with the band inverted).
/// Sigma is the population standard deviation of the vector itself; when
/// it is zero every output is critical, since every deviation is zero.
pub fn select_band(outputs: &[f32], scaling_factor: f32, band_outside: bool) -> CriticalSelection {
    let mu = mean(outputs).expect("source layer is non-empty");
    let sigma = std_dev(outputs).expect("source layer is non-empty");
    let radius = scaling_factor * sigma;
    let indices: Vec<u32> = outputs
        .iter()
        .enumerate()
        .filter(|(_, &o)| {
            if sigma == 0.0 {
                return true;
            }
            let dist = (o - mu).abs();
            if band_outside {
                dist >= radius
            } else {
                dist <= radius
            }
        })
        .map(|(i, _)| i as u32)
        .collect();
    CriticalSelection {
        mean: mu,
        std_dev: sigma,
        indices,
    }
}

/// Select the critical source outputs for one member: forward-propagate
/// it to the source layer and apply the band rule there.
pub fn critical_outputs(
    net: &Network,
    source_layers: usize,
    member: &LabeledImage,
    scaling_factor: f32,
    band_outside: bool,
) -> CriticalSelection {
    let outputs = net.forward_upto(member.pixels.data(), source_layers);
    select_band(&outputs, scaling_factor, band_outside)
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtremeMemberReport {
    pub class: u8,
    pub member: u32,
    pub role: ExtremeRole,
    pub mean: f32,
    pub std_dev: f32,
    pub connections: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremeRole {
    MostSimilar,
    LeastSimilar,
}

/// Critical connection lists for a set of extreme pairs, two per class in
/// class order: most similar first, least similar second.
fn critical_lists(
    net: &Network,
    source_layers: usize,
    pairs: &[ExtremePair],
    train: &[LabeledImage],
    scaling_factor: f32,
    band_outside: bool,
) -> Result<(Vec<Vec<u32>>, Vec<ExtremeMemberReport>), GrowthError> {
    let mut lists = Vec::with_capacity(pairs.len() * 2);
    let mut reports = Vec::with_capacity(pairs.len() * 2);
    for pair in pairs {
        if pair.degenerate {
            return Err(GrowthError::DegeneratePair { class: pair.class });
        }
        for (role, member) in [
            (ExtremeRole::MostSimilar, pair.most_similar),
            (ExtremeRole::LeastSimilar, pair.least_similar),
        ] {
            let selection = critical_outputs(
                net,
                source_layers,
                &train[member as usize],
                scaling_factor,
                band_outside,
            );
            reports.push(ExtremeMemberReport {
                class: pair.class,
                member,
                role,
                mean: selection.mean,
                std_dev: selection.std_dev,
                connections: selection.indices.len(),
            });
            lists.push(selection.indices);
        }
    }
    Ok((lists, reports))
}

/// Grow a destination layer (one perceptron per extreme member, wired to
/// its critical outputs) plus a fresh fully-connected classifier over it.
/// New weights come from the shared stream: destination perceptrons in
/// pair order, then the classifier.
pub fn grow_layer(
    net: &Network,
    source_layers: usize,
    pairs: &[ExtremePair],
    train: &[LabeledImage],
    scaling_factor: f32,
    band_outside: bool,
    class_count: usize,
    rng: &mut Rng,
) -> Result<(SparseFcLayer, DenseFcLayer, Vec<ExtremeMemberReport>), GrowthError> {
    let (lists, reports) = critical_lists(
        net,
        source_layers,
        pairs,
        train,
        scaling_factor,
        band_outside,
    )?;
    let source_size = net.layers[source_layers - 1].out_len();
    let destination = SparseFcLayer::from_connections(source_size, Activation::Tanh, &lists, rng);
    let classifier = DenseFcLayer::new(
        class_count,
        destination.perceptron_count(),
        Activation::Linear,
        rng,
    );
    Ok((destination, classifier, reports))
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthIteration {
    pub iteration: usize,
    pub extremes: Vec<ExtremeMemberReport>,
    pub grown_perceptrons: usize,
    pub total_weights_after_growth: usize,
    pub cycles: Vec<CycleMetrics>,
    pub stopping: StoppingReason,
    pub best_validation_accuracy: f32,
    pub test_accuracy_at_peak: Option<f32>,
    /// Per-class recall (percent) on the validation set after training.
    pub validation_recall: Vec<f32>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    pub config: GrowthConfig,
    pub train_config: TrainConfig,
    pub iterations: Vec<GrowthIteration>,
    pub final_size: SizeReport,
}

#[derive(Debug)]
pub struct AngOutcome {
    pub network: Network,
    pub report: GrowthReport,
}

impl AngOutcome {
    pub fn test_accuracy_at_peak(&self) -> Option<f32> {
        self.report
            .iterations
            .last()
            .and_then(|it| it.test_accuracy_at_peak)
    }
}

/// The full growth procedure against a custom seed builder. The builder
/// must return a seed network with its temporary classifier attached as
/// the final layer.
pub fn ang_with_builder(
    builder: impl FnOnce(&mut Rng) -> Network,
    split: &DataSplit,
    growth: &GrowthConfig,
    train_config: &TrainConfig,
) -> Result<AngOutcome, GrowthError> {
    let mut rng = Rng::new(train_config.seed);
    let mut net = builder(&mut rng);
    prime(
        &mut net,
        &split.train,
        growth.priming_cycles,
        train_config.learning_rate,
        &mut rng,
    )?;
    net.pop_classifier();
    let source_layers = net.layers.len();
    net.name = "grown".into();

    let class_count = split
        .train
        .iter()
        .map(|img| img.label as usize + 1)
        .max()
        .unwrap_or(0);

    let mut excluded: HashSet<u32> = HashSet::new();
    let mut iterations = Vec::new();
    for iteration in 1..=growth.max_iterations {
        let profiles = class_profiles(&net, source_layers, &split.train, &excluded)?;
        let pairs: Vec<ExtremePair> = profiles
            .iter()
            .map(select_extremes)
            .collect::<Result<_, _>>()?;

        let extremes = if iteration == 1 {
            let (destination, classifier, reports) = grow_layer(
                &net,
                source_layers,
                &pairs,
                &split.train,
                growth.scaling_factor,
                growth.band_outside,
                class_count,
                &mut rng,
            )?;
            net.layers.push(Layer::Sparse(destination));
            net.layers.push(Layer::Dense(classifier));
            reports
        } else {
            let (lists, reports) = critical_lists(
                &net,
                source_layers,
                &pairs,
                &split.train,
                growth.scaling_factor,
                growth.band_outside,
            )?;
            let added = lists.len();
            let Layer::Sparse(destination) = &mut net.layers[source_layers] else {
                unreachable!("destination layer follows the seed prefix");
            };
            destination.extend_perceptrons(&lists, &mut rng);
            let Layer::Dense(classifier) = &mut net.layers[source_layers + 1] else {
                unreachable!("classifier follows the destination layer");
            };
            classifier.grow_inputs(added, &mut rng);
            reports
        };
        for pair in &pairs {
            excluded.insert(pair.most_similar);
            excluded.insert(pair.least_similar);
        }
        let total_weights_after_growth = net.total_weights();
        let grown_perceptrons = net.layers[source_layers].perceptron_count();

        let (cycles, stopping) = run(&mut net, split, train_config, &mut rng)?;
        let best_validation_accuracy = cycles
            .iter()
            .map(|m| m.validation_accuracy)
            .fold(f32::NEG_INFINITY, f32::max);
        let test_accuracy_at_peak = peak_test_accuracy(&cycles).map(|(_, t)| t);
        let validation_recall = class_recall(&net, &split.validation);

        iterations.push(GrowthIteration {
            iteration,
            extremes,
            grown_perceptrons,
            total_weights_after_growth,
            cycles,
            stopping,
            best_validation_accuracy,
            test_accuracy_at_peak,
            validation_recall,
        });

        if best_validation_accuracy >= growth.accuracy_target {
            break;
        }
    }

    let final_size = net.size_report();
    Ok(AngOutcome {
        report: GrowthReport {
            config: growth.clone(),
            train_config: train_config.clone(),
            iterations,
            final_size,
        },
        network: net,
    })
}

/// Grow from the standard seed network.
pub fn ang(
    split: &DataSplit,
    growth: &GrowthConfig,
    train_config: &TrainConfig,
) -> Result<AngOutcome, GrowthError> {
    ang_with_builder(|rng| build_seed(true, rng), split, growth, train_config)
}
