//! A small, from-scratch neural network library built around one idea:
//! instead of training an over-sized dense layer and pruning it, grow a
//! sparse fully-connected layer from data.
//!
//! A two-layer convolutional *seed network* is primed on the training set,
//! then each class's most and least typical members (by feature-map
//! distance to the class average) select the *critical* source outputs
//! that new perceptrons connect to. The grown network is trained end to
//! end and compared against a dense baseline, a small dense control, and
//! magnitude-pruned versions of both.
//!
//! # Determinism
//!
//! Every randomized decision (weight init, shuffling) is drawn from one
//! [`rng::Rng`] stream per experiment, consumed in a documented order:
//! layer weights in construction order first, then one shuffle per
//! training cycle, then grown-layer weights at growth time. Training is
//! single-threaded over the shuffle order; evaluation parallelizes only
//! over integer correctness counts, which are order-independent. Two runs
//! with the same seed produce byte-identical models and reports.
//!
//! # Numerics
//!
//! Weights and activations are `f32`. Statistical reductions (mean,
//! standard deviation, MSE) accumulate in `f64`. Layer dot products
//! accumulate in `f32` across eight lanes combined in a fixed order, so
//! results do not depend on evaluation strategy.

pub mod data;
pub mod experiments;
pub mod growth;
pub mod layers;
pub mod network;
pub mod pruning;
pub mod rng;
pub mod tensor;
pub mod training;

pub mod cli;

pub use data::{DataSplit, LabeledImage};
pub use network::{Network, SizeReport};
pub use rng::Rng;
pub use tensor::Tensor;
