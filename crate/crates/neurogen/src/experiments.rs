//! Scripted experiment suites: priming saturation, scaling-factor and
//! priming-cycle sweeps, pruning sweeps, and the full network comparison.
//!
//! Every experiment is a pure function of its configuration, the data
//! files and the seed; reports carry the full configuration and no
//! timestamps, so re-running reproduces them byte for byte. Sweep points
//! that share a primed seed network fork a snapshot of it together with
//! the RNG state, which is identical to re-priming from scratch with the
//! same seed.

use serde::Serialize;

use crate::data::DataSplit;
use crate::growth::{ang, AngOutcome, GrowthConfig, GrowthError};
use crate::network::{build_baseline, build_fc20, build_seed, Network};
use crate::pruning::{prune, sweep, threshold_for_remaining, PruneResult, PruneSpec, PruneTargets};
use crate::rng::Rng;
use crate::training::{evaluate, peak_test_accuracy, run, TrainConfig, TrainError};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Growth(#[from] GrowthError),
}

use thiserror::Error;

/// Common report header: configuration echo and environment fingerprint.
#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub schema_version: u32,
    pub kind: String,
    pub crate_version: String,
    pub seed: u64,
    pub learning_rate: f32,
}

fn meta(kind: &str, config: &TrainConfig) -> Meta {
    Meta {
        schema_version: REPORT_SCHEMA_VERSION,
        kind: kind.to_string(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        learning_rate: config.learning_rate,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PrimingRow {
    pub cycle: usize,
    pub train_accuracy: f32,
    pub validation_accuracy: f32,
    pub test_accuracy: Option<f32>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PrimingSaturationReport {
    pub meta: Meta,
    pub max_cycles: usize,
    pub rows: Vec<PrimingRow>,
    /// Last cycle that strictly improved validation accuracy; later
    /// cycles added nothing.
    pub saturation_cycle: usize,
}

/// Prime the seed network under the full protocol and record per-cycle
/// accuracies. Row zero holds the untrained network: train/validation
/// are reported as zero (not measured) and test shows chance level.
pub fn run_priming_saturation(
    split: &DataSplit,
    max_cycles: usize,
    config: &TrainConfig,
) -> Result<PrimingSaturationReport, ExperimentError> {
    let mut rng = Rng::new(config.seed);
    let mut net = build_seed(true, &mut rng);
    let mut rows = vec![PrimingRow {
        cycle: 0,
        train_accuracy: 0.0,
        validation_accuracy: 0.0,
        test_accuracy: Some(evaluate(&net, &split.test)?),
    }];
    let run_config = TrainConfig {
        max_cycles,
        ..config.clone()
    };
    let (metrics, _) = run(&mut net, split, &run_config, &mut rng)?;
    let mut saturation_cycle = 0;
    let mut best = f32::NEG_INFINITY;
    for m in &metrics {
        if m.validation_accuracy > best {
            best = m.validation_accuracy;
            saturation_cycle = m.cycle;
        }
        rows.push(PrimingRow {
            cycle: m.cycle,
            train_accuracy: m.train_accuracy,
            validation_accuracy: m.validation_accuracy,
            test_accuracy: m.test_accuracy,
        });
    }
    Ok(PrimingSaturationReport {
        meta: meta("priming-saturation", config),
        max_cycles,
        rows,
        saturation_cycle,
    })
}

pub fn priming_csv(report: &PrimingSaturationReport) -> String {
    let mut out = String::from("cycle,train,validate,test\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.cycle,
            r.train_accuracy,
            r.validation_accuracy,
            r.test_accuracy.map_or(String::new(), |t| t.to_string())
        ));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingRow {
    pub scaling_factor: f32,
    pub grown_connections: usize,
    pub total_weights: usize,
    pub best_validation_accuracy: f32,
    pub test_accuracy_at_peak: Option<f32>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingSweepReport {
    pub meta: Meta,
    pub priming_cycles: usize,
    pub rows: Vec<ScalingRow>,
}

/// Sweep the sigma scaling factor. One seed network is primed once; every
/// sweep point starts from a fork of that state, which matches
/// re-priming with the same seed exactly.
pub fn run_scaling_sweep(
    split: &DataSplit,
    factors: &[f32],
    priming_cycles: usize,
    config: &TrainConfig,
) -> Result<ScalingSweepReport, ExperimentError> {
    let mut rng = Rng::new(config.seed);
    let mut primed = build_seed(true, &mut rng);
    crate::training::prime(
        &mut primed,
        &split.train,
        priming_cycles,
        config.learning_rate,
        &mut rng,
    )?;

    let mut rows = Vec::with_capacity(factors.len());
    for &factor in factors {
        let growth = GrowthConfig {
            scaling_factor: factor,
            priming_cycles: 0,
            ..GrowthConfig::default()
        };
        // resume the post-priming stream: growth draws and training
        // shuffles continue exactly as in a straight-line run
        let outcome = crate::growth::ang_with_builder(
            |_| primed.clone(),
            split,
            &growth,
            &TrainConfig {
                seed: rng.state(),
                ..config.clone()
            },
        )?;
        let iteration = outcome.report.iterations.last().expect("one iteration");
        let grown_connections = outcome.network.layers[2].connection_count();
        rows.push(ScalingRow {
            scaling_factor: factor,
            grown_connections,
            total_weights: outcome.network.total_weights(),
            best_validation_accuracy: iteration.best_validation_accuracy,
            test_accuracy_at_peak: iteration.test_accuracy_at_peak,
        });
    }
    Ok(ScalingSweepReport {
        meta: meta("scaling-sweep", config),
        priming_cycles,
        rows,
    })
}

pub fn scaling_csv(report: &ScalingSweepReport) -> String {
    let mut out = String::from("scaling_factor,grown_connections,total_weights,validate,test\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.scaling_factor,
            r.grown_connections,
            r.total_weights,
            r.best_validation_accuracy,
            r.test_accuracy_at_peak
                .map_or(String::new(), |t| t.to_string())
        ));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct PrimingGrowthRow {
    pub priming_cycles: usize,
    pub total_weights: usize,
    pub best_validation_accuracy: f32,
    pub test_accuracy_at_peak: Option<f32>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PrimingGrowthReport {
    pub meta: Meta,
    pub scaling_factor: f32,
    pub rows: Vec<PrimingGrowthRow>,
}

/// Grow a full network per priming-cycle count. Every point re-primes a
/// fresh seed network with the same seed.
pub fn run_priming_growth_sweep(
    split: &DataSplit,
    cycle_counts: &[usize],
    scaling_factor: f32,
    config: &TrainConfig,
) -> Result<PrimingGrowthReport, ExperimentError> {
    let mut rows = Vec::with_capacity(cycle_counts.len());
    for &cycles in cycle_counts {
        let growth = GrowthConfig {
            scaling_factor,
            priming_cycles: cycles,
            ..GrowthConfig::default()
        };
        let outcome = ang(split, &growth, config)?;
        let iteration = outcome.report.iterations.last().expect("one iteration");
        rows.push(PrimingGrowthRow {
            priming_cycles: cycles,
            total_weights: outcome.network.total_weights(),
            best_validation_accuracy: iteration.best_validation_accuracy,
            test_accuracy_at_peak: iteration.test_accuracy_at_peak,
        });
    }
    Ok(PrimingGrowthReport {
        meta: meta("priming-growth-sweep", config),
        scaling_factor,
        rows,
    })
}

pub fn priming_growth_csv(report: &PrimingGrowthReport) -> String {
    let mut out = String::from("priming_cycles,total_weights,validate,test\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.priming_cycles,
            r.total_weights,
            r.best_validation_accuracy,
            r.test_accuracy_at_peak
                .map_or(String::new(), |t| t.to_string())
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PruneSubject {
    Baseline,
    Fc20,
}

#[derive(Debug, Clone, Serialize)]
pub struct PruneExperimentReport {
    pub meta: Meta,
    pub subject: PruneSubject,
    pub unpruned_test_accuracy: f32,
    pub trained_weights: usize,
    pub rows: Vec<PruneResult>,
}

/// Train the subject network, then prune it at thresholds chosen to hit
/// the requested removed fractions (of total network weights) and score
/// each point on the test set. No retraining after pruning.
pub fn run_prune_experiment(
    split: &DataSplit,
    subject: PruneSubject,
    removed_fractions: &[f32],
    config: &TrainConfig,
) -> Result<PruneExperimentReport, ExperimentError> {
    let mut rng = Rng::new(config.seed);
    let mut net = match subject {
        PruneSubject::Baseline => build_baseline(&mut rng),
        PruneSubject::Fc20 => build_fc20(&mut rng),
    };
    let (metrics, _) = run(&mut net, split, config, &mut rng)?;
    let unpruned_test_accuracy = peak_test_accuracy(&metrics)
        .map(|(_, t)| t)
        .unwrap_or_default();

    let total = net.total_weights();
    let targets = PruneTargets::FcAndClassifier;
    let thresholds: Vec<f32> = removed_fractions
        .iter()
        .map(|&fraction| {
            let keep = total - (fraction * total as f32).round() as usize;
            threshold_for_remaining(&net, &targets, keep)
        })
        .collect();
    let rows = sweep(&net, &thresholds, &targets, &split.test)?;
    Ok(PruneExperimentReport {
        meta: meta(
            match subject {
                PruneSubject::Baseline => "prune-baseline",
                PruneSubject::Fc20 => "prune-fc20",
            },
            config,
        ),
        subject,
        unpruned_test_accuracy,
        trained_weights: total,
        rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub network: String,
    pub weights: usize,
    pub test_accuracy: Option<f32>,
    /// Size change relative to the grown network, in percent.
    pub relative_size_pct: f32,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub meta: Meta,
    pub growth_config: GrowthConfig,
    pub rows: Vec<ComparisonRow>,
}

/// Train the dense reference network, the grown network, and the dense
/// control; prune the reference to half size and the control to the
/// grown network's size; compare.
pub fn run_full_comparison(
    split: &DataSplit,
    growth: &GrowthConfig,
    config: &TrainConfig,
) -> Result<ComparisonReport, ExperimentError> {
    let mut baseline_rng = Rng::new(config.seed);
    let mut baseline = build_baseline(&mut baseline_rng);
    let (baseline_metrics, _) = run(&mut baseline, split, config, &mut baseline_rng)?;
    let baseline_test = peak_test_accuracy(&baseline_metrics).map(|(_, t)| t);

    let grown: AngOutcome = ang(split, growth, config)?;
    let grown_weights = grown.network.total_weights();
    let grown_test = grown.test_accuracy_at_peak();

    let mut fc20_rng = Rng::new(config.seed);
    let mut fc20 = build_fc20(&mut fc20_rng);
    let (fc20_metrics, _) = run(&mut fc20, split, config, &mut fc20_rng)?;
    let fc20_test = peak_test_accuracy(&fc20_metrics).map(|(_, t)| t);

    let targets = PruneTargets::FcAndClassifier;
    let half = baseline.total_weights() / 2;
    let (pruned_baseline, pruned_baseline_result) = prune(
        &baseline,
        &PruneSpec {
            threshold: threshold_for_remaining(&baseline, &targets, half),
            targets: targets.clone(),
        },
    );
    let pruned_baseline_test = evaluate(&pruned_baseline, &split.test)?;

    let (pruned_fc20, pruned_fc20_result) = prune(
        &fc20,
        &PruneSpec {
            threshold: threshold_for_remaining(&fc20, &targets, grown_weights),
            targets,
        },
    );
    let pruned_fc20_test = evaluate(&pruned_fc20, &split.test)?;

    let relative =
        |w: usize| -> f32 { 100.0 * (w as f32 - grown_weights as f32) / grown_weights as f32 };
    let rows = vec![
        ComparisonRow {
            network: "baseline".into(),
            weights: baseline.total_weights(),
            test_accuracy: baseline_test,
            relative_size_pct: relative(baseline.total_weights()),
        },
        ComparisonRow {
            network: "pruned-baseline".into(),
            weights: pruned_baseline_result.remaining_weights,
            test_accuracy: Some(pruned_baseline_test),
            relative_size_pct: relative(pruned_baseline_result.remaining_weights),
        },
        ComparisonRow {
            network: "fc20".into(),
            weights: fc20.total_weights(),
            test_accuracy: fc20_test,
            relative_size_pct: relative(fc20.total_weights()),
        },
        ComparisonRow {
            network: "pruned-fc20".into(),
            weights: pruned_fc20_result.remaining_weights,
            test_accuracy: Some(pruned_fc20_test),
            relative_size_pct: relative(pruned_fc20_result.remaining_weights),
        },
        ComparisonRow {
            network: "grown".into(),
            weights: grown_weights,
            test_accuracy: grown_test,
            relative_size_pct: 0.0,
        },
    ];
    Ok(ComparisonReport {
        meta: meta("full-comparison", config),
        growth_config: growth.clone(),
        rows,
    })
}

pub fn comparison_csv(report: &ComparisonReport) -> String {
    let mut out = String::from("network,weights,test_accuracy,relative_size_pct\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.network,
            r.weights,
            r.test_accuracy.map_or(String::new(), |t| t.to_string()),
            r.relative_size_pct
        ));
    }
    out
}

/// Helper used by determinism checks and the CLI: a network forwarded on
/// a probe input, summarized as bits.
pub fn forward_fingerprint(net: &Network, input: &[f32]) -> u64 {
    let out = net.forward(input);
    let mut acc: u64 = 0xcbf2_9ce4_8422_2325;
    for v in out {
        acc = acc.wrapping_mul(0x100_0000_01b3) ^ v.to_bits() as u64;
    }
    acc
}
