//! Command-line interface: training, growth, pruning, experiments, and
//! model inspection.
//!
//! Every command is a pure function of its flags, the data files and the
//! seed; output payloads carry no timestamps, so re-running a command
//! reproduces its files byte for byte. An optional `key=value` config
//! file can supply the same settings; explicit flags win.

use std::collections::HashMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data::{load_mnist, DataSplit};
use crate::experiments::{
    comparison_csv, priming_csv, priming_growth_csv, run_full_comparison, run_priming_growth_sweep,
    run_priming_saturation, run_prune_experiment, run_scaling_sweep, scaling_csv, PruneSubject,
};
use crate::growth::{ang, GrowthConfig};
use crate::network::{build_baseline, io};
use crate::pruning::{sweep, sweep_csv, PruneTargets};
use crate::rng::Rng;
use crate::training::{
    metrics_csv, peak_test_accuracy, run_with_observer, CycleMetrics, TrainConfig,
};

#[derive(Parser, Debug)]
#[command(
    name = "neurogen",
    version,
    about = "Grow sparse fully-connected layers from a primed convolutional seed network",
    propagate_version = true
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug)]
pub struct CommonOpts {
    /// Directory with the four canonical MNIST files
    /// (train-images-idx3-ubyte and friends) [default: ./data]
    #[arg(long, env = "NEUROGEN_DATA_DIR", global = true)]
    pub data_dir: Option<PathBuf>,

    /// Directory for models, metrics and reports [default: ./out]
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    /// Seed of the experiment RNG stream (weight init, shuffles, grown
    /// weights) [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// SGD learning rate [default: 0.01]
    #[arg(long, global = true)]
    pub learning_rate: Option<f32>,

    /// Stop after this many training cycles [default: 30]
    #[arg(long, global = true)]
    pub max_cycles: Option<usize>,

    /// Stop after this many cycles without a validation improvement
    /// [default: 20]
    #[arg(long, global = true)]
    pub patience: Option<usize>,

    /// Optional key=value config file supplying the same settings;
    /// explicit flags win
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train the dense four-layer reference network
    TrainBaseline,
    /// Grow a network: prime the seed, select critical connections, train
    Grow(GrowOpts),
    /// Magnitude-prune a saved model across thresholds
    Prune(PruneOpts),
    /// Run a scripted experiment suite
    Experiment(ExperimentOpts),
    /// Model file utilities
    #[command(subcommand)]
    Model(ModelCommand),
}

#[derive(Args, Debug)]
pub struct GrowOpts {
    /// Band width multiplier on sigma [default: 1.0]
    #[arg(long)]
    pub scaling_factor: Option<f32>,

    /// Priming cycles before growth [default: 11]
    #[arg(long)]
    pub priming_cycles: Option<usize>,

    /// Validation accuracy (percent) that stops the growth loop; 0 grows
    /// exactly once [default: 0]
    #[arg(long)]
    pub accuracy_target: Option<f32>,

    /// Hard bound on growth iterations [default: 5]
    #[arg(long)]
    pub max_iterations: Option<usize>,

    /// Connect outputs outside the band instead of inside
    #[arg(long)]
    pub band_outside: bool,
}

#[derive(Args, Debug)]
pub struct PruneOpts {
    /// Model file produced by train-baseline or grow
    #[arg(long)]
    pub model: PathBuf,

    /// Magnitude thresholds to sweep
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub thresholds: Vec<f32>,

    /// Layers to prune
    #[arg(long, value_enum, default_value_t = TargetsOpt::Fc)]
    pub targets: TargetsOpt,

    /// Fine-tune after each pruning point (results labeled)
    #[arg(long)]
    pub retrain: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetsOpt {
    /// Fully-connected layers including the classifier
    Fc,
    /// Every layer
    All,
}

impl TargetsOpt {
    fn to_targets(self) -> PruneTargets {
        match self {
            TargetsOpt::Fc => PruneTargets::FcAndClassifier,
            TargetsOpt::All => PruneTargets::All,
        }
    }
}

#[derive(Args, Debug)]
pub struct ExperimentOpts {
    /// Which suite to run
    #[arg(value_enum)]
    pub kind: ExperimentKind,

    /// Scaling factors for the scaling sweep
    #[arg(long, value_delimiter = ',')]
    pub factors: Option<Vec<f32>>,

    /// Priming-cycle counts for the priming-growth sweep
    #[arg(long, value_delimiter = ',')]
    pub cycles: Option<Vec<usize>>,

    /// Removed-weight fractions for the pruning experiments
    #[arg(long, value_delimiter = ',')]
    pub fractions: Option<Vec<f32>>,

    /// Priming cycles before the scaling sweep [default: 18]
    #[arg(long)]
    pub sweep_priming_cycles: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Per-cycle seed-network priming accuracies up to max-cycles
    Priming,
    /// Critical-connection counts and accuracy across sigma scaling factors
    Scaling,
    /// Grown-network accuracy across priming-cycle counts
    PrimingGrowth,
    /// Train and magnitude-prune the dense reference network
    PruneBaseline,
    /// Train and magnitude-prune the dense 20-perceptron control
    PruneFc20,
    /// Train reference, grown and control networks and compare
    Full,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failure(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(err: anyhow::Error) -> Self {
        CliError::Failure(err)
    }
}

/// Fully resolved common settings: flag > config file > default.
#[derive(Debug, Clone)]
pub struct Settings {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub train: TrainConfig,
}

fn parse_config_file(path: &Path) -> Result<HashMap<String, String>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
    let mut map = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Usage(format!(
                "{}:{}: expected key=value",
                path.display(),
                lineno + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn pick<T: FromStr + Clone>(
    flag: &Option<T>,
    file: &HashMap<String, String>,
    key: &str,
    default: T,
) -> Result<T, CliError>
where
    T::Err: Display,
{
    if let Some(v) = flag {
        return Ok(v.clone());
    }
    match file.get(key) {
        Some(raw) => raw
            .parse::<T>()
            .map_err(|e| CliError::Usage(format!("config key {key}: {e}"))),
        None => Ok(default),
    }
}

pub fn resolve(common: &CommonOpts) -> Result<(Settings, HashMap<String, String>), CliError> {
    let file = match &common.config {
        Some(path) => parse_config_file(path)?,
        None => HashMap::new(),
    };
    let defaults = TrainConfig::default();
    let settings = Settings {
        data_dir: pick(&common.data_dir, &file, "data-dir", PathBuf::from("data"))?,
        out_dir: pick(&common.out_dir, &file, "out-dir", PathBuf::from("out"))?,
        train: TrainConfig {
            max_cycles: pick(&common.max_cycles, &file, "max-cycles", defaults.max_cycles)?,
            patience: pick(&common.patience, &file, "patience", defaults.patience)?,
            target_val_accuracy: defaults.target_val_accuracy,
            learning_rate: pick(
                &common.learning_rate,
                &file,
                "learning-rate",
                defaults.learning_rate,
            )?,
            seed: pick(&common.seed, &file, "seed", defaults.seed)?,
        },
    };
    settings
        .train
        .validate()
        .map_err(CliError::Usage)?;
    Ok((settings, file))
}

fn growth_config(opts: &GrowOpts, file: &HashMap<String, String>) -> Result<GrowthConfig, CliError> {
    let defaults = GrowthConfig::default();
    Ok(GrowthConfig {
        scaling_factor: pick(
            &opts.scaling_factor,
            file,
            "scaling-factor",
            defaults.scaling_factor,
        )?,
        priming_cycles: pick(
            &opts.priming_cycles,
            file,
            "priming-cycles",
            defaults.priming_cycles,
        )?,
        accuracy_target: pick(
            &opts.accuracy_target,
            file,
            "accuracy-target",
            defaults.accuracy_target,
        )?,
        max_iterations: pick(
            &opts.max_iterations,
            file,
            "max-iterations",
            defaults.max_iterations,
        )?,
        band_outside: opts.band_outside,
    })
}

fn load_split(settings: &Settings) -> Result<DataSplit, CliError> {
    load_mnist(&settings.data_dir)
        .with_context(|| {
            format!(
                "loading MNIST from {} (set --data-dir or NEUROGEN_DATA_DIR)",
                settings.data_dir.display()
            )
        })
        .map_err(CliError::Failure)
}

fn write_out(out_dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))
        .map_err(CliError::Failure)?;
    let path = out_dir.join(name);
    fs::write(&path, bytes)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::Failure)?;
    Ok(path)
}

fn write_json(out_dir: &Path, name: &str, value: &impl serde::Serialize) -> Result<PathBuf, CliError> {
    let json = serde_json::to_string_pretty(value).expect("report serialization");
    write_out(out_dir, name, json.as_bytes())
}

fn progress_observer() -> impl FnMut(&crate::network::Network, &CycleMetrics) {
    |_, m| {
        let test = m
            .test_accuracy
            .map_or(String::from("-"), |t| format!("{t:.2}"));
        eprintln!(
            "cycle {:>3}  train {:>6.2}  validate {:>6.2}  test {}",
            m.cycle, m.train_accuracy, m.validation_accuracy, test
        );
    }
}

fn cmd_train_baseline(settings: &Settings) -> Result<(), CliError> {
    let split = load_split(settings)?;
    let mut rng = Rng::new(settings.train.seed);
    let mut net = build_baseline(&mut rng);
    let (metrics, reason) = run_with_observer(
        &mut net,
        &split,
        &settings.train,
        &mut rng,
        progress_observer(),
    )
    .map_err(|e| CliError::Failure(e.into()))?;

    write_out(
        &settings.out_dir,
        "baseline_metrics.csv",
        metrics_csv(&metrics).as_bytes(),
    )?;
    let model_path = settings.out_dir.join("baseline.model");
    io::save(&net, &model_path).map_err(|e| CliError::Failure(e.into()))?;

    #[derive(serde::Serialize)]
    struct Summary {
        config: TrainConfig,
        stopping: crate::training::StoppingReason,
        cycles: usize,
        test_accuracy_at_peak: Option<f32>,
        size: crate::network::SizeReport,
    }
    write_json(
        &settings.out_dir,
        "baseline_summary.json",
        &Summary {
            config: settings.train.clone(),
            stopping: reason,
            cycles: metrics.len(),
            test_accuracy_at_peak: peak_test_accuracy(&metrics).map(|(_, t)| t),
            size: net.size_report(),
        },
    )?;
    eprintln!("model: {}", model_path.display());
    Ok(())
}

fn cmd_grow(
    settings: &Settings,
    opts: &GrowOpts,
    file: &HashMap<String, String>,
) -> Result<(), CliError> {
    let growth = growth_config(opts, file)?;
    let split = load_split(settings)?;
    let outcome = ang(&split, &growth, &settings.train).map_err(|e| CliError::Failure(e.into()))?;

    let model_path = settings.out_dir.join("grown.model");
    fs::create_dir_all(&settings.out_dir)
        .with_context(|| format!("creating {}", settings.out_dir.display()))
        .map_err(CliError::Failure)?;
    io::save(&outcome.network, &model_path).map_err(|e| CliError::Failure(e.into()))?;
    write_json(&settings.out_dir, "growth_report.json", &outcome.report)?;
    for iteration in &outcome.report.iterations {
        write_out(
            &settings.out_dir,
            &format!("grow_metrics_iter{}.csv", iteration.iteration),
            metrics_csv(&iteration.cycles).as_bytes(),
        )?;
    }
    eprintln!(
        "grown network: {} weights, test at peak {:?}",
        outcome.network.total_weights(),
        outcome.test_accuracy_at_peak()
    );
    eprintln!("model: {}", model_path.display());
    Ok(())
}

fn cmd_prune(settings: &Settings, opts: &PruneOpts) -> Result<(), CliError> {
    let net = io::load(&opts.model).map_err(|e| CliError::Failure(e.into()))?;
    let split = load_split(settings)?;
    let targets = opts.targets.to_targets();
    let mut results = sweep(&net, &opts.thresholds, &targets, &split.test)
        .map_err(|e| CliError::Failure(e.into()))?;

    if opts.retrain {
        for (threshold, result) in opts.thresholds.iter().zip(results.iter_mut()) {
            let (mut masked, _) = crate::pruning::prune(
                &net,
                &crate::pruning::PruneSpec {
                    threshold: *threshold,
                    targets: targets.clone(),
                },
            );
            let mut rng = Rng::new(settings.train.seed);
            let (metrics, _) = crate::training::run(&mut masked, &split, &settings.train, &mut rng)
                .map_err(|e| CliError::Failure(e.into()))?;
            let accuracy = peak_test_accuracy(&metrics)
                .map(|(_, t)| t)
                .unwrap_or_default();
            result.test_accuracy = Some(accuracy);
            result.error_rate = Some(100.0 - accuracy);
            result.retrained = true;
        }
    }

    write_out(
        &settings.out_dir,
        "prune_sweep.csv",
        sweep_csv(&results).as_bytes(),
    )?;
    write_json(&settings.out_dir, "prune_sweep.json", &results)?;
    Ok(())
}

fn cmd_experiment(
    settings: &Settings,
    opts: &ExperimentOpts,
    file: &HashMap<String, String>,
) -> Result<(), CliError> {
    let split = load_split(settings)?;
    let config = &settings.train;
    match opts.kind {
        ExperimentKind::Priming => {
            let report = run_priming_saturation(&split, config.max_cycles, config)
                .map_err(|e| CliError::Failure(e.into()))?;
            write_json(&settings.out_dir, "priming_saturation.json", &report)?;
            write_out(
                &settings.out_dir,
                "priming_saturation.csv",
                priming_csv(&report).as_bytes(),
            )?;
        }
        ExperimentKind::Scaling => {
            let factors = opts.factors.clone().unwrap_or_else(|| {
                (1..=15).map(|i| i as f32 * 0.1).collect()
            });
            let priming = pick(&opts.sweep_priming_cycles, file, "sweep-priming-cycles", 18)?;
            let report = run_scaling_sweep(&split, &factors, priming, config)
                .map_err(|e| CliError::Failure(e.into()))?;
            write_json(&settings.out_dir, "scaling_sweep.json", &report)?;
            write_out(
                &settings.out_dir,
                "scaling_sweep.csv",
                scaling_csv(&report).as_bytes(),
            )?;
        }
        ExperimentKind::PrimingGrowth => {
            let cycles = opts
                .cycles
                .clone()
                .unwrap_or_else(|| (0..=25).collect());
            let report = run_priming_growth_sweep(&split, &cycles, 1.0, config)
                .map_err(|e| CliError::Failure(e.into()))?;
            write_json(&settings.out_dir, "priming_growth.json", &report)?;
            write_out(
                &settings.out_dir,
                "priming_growth.csv",
                priming_growth_csv(&report).as_bytes(),
            )?;
        }
        ExperimentKind::PruneBaseline | ExperimentKind::PruneFc20 => {
            let subject = if opts.kind == ExperimentKind::PruneBaseline {
                PruneSubject::Baseline
            } else {
                PruneSubject::Fc20
            };
            let fractions = opts
                .fractions
                .clone()
                .unwrap_or_else(|| vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]);
            let report = run_prune_experiment(&split, subject, &fractions, config)
                .map_err(|e| CliError::Failure(e.into()))?;
            let name = if subject == PruneSubject::Baseline {
                "prune_baseline"
            } else {
                "prune_fc20"
            };
            write_json(&settings.out_dir, &format!("{name}.json"), &report)?;
            write_out(
                &settings.out_dir,
                &format!("{name}.csv"),
                sweep_csv(&report.rows).as_bytes(),
            )?;
        }
        ExperimentKind::Full => {
            let growth = GrowthConfig::default();
            let report = run_full_comparison(&split, &growth, config)
                .map_err(|e| CliError::Failure(e.into()))?;
            write_json(&settings.out_dir, "full_comparison.json", &report)?;
            write_out(
                &settings.out_dir,
                "full_comparison.csv",
                comparison_csv(&report).as_bytes(),
            )?;
        }
    }
    Ok(())
}

#[derive(Subcommand, Debug)]
pub enum ModelCommand {
    /// Print a model's per-layer weight and connection counts as JSON
    Info { path: PathBuf },
}

fn cmd_model(command: &ModelCommand) -> Result<(), CliError> {
    match command {
        ModelCommand::Info { path } => {
            let net = io::load(path).map_err(|e| CliError::Failure(e.into()))?;
            println!(
                "{}",
                serde_json::to_string_pretty(&net.size_report()).expect("report serialization")
            );
            Ok(())
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let (settings, file) = resolve(&cli.common)?;
    match &cli.command {
        Command::TrainBaseline => cmd_train_baseline(&settings),
        Command::Grow(opts) => cmd_grow(&settings, opts, &file),
        Command::Prune(opts) => cmd_prune(&settings, opts),
        Command::Experiment(opts) => cmd_experiment(&settings, opts, &file),
        Command::Model(command) => cmd_model(command),
    }
}

/// Exit codes: 0 ok, 1 compute error, 2 usage error.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Failure(err)) => {
            eprintln!("error: {err:#}");
            1
        }
    }
}
