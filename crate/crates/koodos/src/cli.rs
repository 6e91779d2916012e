//! Config-driven experiment commands: generate, train, eval, extrapolate,
//! spectrum. One JSON config per run keeps experiment provenance in a
//! single artifact; flags only select the command and paths. Every
//! failure exits nonzero with one machine-parsable `error[<category>]`
//! line on stderr. `KOODOS_SEED` overrides the config seed.

use crate::checkpoint::{self, CheckpointError};
use crate::diffcore::DiffError;
use crate::domains::{
    generate_moons_domain, load_sequence, sample_timestamps, save_sequence, split_train_test,
    DataError, Domain, DomainSequence,
};
use crate::nets::{MlpSpec, NetError, TaskKind};
use crate::spectral::assess_stability;
use crate::train::{
    baseline_lastdomain, baseline_offline, derive_seed, evaluate_fixed_params, train_joint,
    KoodosConfig, KoodosSystem, TrainError,
};
use clap::{Args, Parser, Subcommand};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

pub const METRICS_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Config,
    Io,
    Data,
    Checkpoint,
    Dimension,
    Train,
    Internal,
}

impl ErrorCategory {
    fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Usage => "usage",
            ErrorCategory::Config => "config",
            ErrorCategory::Io => "io",
            ErrorCategory::Data => "data",
            ErrorCategory::Checkpoint => "checkpoint",
            ErrorCategory::Dimension => "dimension",
            ErrorCategory::Train => "train",
            ErrorCategory::Internal => "internal",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub category: ErrorCategory,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "error[{}]: {}", self.category.as_str(), self.message)
    }
}

impl std::error::Error for CliError {}

fn err(category: ErrorCategory, message: impl Into<String>) -> CliError {
    CliError {
        category,
        message: message.into(),
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        let category = match &e {
            DataError::Io { .. } => ErrorCategory::Io,
            _ => ErrorCategory::Data,
        };
        err(category, e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        let category = match &e {
            CheckpointError::Io { .. } => ErrorCategory::Io,
            _ => ErrorCategory::Checkpoint,
        };
        err(category, e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        let category = match &e {
            TrainError::Diff(DiffError::ShapeMismatch { .. })
            | TrainError::Diff(DiffError::LengthMismatch { .. })
            | TrainError::Net(NetError::Dimension { .. }) => ErrorCategory::Dimension,
            TrainError::Data(DataError::Io { .. }) => ErrorCategory::Io,
            TrainError::Data(_) => ErrorCategory::Data,
            _ => ErrorCategory::Train,
        };
        err(category, e.to_string())
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        TrainError::from(e).into()
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "koodos",
    about = "Continuous temporal domain generalization experiments",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write the config's dataset as a dataset directory
    Generate(ConfigArgs),
    /// Train a system: checkpoint, training-history CSV, metrics JSON
    Train(ConfigArgs),
    /// Evaluate a checkpoint on the config's dataset split
    Eval(EvalArgs),
    /// Generalize a checkpoint at given times and export the
    /// PCA-projected parameter trajectory as CSV
    Extrapolate(ExtrapolateArgs),
    /// Eigenvalue spectrum CSV and a stability verdict for a checkpoint
    Spectrum(SpectrumArgs),
}

#[derive(Args, Debug)]
pub struct ConfigArgs {
    /// Run configuration (JSON)
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (defaults to the config's output_dir)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Which chronological split to score: train, test or all
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExtrapolateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Comma-separated query times, e.g. --times 50.5,51,60
    #[arg(long)]
    pub times: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Dataset section of the run config: either generator parameters or a
/// path to a saved dataset directory.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Moons(MoonsConfig),
    Path { path: PathBuf },
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MoonsConfig {
    pub domains: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub n_per_class: usize,
    pub noise_sd: f64,
    pub degrees_per_unit: f64,
}

impl Default for MoonsConfig {
    fn default() -> Self {
        MoonsConfig {
            domains: 50,
            t_min: 0.0,
            t_max: 50.0,
            n_per_class: 500,
            noise_sd: 0.1,
            degrees_per_unit: 18.0,
        }
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    pub task: TaskKind,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input: 2,
            hidden: vec![50, 50, 50],
            output: 1,
            task: TaskKind::BinaryClassification,
        }
    }
}

impl ModelConfig {
    pub fn to_spec(&self) -> Result<MlpSpec, CliError> {
        MlpSpec::new(self.input, self.hidden.clone(), self.output, self.task)
            .map_err(|e| err(ErrorCategory::Config, e.to_string()))
    }
}

fn default_test_fraction() -> f64 {
    0.3
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub koodos: KoodosConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| err(ErrorCategory::Io, format!("cannot read {}: {e}", path.display())))?;
        let mut config: RunConfig = serde_json::from_str(&raw)
            .map_err(|e| err(ErrorCategory::Config, format!("{}: {e}", path.display())))?;
        if let Ok(seed) = std::env::var("KOODOS_SEED") {
            let seed: u64 = seed.parse().map_err(|_| {
                err(
                    ErrorCategory::Config,
                    format!("KOODOS_SEED must be an unsigned integer, got {seed:?}"),
                )
            })?;
            config.koodos.seed = seed;
        }
        config
            .koodos
            .validate()
            .map_err(|e| err(ErrorCategory::Config, e.to_string()))?;
        if !(0.0..=1.0).contains(&config.test_fraction) {
            return Err(err(
                ErrorCategory::Config,
                format!("test_fraction must be in [0, 1], got {}", config.test_fraction),
            ));
        }
        Ok(config)
    }

    fn out_dir(&self, flag: &Option<PathBuf>) -> Result<PathBuf, CliError> {
        flag.clone()
            .or_else(|| self.output_dir.clone())
            .ok_or_else(|| {
                err(
                    ErrorCategory::Usage,
                    "no output directory: pass --out or set output_dir in the config",
                )
            })
    }

    /// Build or load the full domain sequence.
    pub fn resolve_dataset(&self) -> Result<DomainSequence, CliError> {
        match &self.dataset {
            DatasetConfig::Moons(m) => build_moons_sequence(m, self.koodos.seed),
            DatasetConfig::Path { path } => Ok(load_sequence(path)?),
        }
    }
}

/// Deterministic rotating-moons sequence from generator parameters.
pub fn build_moons_sequence(cfg: &MoonsConfig, seed: u64) -> Result<DomainSequence, CliError> {
    let timestamps = sample_timestamps(cfg.domains, cfg.t_min, cfg.t_max, derive_seed(seed, 1000))?;
    let domains: Vec<Domain> = timestamps
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            generate_moons_domain(
                t,
                cfg.n_per_class,
                cfg.noise_sd,
                cfg.degrees_per_unit,
                derive_seed(seed, 2000 + k as u64),
            )
        })
        .collect::<Result<_, _>>()?;
    Ok(DomainSequence::new("two-moons", domains)?)
}

#[derive(serde::Serialize, serde::Deserialize)]
pub struct PerDomainMetric {
    pub t: f64,
    pub metric: f64,
}

/// The stable metrics JSON schema.
#[derive(serde::Serialize, serde::Deserialize)]
pub struct MetricsReport {
    pub format_version: u32,
    pub dataset: String,
    pub seed: u64,
    pub metric: String,
    pub per_domain: Vec<PerDomainMetric>,
    pub aggregate: f64,
    pub baseline_offline: f64,
    pub baseline_lastdomain: f64,
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| err(ErrorCategory::Io, format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, contents)
        .map_err(|e| err(ErrorCategory::Io, format!("{}: {e}", path.display())))
}

pub fn cmd_generate(args: &ConfigArgs) -> Result<(), CliError> {
    let config = RunConfig::load(&args.config)?;
    let out = config.out_dir(&args.out)?;
    let seq = config.resolve_dataset()?;
    let dir = out.join("dataset");
    save_sequence(&seq, &dir)?;
    println!(
        "wrote {} domains spanning [{:.6}, {:.6}] to {}",
        seq.len(),
        seq.timestamps().first().unwrap_or(&f64::NAN),
        seq.timestamps().last().unwrap_or(&f64::NAN),
        dir.display()
    );
    Ok(())
}

/// Train, then score on the held-out split; returns the metrics report.
fn train_and_metrics(
    config: &RunConfig,
    out: &Path,
) -> Result<(KoodosSystem, Option<MetricsReport>), CliError> {
    let seq = config.resolve_dataset()?;
    let (train_seq, test_seq) = split_train_test(&seq, config.test_fraction)?;
    if train_seq.is_empty() {
        return Err(err(ErrorCategory::Data, "empty training split"));
    }
    let spec = config.model.to_spec()?;
    let system = train_joint(&train_seq, &spec, &config.koodos)?;

    checkpoint::save_system(&system, &out.join("checkpoint.json"))?;
    write_file(&out.join("history.csv"), &history_csv(&system))?;

    let metrics = if test_seq.is_empty() {
        None
    } else {
        Some(compute_metrics(&system, &train_seq, &test_seq, &seq.name, &config.koodos)?)
    };
    if let Some(m) = &metrics {
        write_file(&out.join("metrics.json"), &metrics_json(m))?;
    }
    Ok((system, metrics))
}

pub fn cmd_train(args: &ConfigArgs) -> Result<(), CliError> {
    let config = RunConfig::load(&args.config)?;
    let out = config.out_dir(&args.out)?;
    std::fs::create_dir_all(&out)
        .map_err(|e| err(ErrorCategory::Io, format!("{}: {e}", out.display())))?;
    let (system, metrics) = train_and_metrics(&config, &out)?;
    println!(
        "trained {} domains, {} joint epochs; checkpoint at {}",
        system.domain_count(),
        system.history.len(),
        out.join("checkpoint.json").display()
    );
    if let Some(m) = metrics {
        println!(
            "test {}: {:.4} (offline {:.4}, last-domain {:.4})",
            m.metric, m.aggregate, m.baseline_offline, m.baseline_lastdomain
        );
    }
    Ok(())
}

fn compute_metrics(
    system: &KoodosSystem,
    train_seq: &DomainSequence,
    test_seq: &DomainSequence,
    dataset_name: &str,
    koodos: &KoodosConfig,
) -> Result<MetricsReport, CliError> {
    let metric = system.default_metric();
    let report = system.evaluate(test_seq, metric)?;
    let offline = baseline_offline(
        train_seq,
        &system.spec,
        koodos.warm_epochs,
        koodos.lr_predictive,
        derive_seed(koodos.seed, 3000),
    )?;
    let last = baseline_lastdomain(
        train_seq,
        &system.spec,
        koodos.warm_epochs,
        koodos.lr_predictive,
        derive_seed(koodos.seed, 3001),
    )?;
    let offline_report = evaluate_fixed_params(&offline, test_seq, metric)?;
    let last_report = evaluate_fixed_params(&last, test_seq, metric)?;
    Ok(MetricsReport {
        format_version: METRICS_FORMAT_VERSION,
        dataset: dataset_name.to_string(),
        seed: koodos.seed,
        metric: metric.to_string(),
        per_domain: report
            .per_domain
            .iter()
            .map(|(t, m)| PerDomainMetric { t: *t, metric: *m })
            .collect(),
        aggregate: report.aggregate,
        baseline_offline: offline_report.aggregate,
        baseline_lastdomain: last_report.aggregate,
    })
}

pub fn metrics_json(m: &MetricsReport) -> String {
    serde_json::to_string_pretty(m).expect("metrics serialization cannot fail")
}

pub fn history_csv(system: &KoodosSystem) -> String {
    let mut out = String::from("epoch,L_intri,L_integ,L_recon,L_dyna,L_consis,combined\n");
    for r in &system.history {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.epoch, r.intri, r.integ, r.recon, r.dyna, r.consis, r.combined
        );
    }
    out
}

pub fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let config = RunConfig::load(&args.config)?;
    let system = checkpoint::load_system(&args.checkpoint)?;
    let seq = config.resolve_dataset()?;
    let (train_seq, test_seq) = split_train_test(&seq, config.test_fraction)?;
    let scored = match args.split.as_str() {
        "test" => test_seq,
        "train" => train_seq.clone(),
        "all" => seq.clone(),
        other => {
            return Err(err(
                ErrorCategory::Usage,
                format!("unknown split {other:?} (expected train, test or all)"),
            ))
        }
    };
    if scored.is_empty() {
        return Err(err(ErrorCategory::Data, "selected split has no domains"));
    }
    let metrics = compute_metrics(&system, &train_seq, &scored, &seq.name, &system.config)?;
    let json = metrics_json(&metrics);
    println!("{json}");
    if let Some(out) = args.out.clone().or(config.output_dir) {
        write_file(&out.join("metrics.json"), &json)?;
    }
    Ok(())
}

pub fn cmd_extrapolate(args: &ExtrapolateArgs) -> Result<(), CliError> {
    let system = checkpoint::load_system(&args.checkpoint)?;
    let times = parse_times(&args.times)?;
    if times.len() < 2 {
        return Err(err(
            ErrorCategory::Usage,
            "extrapolation needs at least two times to project a trajectory",
        ));
    }
    let points: Vec<Vec<f64>> = times
        .iter()
        .map(|&t| Ok(system.generalize(t)?.theta().data().to_vec()))
        .collect::<Result<_, TrainError>>()
        .map_err(CliError::from)?;
    let proj = crate::spectral::pca_project(&points, 2)
        .map_err(|e| err(ErrorCategory::Train, e.to_string()))?;
    let mut csv = String::from("t,c1,c2\n");
    for (t, p) in times.iter().zip(&proj.points) {
        let _ = writeln!(csv, "{},{},{}", t, p[0], p[1]);
    }
    let out = args
        .out
        .clone()
        .ok_or_else(|| err(ErrorCategory::Usage, "pass --out for the trajectory CSV"))?;
    let path = out.join("trajectory.csv");
    write_file(&path, &csv)?;
    println!(
        "wrote {} projected states to {} (explained variance ratio {:.4}, {:.4})",
        times.len(),
        path.display(),
        proj.explained_variance_ratio[0],
        proj.explained_variance_ratio[1]
    );
    Ok(())
}

fn parse_times(spec: &str) -> Result<Vec<f64>, CliError> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| err(ErrorCategory::Usage, format!("bad time value {s:?}")))
        })
        .collect()
}

pub fn cmd_spectrum(args: &SpectrumArgs) -> Result<(), CliError> {
    let system = checkpoint::load_system(&args.checkpoint)?;
    let k = system
        .operator
        .materialize()
        .map_err(|e| err(ErrorCategory::Train, e.to_string()))?;
    let report = assess_stability(&k).map_err(|e| err(ErrorCategory::Train, e.to_string()))?;
    let mut csv = String::from("re,im\n");
    for (re, im) in &report.eigenvalues {
        let _ = writeln!(csv, "{re},{im}");
    }
    if let Some(out) = &args.out {
        write_file(&out.join("spectrum.csv"), &csv)?;
    }
    println!("stability: {}", report.classification);
    println!("max-real-part: {:.6e}", report.max_real_part);
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Extrapolate(a) => cmd_extrapolate(a),
        Command::Spectrum(a) => cmd_spectrum(a),
    }
}

/// Binary entry point: parse, run, map errors to categorized one-liners.
pub fn main_entry() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own help/usage text
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
    }
}
