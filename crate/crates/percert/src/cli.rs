//! Command-line front end.  Every subcommand resolves its settings
//! from CLI flags over an optional flat JSON config file over built-in
//! defaults, echoes the resolved configuration into its report, and
//! writes byte-deterministic output for a fixed seed at any worker
//! count.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::bound::{bound_diagnostics, BoundDiagnostics};
use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::confusion::{
    build_margin_confusion_matrix, build_smoothed_confusion_matrix, max_column_sum, mu_ratio,
    top_singular_triple, ConfusionMatrix,
};
use crate::data::{generate_synthetic, load_csv, save_csv, Dataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::eval::{evaluate_certified, EvalReport};
use crate::matrix::POWER_ITERATION_TOL;
use crate::musim::{run_mu_simulation, Generator, MuSimConfig, MuSimReport};
use crate::rng::RngStream;
use crate::smoothing::{certify, CertificationOutcome, SmoothingConfig};
use crate::train::{smooth_train, EpochLog, PerTrainConfig, TrainMode};

#[derive(Parser, Debug)]
#[command(
    name = "percert",
    version,
    about = "Randomized-smoothing certification with worst-class spectral regularization"
)]
struct Cli {
    /// Worker threads for parallel sections (0 keeps the default pool).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic Gaussian-cluster dataset as CSV.
    #[command(name = "gen-data")]
    GenData(GenDataArgs),
    /// Smooth-train an MLP from scratch and save a checkpoint.
    Train(TrainArgs),
    /// Fine-tune a checkpoint with the spectral regularizer.
    #[command(name = "finetune-per")]
    FinetunePer(FinetuneArgs),
    /// Certify every sample of a dataset.
    Certify(CertifyArgs),
    /// Certified-accuracy evaluation over noise levels and radii.
    Evaluate(EvaluateArgs),
    /// Monte Carlo study of the column-sum to spectral-norm ratio.
    #[command(name = "simulate-mu")]
    SimulateMu(SimulateMuArgs),
    /// Weight-norm generalization diagnostic.
    Bound(BoundArgs),
    /// Confusion matrix with its spectral summary.
    #[command(name = "confusion-report")]
    ConfusionReport(ConfusionArgs),
}

/// Entry point behind the binary: returns the process exit code
/// (0 success, 1 usage, 2 data/configuration, 3 numeric).
pub fn cli_main(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = if cli.workers > 0 {
        match rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build() {
            Ok(pool) => pool.install(|| dispatch(&cli.command)),
            Err(e) => Err(Error::Config(format!("worker pool: {e}"))),
        }
    } else {
        dispatch(&cli.command)
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::GenData(a) => run_gen_data(a),
        Command::Train(a) => run_train(a),
        Command::FinetunePer(a) => run_finetune(a),
        Command::Certify(a) => run_certify(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::SimulateMu(a) => run_simulate_mu(a),
        Command::Bound(a) => run_bound(a),
        Command::ConfusionReport(a) => run_confusion_report(a),
    }
}

// ---------------------------------------------------------------------------
// Config file and flag resolution.
// ---------------------------------------------------------------------------

/// Flat JSON object whose keys mirror the long CLI flag names.  CLI
/// values win over file values; unknown keys are ignored.
struct FileConfig(Map<String, Value>);

impl FileConfig {
    fn load(path: Option<&PathBuf>) -> Result<FileConfig> {
        let Some(path) = path else {
            return Ok(FileConfig(Map::new()));
        };
        let text = fs::read_to_string(path)?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
        match value {
            Value::Object(map) => Ok(FileConfig(map)),
            _ => Err(Error::Config(format!(
                "config {} must be a flat JSON object",
                path.display()
            ))),
        }
    }

    fn wrong_type(key: &str) -> Error {
        Error::Config(format!("config key {key:?} has the wrong type"))
    }

    fn f64(&self, key: &str) -> Result<Option<f64>> {
        match self.0.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Number(n)) => {
                n.as_f64().map(Some).ok_or_else(|| Self::wrong_type(key))
            }
            Some(_) => Err(Self::wrong_type(key)),
        }
    }

    fn u64(&self, key: &str) -> Result<Option<u64>> {
        match self.0.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Number(n)) => {
                n.as_u64().map(Some).ok_or_else(|| Self::wrong_type(key))
            }
            Some(_) => Err(Self::wrong_type(key)),
        }
    }

    fn usize(&self, key: &str) -> Result<Option<usize>> {
        Ok(self.u64(key)?.map(|v| v as usize))
    }

    fn bool(&self, key: &str) -> Result<Option<bool>> {
        match self.0.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Bool(b)) => Ok(Some(*b)),
            Some(_) => Err(Self::wrong_type(key)),
        }
    }

    fn string(&self, key: &str) -> Result<Option<String>> {
        match self.0.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(Self::wrong_type(key)),
        }
    }

    /// A list key accepts either a JSON array of numbers or a
    /// comma-separated string, matching the CLI flag syntax.
    fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.0.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => parse_f64_list(s).map(Some),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| v.as_f64().ok_or_else(|| Self::wrong_type(key)))
                .collect::<Result<Vec<f64>>>()
                .map(Some),
            Some(_) => Err(Self::wrong_type(key)),
        }
    }

    fn usize_list(&self, key: &str) -> Result<Option<Vec<usize>>> {
        match self.0.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => parse_usize_list(s).map(Some),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| v.as_u64().map(|u| u as usize).ok_or_else(|| Self::wrong_type(key)))
                .collect::<Result<Vec<usize>>>()
                .map(Some),
            Some(_) => Err(Self::wrong_type(key)),
        }
    }
}

/// CLI value, else config-file value, else default.
fn pick<T>(cli: Option<T>, file: Result<Option<T>>, default: T) -> Result<T> {
    Ok(match cli {
        Some(v) => v,
        None => file?.unwrap_or(default),
    })
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    let items: Result<Vec<f64>> = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Usage(format!("invalid number {t:?} in list")))
        })
        .collect();
    let items = items?;
    if items.is_empty() {
        return Err(Error::Usage("expected a non-empty comma-separated list".into()));
    }
    Ok(items)
}

fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| Error::Usage(format!("invalid count {t:?} in list")))
        })
        .collect()
}

/// Load a dataset CSV, optionally rescaling features so the maximum
/// row norm becomes exactly 1.
fn load_dataset(path: &Path, normalize: bool) -> Result<Dataset> {
    let ds = load_csv(path, None)?;
    if !normalize {
        return Ok(ds);
    }
    let b = ds.max_row_norm();
    if b == 0.0 {
        return Err(Error::Data("cannot normalize a dataset with zero features".into()));
    }
    let mut features = ds.features().clone();
    for v in features.as_mut_slice() {
        *v /= b;
    }
    Dataset::new(features, ds.labels().to_vec(), ds.num_classes())
}

/// Serialize a report as pretty JSON, to `out` when given, else to
/// stdout.  Reports carry their effective configuration, so a written
/// file is self-describing.
fn emit<T: Serialize>(report: &T, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Data(format!("serializing report: {e}")))?;
    text.push('\n');
    match out {
        Some(path) => {
            fs::write(path, &text)?;
            println!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
struct GenDataArgs {
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of classes.
    #[arg(long)]
    classes: Option<usize>,
    /// Comma-separated per-class sample counts.
    #[arg(long)]
    sizes: Option<String>,
    /// Feature dimension.
    #[arg(long)]
    dim: Option<usize>,
    /// Radius of the circle the cluster centers sit on.
    #[arg(long = "cluster-radius")]
    cluster_radius: Option<f64>,
    /// Standard deviation of each cluster.
    #[arg(long)]
    spread: Option<f64>,
    /// Probability of drawing a sample around another class's center.
    #[arg(long)]
    overlap: Option<f64>,
    /// Flat JSON config file; CLI flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Serialize)]
struct GenDataReport {
    command: &'static str,
    seed: u64,
    spec: SyntheticSpec,
    rows: usize,
    out: String,
}

fn run_gen_data(args: &GenDataArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_ref())?;
    let defaults = SyntheticSpec::default();
    let seed = pick(args.seed, file.u64("seed"), 0)?;
    let num_classes = pick(args.classes, file.usize("classes"), defaults.num_classes)?;
    let sizes_arg = match &args.sizes {
        Some(s) => Some(parse_usize_list(s)?),
        None => file.usize_list("sizes")?,
    };
    let sizes = match sizes_arg {
        Some(v) => v,
        None if num_classes == defaults.num_classes => defaults.sizes.clone(),
        None => vec![200; num_classes],
    };
    let spec = SyntheticSpec {
        num_classes,
        sizes,
        dim: pick(args.dim, file.usize("dim"), defaults.dim)?,
        radius: pick(args.cluster_radius, file.f64("cluster-radius"), defaults.radius)?,
        spread: pick(args.spread, file.f64("spread"), defaults.spread)?,
        overlap: pick(args.overlap, file.f64("overlap"), defaults.overlap)?,
    };
    let dataset = generate_synthetic(&spec, seed)?;
    save_csv(&dataset, &args.out)?;
    let report = GenDataReport {
        command: "gen-data",
        seed,
        spec,
        rows: dataset.len(),
        out: args.out.display().to_string(),
    };
    emit(&report, None)
}

// ---------------------------------------------------------------------------
// train / finetune-per
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// Validation dataset CSV.
    #[arg(long)]
    val: PathBuf,
    /// Output checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON-lines training log path.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Training noise scale.
    #[arg(long)]
    sigma: Option<f64>,
    /// Margin of the regularizer's surrogate loss.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long = "weight-decay")]
    weight_decay: Option<f64>,
    /// Comma-separated hidden layer widths.
    #[arg(long)]
    hidden: Option<String>,
    /// Noise draws per sample in the per-epoch confusion pass.
    #[arg(long = "n-noise")]
    n_noise: Option<u64>,
    /// Enable the spectral regularizer during scratch training.
    #[arg(long, action = ArgAction::SetTrue)]
    regularizer: bool,
    /// Rescale features so the maximum row norm is 1.
    #[arg(long, action = ArgAction::SetTrue)]
    normalize: bool,
    /// Flat JSON config file; CLI flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FinetuneArgs {
    /// Checkpoint to start from.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    val: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long = "weight-decay")]
    weight_decay: Option<f64>,
    #[arg(long = "n-noise")]
    n_noise: Option<u64>,
    /// Disable the spectral regularizer (control arm).
    #[arg(long = "no-regularizer", action = ArgAction::SetTrue)]
    no_regularizer: bool,
    #[arg(long, action = ArgAction::SetTrue)]
    normalize: bool,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Serialize)]
struct TrainReport {
    command: &'static str,
    seed: u64,
    data: String,
    val: String,
    model: Option<String>,
    normalize: bool,
    cfg: PerTrainConfig,
    final_epoch: Option<EpochLog>,
    out: String,
    log: Option<String>,
}

#[allow(clippy::too_many_arguments)]
fn train_common(
    command: &'static str,
    mode: TrainMode,
    cfg: PerTrainConfig,
    seed: u64,
    normalize: bool,
    data: &Path,
    val: &Path,
    model: Option<&Path>,
    out: &Path,
    log: Option<&Path>,
) -> Result<()> {
    let train_set = load_dataset(data, normalize)?;
    let val_set = load_dataset(val, normalize)?;
    let initial = match model {
        Some(path) => Some(load_checkpoint(path)?),
        None => None,
    };
    let (network, logs) = smooth_train(&train_set, &val_set, &cfg, seed, initial)?;
    save_checkpoint(&network, out)?;
    if let Some(log_path) = log {
        let mut text = String::new();
        for entry in &logs {
            text.push_str(
                &serde_json::to_string(entry)
                    .map_err(|e| Error::Data(format!("serializing log: {e}")))?,
            );
            text.push('\n');
        }
        fs::write(log_path, text)?;
    }
    let report = TrainReport {
        command,
        seed,
        data: data.display().to_string(),
        val: val.display().to_string(),
        model: model.map(|p| p.display().to_string()),
        normalize,
        cfg,
        final_epoch: logs.last().cloned(),
        out: out.display().to_string(),
        log: log.map(|p| p.display().to_string()),
    };
    emit(&report, None)?;
    if mode == TrainMode::Finetune && logs.iter().any(|l| !l.regularizer_active) {
        eprintln!("note: regularizer inactive in at least one epoch (zero confusion matrix or disabled)");
    }
    Ok(())
}

fn run_train(args: &TrainArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_ref())?;
    let d = PerTrainConfig::default();
    let hidden = match &args.hidden {
        Some(s) => parse_usize_list(s)?,
        None => file.usize_list("hidden")?.unwrap_or(d.hidden.clone()),
    };
    let cfg = PerTrainConfig {
        epochs: pick(args.epochs, file.usize("epochs"), d.epochs)?,
        batch_size: pick(args.batch_size, file.usize("batch-size"), d.batch_size)?,
        gamma: pick(args.gamma, file.f64("gamma"), d.gamma)?,
        sigma_v: pick(args.sigma, file.f64("sigma"), d.sigma_v)?,
        n_noise_confusion: pick(args.n_noise, file.u64("n-noise"), d.n_noise_confusion)?,
        learning_rate: pick(args.lr, file.f64("lr"), d.learning_rate)?,
        momentum: pick(args.momentum, file.f64("momentum"), d.momentum)?,
        weight_decay: pick(args.weight_decay, file.f64("weight-decay"), d.weight_decay)?,
        mode: TrainMode::Scratch,
        regularizer: args.regularizer || file.bool("regularizer")?.unwrap_or(false),
        hidden,
    };
    let seed = pick(args.seed, file.u64("seed"), 0)?;
    let normalize = args.normalize || file.bool("normalize")?.unwrap_or(false);
    train_common(
        "train",
        TrainMode::Scratch,
        cfg,
        seed,
        normalize,
        &args.data,
        &args.val,
        None,
        &args.out,
        args.log.as_deref(),
    )
}

fn run_finetune(args: &FinetuneArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_ref())?;
    let d = PerTrainConfig::default();
    let cfg = PerTrainConfig {
        epochs: pick(args.epochs, file.usize("epochs"), 10)?,
        batch_size: pick(args.batch_size, file.usize("batch-size"), d.batch_size)?,
        gamma: pick(args.gamma, file.f64("gamma"), d.gamma)?,
        sigma_v: pick(args.sigma, file.f64("sigma"), d.sigma_v)?,
        n_noise_confusion: pick(args.n_noise, file.u64("n-noise"), d.n_noise_confusion)?,
        learning_rate: pick(args.lr, file.f64("lr"), d.learning_rate)?,
        momentum: pick(args.momentum, file.f64("momentum"), d.momentum)?,
        weight_decay: pick(args.weight_decay, file.f64("weight-decay"), d.weight_decay)?,
        mode: TrainMode::Finetune,
        regularizer: !(args.no_regularizer || file.bool("no-regularizer")?.unwrap_or(false)),
        hidden: vec![],
    };
    let seed = pick(args.seed, file.u64("seed"), 0)?;
    let normalize = args.normalize || file.bool("normalize")?.unwrap_or(false);
    train_common(
        "finetune-per",
        TrainMode::Finetune,
        cfg,
        seed,
        normalize,
        &args.data,
        &args.val,
        Some(&args.model),
        &args.out,
        args.log.as_deref(),
    )
}

// ---------------------------------------------------------------------------
// certify
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
struct CertifyArgs {
    /// Checkpoint to certify.
    #[arg(long)]
    model: PathBuf,
    /// Dataset CSV to certify sample by sample.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Smoothing noise scale.
    #[arg(long)]
    sigma: Option<f64>,
    /// Selection draws.
    #[arg(long)]
    n0: Option<u64>,
    /// Estimation draws.
    #[arg(long)]
    n: Option<u64>,
    /// Confidence budget.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, action = ArgAction::SetTrue)]
    normalize: bool,
    /// Report path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Serialize)]
struct CertifyRow {
    index: usize,
    label: usize,
    #[serde(flatten)]
    outcome: CertificationOutcome,
}

#[derive(Serialize)]
struct CertifyReport {
    command: &'static str,
    seed: u64,
    model: String,
    data: String,
    normalize: bool,
    smoothing: SmoothingConfig,
    abstention_rate: f64,
    outcomes: Vec<CertifyRow>,
}

fn resolve_smoothing(
    sigma: Option<f64>,
    n0: Option<u64>,
    n: Option<u64>,
    alpha: Option<f64>,
    file: &FileConfig,
) -> Result<SmoothingConfig> {
    let d = SmoothingConfig::default();
    Ok(SmoothingConfig {
        sigma_v: pick(sigma, file.f64("sigma"), d.sigma_v)?,
        n_selection: pick(n0, file.u64("n0"), d.n_selection)?,
        n_estimation: pick(n, file.u64("n"), d.n_estimation)?,
        alpha: pick(alpha, file.f64("alpha"), d.alpha)?,
        gamma: 0.0,
    })
}

fn run_certify(args: &CertifyArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_ref())?;
    let smoothing = resolve_smoothing(args.sigma, args.n0, args.n, args.alpha, &file)?;
    smoothing.validate()?;
    let seed = pick(args.seed, file.u64("seed"), 0)?;
    let normalize = args.normalize || file.bool("normalize")?.unwrap_or(false);
    let net = load_checkpoint(&args.model)?;
    let dataset = load_dataset(&args.data, normalize)?;
    let outcomes: Result<Vec<CertificationOutcome>> = (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            let mut stream = RngStream::new(seed, i as u64);
            certify(&net, dataset.feature(i), &smoothing, &mut stream)
        })
        .collect();
    let outcomes = outcomes?;
    let abstained = outcomes.iter().filter(|o| o.is_abstain()).count();
    let rows: Vec<CertifyRow> = outcomes
        .into_iter()
        .enumerate()
        .map(|(index, outcome)| CertifyRow { index, label: dataset.label(index), outcome })
        .collect();
    let report = CertifyReport {
        command: "certify",
        seed,
        model: args.model.display().to_string(),
        data: args.data.display().to_string(),
        normalize,
        smoothing,
        abstention_rate: abstained as f64 / rows.len().max(1) as f64,
        outcomes: rows,
    };
    emit(&report, args.out.as_deref())
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Test dataset CSV.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated noise scales.
    #[arg(long)]
    sigma: Option<String>,
    /// Comma-separated certification radii.
    #[arg(long)]
    radii: Option<String>,
    #[arg(long)]
    n0: Option<u64>,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, action = ArgAction::SetTrue)]
    normalize: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Serialize)]
struct EvaluateReport {
    command: &'static str,
    model: String,
    data: String,
    normalize: bool,
    sigmas: Vec<f64>,
    report: EvalReport,
}

fn run_evaluate(args: &EvaluateArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_ref())?;
    let sigmas = match &args.sigma {
        Some(s) => parse_f64_list(s)?,
        None => file.f64_list("sigma")?.unwrap_or_else(|| vec![0.25]),
    };
    let radii = match &args.radii {
        Some(s) => parse_f64_list(s)?,
        None => file
            .f64_list("radii")?
            .unwrap_or_else(|| vec![0.12, 0.25, 0.5, 1.0]),
    };
    let smoothing = resolve_smoothing(None, args.n0, args.n, args.alpha, &file)?;
    let seed = pick(args.seed, file.u64("seed"), 0)?;
    let normalize = args.normalize || file.bool("normalize")?.unwrap_or(false);
    let net = load_checkpoint(&args.model)?;
    let dataset = load_dataset(&args.data, normalize)?;
    let report = evaluate_certified(&net, &dataset, &sigmas, &radii, &smoothing, seed)?;
    let wrapped = EvaluateReport {
        command: "evaluate",
        model: args.model.display().to_string(),
        data: args.data.display().to_string(),
        normalize,
        sigmas,
        report,
    };
    emit(&wrapped, args.out.as_deref())
}

// ---------------------------------------------------------------------------
// simulate-mu
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
struct SimulateMuArgs {
    /// Comma-separated matrix dimensions.
    #[arg(long)]
    dims: Option<String>,
    /// Trials per dimension.
    #[arg(long)]
    trials: Option<u64>,
    /// Random matrix model: dirichlet_column or uniform_rescaled.
    #[arg(long)]
    generator: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Serialize)]
struct SimulateMuReport {
    command: &'static str,
    report: MuSimReport,
}

fn run_simulate_mu(args: &SimulateMuArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_ref())?;
    let d = MuSimConfig::default();
    let dims = match &args.dims {
        Some(s) => parse_usize_list(s)?,
        None => file.usize_list("dims")?.unwrap_or(d.dims.clone()),
    };
    let generator = match &args.generator {
        Some(s) => s.parse::<Generator>()?,
        None => match file.string("generator")? {
            Some(s) => s.parse::<Generator>()?,
            None => d.generator,
        },
    };
    let cfg = MuSimConfig {
        dims,
        trials: pick(args.trials, file.u64("trials"), d.trials)?,
        generator,
        seed: pick(args.seed, file.u64("seed"), d.seed)?,
    };
    let report = run_mu_simulation(&cfg)?;
    emit(
        &SimulateMuReport { command: "simulate-mu", report },
        args.out.as_deref(),
    )
}

// ---------------------------------------------------------------------------
// bound
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
struct BoundArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Margin the bound is evaluated at.
    #[arg(long)]
    gamma: Option<f64>,
    /// Confidence level of the bound.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, action = ArgAction::SetTrue)]
    normalize: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Serialize)]
struct BoundReport {
    command: &'static str,
    model: String,
    data: String,
    normalize: bool,
    report: BoundDiagnostics,
}

fn run_bound(args: &BoundArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_ref())?;
    let gamma = pick(args.gamma, file.f64("gamma"), 0.1)?;
    let delta = pick(args.delta, file.f64("delta"), 0.05)?;
    let normalize = args.normalize || file.bool("normalize")?.unwrap_or(false);
    let net = load_checkpoint(&args.model)?;
    let dataset = load_dataset(&args.data, normalize)?;
    let report = bound_diagnostics(&net, &dataset, gamma, delta)?;
    let wrapped = BoundReport {
        command: "bound",
        model: args.model.display().to_string(),
        data: args.data.display().to_string(),
        normalize,
        report,
    };
    emit(&wrapped, args.out.as_deref())
}

// ---------------------------------------------------------------------------
// confusion-report
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
struct ConfusionArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Noise scale; 0 gives the deterministic margin matrix.
    #[arg(long)]
    sigma: Option<f64>,
    /// Margin handicap applied to the true class.
    #[arg(long)]
    gamma: Option<f64>,
    /// Noise draws per sample when sigma > 0.
    #[arg(long = "n-noise")]
    n_noise: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, action = ArgAction::SetTrue)]
    normalize: bool,
    /// Optional CSV export of the matrix entries.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Serialize)]
struct ConfusionReportOut {
    command: &'static str,
    model: String,
    data: String,
    normalize: bool,
    sigma: f64,
    gamma: f64,
    n_noise: u64,
    seed: u64,
    sigma_max: f64,
    max_column_sum: f64,
    /// Ratio of max column sum to sigma_max; absent for a zero matrix.
    mu: Option<f64>,
    degenerate: bool,
    matrix: Vec<Vec<f64>>,
    csv: Option<String>,
}

fn matrix_rows(c: &ConfusionMatrix) -> Vec<Vec<f64>> {
    let d = c.dim();
    (0..d)
        .map(|i| (0..d).map(|j| c.get(i, j)).collect())
        .collect()
}

fn run_confusion_report(args: &ConfusionArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_ref())?;
    let sigma = pick(args.sigma, file.f64("sigma"), 0.0)?;
    let gamma = pick(args.gamma, file.f64("gamma"), 0.0)?;
    let n_noise = pick(args.n_noise, file.u64("n-noise"), 100)?;
    let seed = pick(args.seed, file.u64("seed"), 0)?;
    let normalize = args.normalize || file.bool("normalize")?.unwrap_or(false);
    let net = load_checkpoint(&args.model)?;
    let dataset = load_dataset(&args.data, normalize)?;
    let confusion = if sigma > 0.0 {
        let mut stream = RngStream::new(seed, 0);
        build_smoothed_confusion_matrix(&net, &dataset, gamma, sigma, n_noise, &mut stream)?
    } else {
        build_margin_confusion_matrix(&net, &dataset, gamma)?
    };
    let triple = top_singular_triple(&confusion, POWER_ITERATION_TOL);
    if let Some(csv_path) = &args.csv {
        fs::write(csv_path, confusion.to_csv())?;
    }
    let report = ConfusionReportOut {
        command: "confusion-report",
        model: args.model.display().to_string(),
        data: args.data.display().to_string(),
        normalize,
        sigma,
        gamma,
        n_noise,
        seed,
        sigma_max: triple.sigma_max,
        max_column_sum: max_column_sum(&confusion),
        mu: mu_ratio(&confusion).ok(),
        degenerate: triple.degenerate,
        matrix: matrix_rows(&confusion),
        csv: args.csv.as_ref().map(|p| p.display().to_string()),
    };
    emit(&report, args.out.as_deref())
}
