//! Command line interface: dataset generation, crossvalidation, training,
//! prediction, and runtime benchmarking.

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rmm::harness::{
    bench_runtime, crossvalidate, write_results_csv, write_runtimes_csv, write_summary_json,
    HyperSpace, ModelKind, TrainedModel, FIT_MAX_ITERS,
};
use rmm::seed::derive_seed;
use rmm::tasks::{
    gen_copy, gen_latch, gen_repeat_copy, gen_shift_benchmark, read_dataset, write_dataset,
    TaskSample,
};
use rmm::Error;

#[derive(Parser)]
#[command(
    name = "rmm",
    version,
    about = "Train and evaluate reservoir memory machines and echo state baselines"
)]
struct Cli {
    /// JSON config file supplying defaults for any option; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a benchmark dataset as JSON.
    Generate(GenerateArgs),
    /// Run nested crossvalidation with random hyperparameter search.
    Crossval(CrossvalArgs),
    /// Train one model with explicit hyperparameters and save it.
    Train(TrainArgs),
    /// Predict with a saved model and report the error against a dataset.
    Predict(PredictArgs),
    /// Time training and prediction on shift sequences of growing length.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Task to generate: latch, copy, repeat_copy, or shift.
    #[arg(long)]
    task: Option<String>,
    /// Number of samples to draw.
    #[arg(long)]
    n: Option<usize>,
    /// Master seed for the sample contents.
    #[arg(long)]
    seed: Option<u64>,
    /// Output JSON path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Largest latch sequence length.
    #[arg(long)]
    max_len: Option<usize>,
    /// Spikes per latch sequence.
    #[arg(long)]
    n_spikes: Option<usize>,
    /// Largest payload length for copy and repeat_copy.
    #[arg(long)]
    max_payload: Option<usize>,
    /// Payload channels for copy, repeat_copy, and shift.
    #[arg(long)]
    bits: Option<usize>,
    /// Largest repeat count for repeat_copy.
    #[arg(long)]
    max_repeats: Option<usize>,
    /// Sequence length for shift.
    #[arg(long)]
    length: Option<usize>,
}

#[derive(Args)]
struct CrossvalArgs {
    /// Dataset JSON produced by `generate`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Model family: esn, esgru, or rmm.
    #[arg(long)]
    model: Option<String>,
    /// Outer folds; the dataset size must be divisible by this.
    #[arg(long)]
    folds: Option<usize>,
    /// Random search trials per fold.
    #[arg(long)]
    trials: Option<usize>,
    /// Inner folds scoring each trial.
    #[arg(long)]
    inner_folds: Option<usize>,
    /// Master seed for the search.
    #[arg(long)]
    seed: Option<u64>,
    /// Reservoir units.
    #[arg(long)]
    reservoir_size: Option<usize>,
    /// Comma-separated candidate memory sizes.
    #[arg(long)]
    memory_sizes: Option<String>,
    /// Output prefix; writes <prefix>.csv and <prefix>.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset JSON produced by `generate`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Model family: esn, esgru, or rmm.
    #[arg(long)]
    model: Option<String>,
    /// Output path for the trained model JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reservoir units.
    #[arg(long)]
    reservoir_size: Option<usize>,
    /// Input weight magnitude.
    #[arg(long)]
    input_weight: Option<f64>,
    /// Cycle edge weight.
    #[arg(long)]
    cycle_weight: Option<f64>,
    /// Jump edge weight.
    #[arg(long)]
    jump_weight: Option<f64>,
    /// Jump length; defaults to reservoir_size / 2 clamped to [2, 7].
    #[arg(long)]
    jump_length: Option<usize>,
    /// Ridge regularization.
    #[arg(long)]
    lambda: Option<f64>,
    /// Memory rows for the rmm model.
    #[arg(long)]
    memory_size: Option<usize>,
    /// Alternating pass limit for the rmm model.
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Args)]
struct PredictArgs {
    /// Dataset JSON with inputs and reference targets.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Trained model JSON produced by `train`.
    #[arg(long)]
    model_file: Option<PathBuf>,
    /// Optional output path for the predicted sequences.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Model family: esn, esgru, or rmm.
    #[arg(long)]
    model: Option<String>,
    /// Comma-separated sequence lengths.
    #[arg(long)]
    lengths: Option<String>,
    /// Repeats per length.
    #[arg(long)]
    repeats: Option<usize>,
    /// Reservoir units.
    #[arg(long)]
    reservoir_size: Option<usize>,
    /// Master seed for the benchmark sequences.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Defaults loaded from the optional JSON config file. Keys use the flag
/// names with underscores, e.g. `{"task": "latch", "max_len": 100}`.
#[derive(Default)]
struct Config(serde_json::Map<String, Value>);

impl Config {
    fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let value: Value = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        match value {
            Value::Object(map) => Ok(Self(map)),
            _ => bail!("config {} must be a JSON object", path.display()),
        }
    }

    fn get<T: DeserializeOwned>(&self, key: &str) -> anyhow::Result<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(value) => serde_json::from_value(value.clone())
                .map(Some)
                .with_context(|| format!("config key \"{key}\"")),
        }
    }
}

/// Flag value if given, else config value, else the default.
fn resolve<T: DeserializeOwned>(
    flag: Option<T>,
    cfg: &Config,
    key: &str,
    default: T,
) -> anyhow::Result<T> {
    match flag {
        Some(v) => Ok(v),
        None => Ok(cfg.get(key)?.unwrap_or(default)),
    }
}

/// Flag value if given, else config value, else an error naming both.
fn resolve_required<T: DeserializeOwned>(
    flag: Option<T>,
    cfg: &Config,
    key: &str,
) -> anyhow::Result<T> {
    match flag {
        Some(v) => Ok(v),
        None => cfg.get(key)?.ok_or_else(|| {
            anyhow!(
                "missing --{} (or config key \"{key}\")",
                key.replace('_', "-")
            )
        }),
    }
}

fn parse_usize_list(text: &str) -> anyhow::Result<Vec<usize>> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .with_context(|| format!("invalid list entry '{part}'"))
        })
        .collect()
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let cfg = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Generate(args) => run_generate(args, &cfg),
        Command::Crossval(args) => run_crossval(args, &cfg),
        Command::Train(args) => run_train(args, &cfg),
        Command::Predict(args) => run_predict(args, &cfg),
        Command::Bench(args) => run_bench(args, &cfg),
    }
}

fn run_generate(args: GenerateArgs, cfg: &Config) -> anyhow::Result<()> {
    let task: String = resolve_required(args.task, cfg, "task")?;
    let count = resolve(args.n, cfg, "n", 200)?;
    let seed = resolve(args.seed, cfg, "seed", 1u64)?;
    let out: PathBuf = resolve_required(args.out, cfg, "out")?;
    let max_len = resolve(args.max_len, cfg, "max_len", 200)?;
    let n_spikes = resolve(args.n_spikes, cfg, "n_spikes", 3)?;
    let max_payload = resolve(args.max_payload, cfg, "max_payload", 10)?;
    let bits = resolve(args.bits, cfg, "bits", 8)?;
    let max_repeats = resolve(args.max_repeats, cfg, "max_repeats", 3)?;
    let length = resolve(args.length, cfg, "length", 100)?;

    let canonical = task.to_lowercase().replace('-', "_");
    let mut samples: Vec<TaskSample> = Vec::with_capacity(count);
    for i in 0..count {
        let sub_seed = derive_seed(seed, "data", i as u64);
        let sample = match canonical.as_str() {
            "latch" => gen_latch(sub_seed, max_len, n_spikes)?,
            "copy" => gen_copy(sub_seed, max_payload, bits)?,
            "repeat_copy" => gen_repeat_copy(sub_seed, max_payload, bits, max_repeats)?,
            "shift" => gen_shift_benchmark(sub_seed, length, bits)?,
            _ => return Err(Error::UnknownTask(task).into()),
        };
        samples.push(sample);
    }
    write_dataset(&out, &samples)?;
    println!("wrote {count} {canonical} samples to {}", out.display());
    Ok(())
}

fn run_crossval(args: CrossvalArgs, cfg: &Config) -> anyhow::Result<()> {
    let data: PathBuf = resolve_required(args.data, cfg, "data")?;
    let model: String = resolve(args.model, cfg, "model", "rmm".into())?;
    let folds = resolve(args.folds, cfg, "folds", 20)?;
    let trials = resolve(args.trials, cfg, "trials", 10)?;
    let inner_folds = resolve(args.inner_folds, cfg, "inner_folds", 3)?;
    let seed = resolve(args.seed, cfg, "seed", 1u64)?;
    let reservoir_size = resolve(args.reservoir_size, cfg, "reservoir_size", 128)?;
    let memory_sizes: Option<String> = match args.memory_sizes {
        Some(v) => Some(v),
        None => cfg.get("memory_sizes")?,
    };
    let out: PathBuf = resolve_required(args.out, cfg, "out")?;

    let kind: ModelKind = model.parse()?;
    let dataset = read_dataset(&data)?;
    let mut space = HyperSpace::for_reservoir(reservoir_size);
    if let Some(list) = memory_sizes {
        space.memory_sizes = parse_usize_list(&list)?;
    }

    let report = crossvalidate(&dataset, kind, &space, folds, trials, inner_folds, seed)?;

    let csv_path = PathBuf::from(format!("{}.csv", out.display()));
    let json_path = PathBuf::from(format!("{}.json", out.display()));
    let mut csv = BufWriter::new(File::create(&csv_path)?);
    write_results_csv(&mut csv, &report)?;
    csv.flush()?;
    let mut json_file = BufWriter::new(File::create(&json_path)?);
    write_summary_json(&mut json_file, &report)?;
    json_file.flush()?;

    println!("RMSE: {} +- {}", report.mean_rmse, report.std_rmse);
    Ok(())
}

fn run_train(args: TrainArgs, cfg: &Config) -> anyhow::Result<()> {
    let data: PathBuf = resolve_required(args.data, cfg, "data")?;
    let model: String = resolve(args.model, cfg, "model", "rmm".into())?;
    let out: PathBuf = resolve_required(args.out, cfg, "out")?;
    let reservoir_size = resolve(args.reservoir_size, cfg, "reservoir_size", 128)?;
    let input_weight = resolve(args.input_weight, cfg, "input_weight", 0.5)?;
    let cycle_weight = resolve(args.cycle_weight, cfg, "cycle_weight", 0.9)?;
    let jump_weight = resolve(args.jump_weight, cfg, "jump_weight", 0.2)?;
    let default_jump = (reservoir_size / 2).clamp(2, 7);
    let jump_length = resolve(args.jump_length, cfg, "jump_length", default_jump)?;
    let lambda = resolve(args.lambda, cfg, "lambda", 1e-6)?;
    let memory_size = resolve(args.memory_size, cfg, "memory_size", 8)?;
    let max_iters = resolve(args.max_iters, cfg, "max_iters", FIT_MAX_ITERS)?;

    let kind: ModelKind = model.parse()?;
    let dataset = read_dataset(&data)?;
    let input_dim = dataset
        .first()
        .map(|s| s.input_dim)
        .ok_or_else(|| anyhow!("dataset {} is empty", data.display()))?;
    let crj = rmm::reservoir::CrjHyperparams {
        reservoir_size,
        input_dim,
        input_weight,
        cycle_weight,
        jump_weight,
        jump_length,
    };
    let trained = TrainedModel::fit(kind, &crj, lambda, memory_size, max_iters, &dataset)?;
    trained.save(&out)?;
    let train_rmse = trained.evaluate(&dataset)?;
    println!("saved {kind} model to {}", out.display());
    println!("training RMSE: {train_rmse}");
    Ok(())
}

fn run_predict(args: PredictArgs, cfg: &Config) -> anyhow::Result<()> {
    let data: PathBuf = resolve_required(args.data, cfg, "data")?;
    let model_file: PathBuf = resolve_required(args.model_file, cfg, "model_file")?;
    let out: Option<PathBuf> = match args.out {
        Some(v) => Some(v),
        None => cfg.get("out")?,
    };

    let model = TrainedModel::load(&model_file)?;
    let dataset = read_dataset(&data)?;
    let mut predictions = Vec::with_capacity(dataset.len());
    let mut targets = Vec::with_capacity(dataset.len());
    for sample in &dataset {
        predictions.push(model.predict(&sample.inputs)?);
        targets.push(sample.targets.clone());
    }
    let value = rmm::harness::rmse(&targets, &predictions)?;

    if let Some(path) = out {
        let rows: Vec<Value> = predictions
            .iter()
            .map(|seq| {
                let steps: Vec<Vec<f64>> =
                    seq.iter().map(|y| y.iter().copied().collect()).collect();
                json!({ "Y_hat": steps })
            })
            .collect();
        let file = File::create(&path)?;
        serde_json::to_writer_pretty(BufWriter::new(file), &rows)?;
        println!("wrote predictions to {}", path.display());
    }
    println!("RMSE: {value}");
    Ok(())
}

fn run_bench(args: BenchArgs, cfg: &Config) -> anyhow::Result<()> {
    let model: String = resolve(args.model, cfg, "model", "esn".into())?;
    let lengths_text: String = resolve(args.lengths, cfg, "lengths", "100,500,1000,2000".into())?;
    let repeats = resolve(args.repeats, cfg, "repeats", 5)?;
    let reservoir_size = resolve(args.reservoir_size, cfg, "reservoir_size", 128)?;
    let seed = resolve(args.seed, cfg, "seed", 1u64)?;
    let out: Option<PathBuf> = match args.out {
        Some(v) => Some(v),
        None => cfg.get("out")?,
    };

    let kind: ModelKind = model.parse()?;
    let lengths = parse_usize_list(&lengths_text)?;
    let rows = bench_runtime(kind, reservoir_size, &lengths, repeats, seed)?;

    match out {
        Some(path) => {
            let mut file = BufWriter::new(File::create(&path)?);
            write_runtimes_csv(&mut file, &rows)?;
            file.flush()?;
            println!("wrote runtimes to {}", path.display());
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_runtimes_csv(&mut lock, &rows)?;
        }
    }
    Ok(())
}
