use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use tpl_core::checkpoint::Checkpoint;
use tpl_core::config::{param_breakdown, RunConfig};
use tpl_core::dataio::manifest::{DatasetManifest, Split};
use tpl_core::dataio::{compute_limb_stats, generate_synthetic};
use tpl_core::trainer::{
    configure_threads, evaluate, export_predictions, run_plan, write_eval_csv, Dataset, RunLock,
    Stage, StagePlan,
};
use tpl_core::Error;

/// Temporal pose estimation from pressure-map sequences.
///
/// Settings are resolved as: built-in preset, then the --config file, then
/// command-line flags. Without --config the "desk" preset is used.
#[derive(Debug, Parser)]
#[command(name = "tpl", version)]
struct Cli {
    /// Print a machine-readable JSON summary on stdout.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a deterministic synthetic dataset and its manifest.
    GenData(GenArgs),
    /// Masked auto-encoder pre-training.
    Pretrain(TrainArgs),
    /// Warm-up and fine-tune stages.
    Train(TrainArgs),
    /// Test-split metrics of a checkpoint.
    Eval(EvalArgs),
    /// Limb-length percentiles of the train split.
    Stats(StatsArgs),
    /// Keypoint predictions as CSV.
    ExportPreds(EvalArgs),
    /// Check a configuration file.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Output directory for the dataset.
    #[arg(long)]
    out: PathBuf,
    /// Generator seed (overrides synth.seed).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    manifest: PathBuf,
    /// Runs are written to {out}/{run_id}.
    #[arg(long)]
    out: PathBuf,
    /// Training seed (overrides train.rng_seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Run only this stage.
    #[arg(long)]
    stage: Option<Stage>,
    /// Skip pre-training and start from random weights.
    #[arg(long)]
    from_scratch: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Checkpoint to evaluate.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Also write limb_stats.json here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[command(flatten)]
    config: ConfigArg,
}

/// A configuration that failed validation; reported with exit code 1.
#[derive(Debug)]
struct Invalid(Value);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid configuration")
    }
}

impl std::error::Error for Invalid {}

fn load_config(arg: &ConfigArg) -> anyhow::Result<RunConfig> {
    match &arg.config {
        Some(path) => Ok(RunConfig::load(path)?),
        None => Ok(RunConfig::desk()),
    }
}

fn require_valid(run: &RunConfig) -> anyhow::Result<()> {
    let report = run.validate();
    if report.is_valid() {
        return Ok(());
    }
    let issues: Vec<Value> = report
        .issues
        .iter()
        .map(|i| json!({"field": i.field, "message": i.message}))
        .collect();
    Err(Invalid(json!({"valid": false, "issues": issues})).into())
}

fn gen_data(args: &GenArgs) -> anyhow::Result<Value> {
    let mut run = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        run.synth.seed = seed;
    }
    let manifest = generate_synthetic(&run.synth, &args.out)?;
    let train = manifest.entries(Split::Train).count();
    Ok(json!({
        "manifest": args.out.join(tpl_core::dataio::manifest::MANIFEST_NAME),
        "sequences": manifest.sequences.len(),
        "train": train,
        "test": manifest.sequences.len() - train,
        "seed": run.synth.seed,
    }))
}

fn train(args: &TrainArgs, pretrain_only: bool) -> anyhow::Result<Value> {
    let mut run = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        run.train.rng_seed = seed;
    }
    require_valid(&run)?;
    let manifest = DatasetManifest::load(&args.manifest)?;
    let data = Dataset::<f32>::from_manifest(&manifest)?;
    let mut plan = StagePlan::new(&run.train, args.from_scratch);
    let keep: Vec<Stage> = match (args.stage, pretrain_only) {
        (Some(s), _) => vec![s],
        (None, true) => vec![Stage::Pretrain],
        (None, false) => vec![Stage::Warmup, Stage::Finetune],
    };
    if pretrain_only && keep != [Stage::Pretrain] {
        bail!(Invalid(json!({"error": "pretrain runs only the pretrain stage"})));
    }
    if pretrain_only && args.from_scratch {
        bail!(Invalid(json!({"error": "--from-scratch does not apply to pretrain"})));
    }
    plan = plan.only(&keep);
    let summary = run_plan(&run, &data, &args.out, &plan)?;
    let checkpoints: Vec<Value> = summary
        .checkpoints
        .iter()
        .map(|(s, p)| json!({"stage": s.as_str(), "path": p}))
        .collect();
    Ok(json!({
        "run_dir": summary.run_dir,
        "report": summary.run_dir.join(tpl_core::trainer::REPORT_NAME),
        "checkpoints": checkpoints,
        "test": summary.test,
    }))
}

fn load_for_eval(args: &EvalArgs) -> anyhow::Result<(Checkpoint, DatasetManifest)> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let manifest = DatasetManifest::load(&args.manifest)?;
    let m = &ck.meta.model;
    if manifest.grid_w != m.grid_w || manifest.grid_h != m.grid_h || manifest.num_joints != m.num_joints {
        return Err(Error::Shape(format!(
            "manifest is {}x{} with {} joints, checkpoint expects {}x{} with {}",
            manifest.grid_w, manifest.grid_h, manifest.num_joints, m.grid_w, m.grid_h, m.num_joints
        ))
        .into());
    }
    Ok((ck, manifest))
}

fn eval(args: &EvalArgs) -> anyhow::Result<Value> {
    let (ck, manifest) = load_for_eval(args)?;
    let model = ck.restore_model::<f32>()?;
    let test = manifest.load_split::<f32>(Split::Test)?;
    let _lock = RunLock::acquire(&args.out)?;
    let report = evaluate(&model, &test, &manifest.skeleton)?;
    let path = args.out.join("eval.csv");
    write_eval_csv(&path, &report)?;
    Ok(json!({
        "checkpoint": args.checkpoint,
        "eval_csv": path,
        "mpjpe_cm": report.mpjpe_cm,
        "pckh": report.pckh,
        "windows": report.windows,
        "skipped_sequences": report.skipped_sequences,
        "per_sequence": report.per_sequence,
    }))
}

fn export(args: &EvalArgs) -> anyhow::Result<Value> {
    let (ck, manifest) = load_for_eval(args)?;
    let model = ck.restore_model::<f32>()?;
    let test = manifest.load_split::<f32>(Split::Test)?;
    let _lock = RunLock::acquire(&args.out)?;
    let path = args.out.join("predictions.csv");
    let rows = export_predictions(&model, &test, &manifest.skeleton, &path)?;
    Ok(json!({"predictions": path, "rows": rows}))
}

fn stats(args: &StatsArgs) -> anyhow::Result<Value> {
    let manifest = DatasetManifest::load(&args.manifest)?;
    let train = manifest.load_split::<f32>(Split::Train)?;
    let s = compute_limb_stats(train.iter().map(|t| &t.pose), &manifest.skeleton)?;
    let limbs: Vec<Value> = manifest
        .skeleton
        .limbs
        .iter()
        .zip(s.lower.iter().zip(&s.upper))
        .map(|(&(a, b), (lo, hi))| {
            json!({
                "limb": format!("{}-{}", manifest.skeleton.joint_names[a], manifest.skeleton.joint_names[b]),
                "p5": lo,
                "p95": hi,
            })
        })
        .collect();
    let mut out = json!({"limbs": limbs});
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).with_context(|| format!("{}", dir.display()))?;
        let path = dir.join("limb_stats.json");
        let text = serde_json::to_string_pretty(&s)?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        out["path"] = json!(path);
    }
    Ok(out)
}

fn validate(args: &ValidateArgs) -> anyhow::Result<Value> {
    let run = load_config(&args.config)?;
    require_valid(&run)?;
    let b = param_breakdown(&run.model)?;
    Ok(json!({
        "valid": true,
        "run_id": run.run_id,
        "tokens": run.model.num_tokens(),
        "params": {
            "tokenizer": b.tokenizer,
            "encoder": b.encoder,
            "head": b.head,
            "decoder": b.decoder,
            "pose_model": b.pose_model(),
        },
    }))
}

fn print_human(v: &Value, indent: usize) {
    if let Value::Object(map) = v {
        for (k, val) in map {
            match val {
                Value::Object(_) => {
                    println!("{:indent$}{k}:", "");
                    print_human(val, indent + 2);
                }
                Value::Array(items) if items.iter().any(|i| i.is_object()) => {
                    println!("{:indent$}{k}:", "");
                    for item in items {
                        println!("{:w$}{item}", "", w = indent + 2);
                    }
                }
                Value::String(s) => println!("{:indent$}{k}: {s}", ""),
                other => println!("{:indent$}{k}: {other}", ""),
            }
        }
    }
}

/// Exit status for a failure: 2 for filesystem and file-content errors,
/// 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(
            Error::Io { .. }
            | Error::Locked(_)
            | Error::BadMagic { .. }
            | Error::Truncated { .. }
            | Error::DimensionMismatch { .. }
            | Error::NegativePressure { .. }
            | Error::Json { .. }
            | Error::Csv { .. }
            | Error::MissingPrerequisite(_)
            | Error::Checkpoint(_),
        ) => 2,
        _ if err.downcast_ref::<std::io::Error>().is_some() => 2,
        _ => 1,
    }
}

fn run(cli: &Cli) -> anyhow::Result<Value> {
    match &cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Pretrain(a) => train(a, true),
        Command::Train(a) => train(a, false),
        Command::Eval(a) => eval(a),
        Command::Stats(a) => stats(a),
        Command::ExportPreds(a) => export(a),
        Command::Validate(a) => validate(a),
    }
}

fn ensure_parent(p: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(p).map_err(|e| anyhow!(Error::Io {
        path: p.to_path_buf(),
        source: e,
    }))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    configure_threads();
    let out_dir = match &cli.command {
        Command::Eval(a) | Command::ExportPreds(a) => Some(a.out.clone()),
        _ => None,
    };
    let result = match out_dir {
        Some(dir) => ensure_parent(&dir).and_then(|_| run(&cli)),
        None => run(&cli),
    };
    match result {
        Ok(summary) => {
            if cli.json {
                println!("{summary}");
            } else {
                print_human(&summary, 0);
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            if let Some(Invalid(detail)) = err.downcast_ref::<Invalid>() {
                if cli.json {
                    println!("{detail}");
                } else {
                    eprintln!("error: invalid configuration");
                    print_human(detail, 2);
                }
                return ExitCode::from(1);
            }
            if cli.json {
                println!("{}", json!({"error": format!("{err:#}")}));
            }
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
