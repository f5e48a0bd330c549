use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use milkd::ad::Precision;
use milkd::data::{generate_synthetic, largest_remainder, load_dataset, save_dataset, SplitName};
use milkd::eval::EvalReport;
use milkd::train::{
    evaluate_checkpoint, run_ablation, run_with_checkpoints, write_metrics_csv, AblationFlags, CheckpointRecord,
    TrainMode,
};

mod config;

use config::RunConfigFile;

pub const METRICS_FILE: &str = "metrics.csv";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl From<milkd::Error> for CliError {
    fn from(e: milkd::Error) -> Self {
        match e {
            milkd::Error::InvalidConfig(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "milkd", version, about = "Attention MIL with teacher/student distillation")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic MILDS-1 dataset directory.
    Generate(GenerateArgs),
    /// Train one configuration and write metrics and checkpoints.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split.
    Eval(EvalArgs),
    /// Run the four-row component grid over several seeds.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Output directory [default: [output] dir from the config file]
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML run configuration; its [data] table is used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    positive_ratio: Option<f64>,
    /// Total bags, apportioned over train/valid/test in the configured proportions.
    #[arg(long)]
    bags: Option<usize>,
    #[arg(long)]
    instances_per_bag: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct Hyper {
    /// TOML run configuration; its [train] table is used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Learning rate [default: 0.001]
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    hpm_threshold: Option<f64>,
    #[arg(long)]
    hpm_warmup: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_precision)]
    precision: Option<Precision>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Output directory [default: [output] dir from the config file]
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    hyper: Hyper,
    #[arg(long)]
    no_distill: bool,
    #[arg(long)]
    no_share: bool,
    #[arg(long)]
    no_hpm: bool,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<TrainMode>,
    /// Also write a checkpoint every this many epochs.
    #[arg(long)]
    checkpoint_every: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    split: SplitName,
    /// Directory for the CSV report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[arg(long)]
    data: PathBuf,
    /// Output directory [default: [output] dir from the config file]
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    hyper: Hyper,
    /// Comma-separated seeds [default: the configured seed].
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
}

fn parse_mode(s: &str) -> Result<TrainMode, String> {
    s.parse().map_err(|e: milkd::Error| e.to_string())
}

fn parse_split(s: &str) -> Result<SplitName, String> {
    match s {
        "valid" => Ok(SplitName::Valid),
        "test" => Ok(SplitName::Test),
        other => Err(format!("split must be `valid` or `test`, got `{other}`")),
    }
}

fn parse_precision(s: &str) -> Result<Precision, String> {
    match s {
        "f32" => Ok(Precision::F32),
        "f64" => Ok(Precision::F64),
        other => Err(format!("precision must be `f32` or `f64`, got `{other}`")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))
}

fn generate(a: GenerateArgs) -> Result<(), CliError> {
    let mut run = RunConfigFile::load(a.config.as_deref())?;
    let spec = &mut run.data;
    if let Some(v) = a.positive_ratio {
        spec.positive_ratio = v;
    }
    if let Some(total) = a.bags {
        let weights = [spec.train_bags, spec.valid_bags, spec.test_bags].map(|n| n as f64);
        let counts = largest_remainder(total, &weights);
        (spec.train_bags, spec.valid_bags, spec.test_bags) = (counts[0], counts[1], counts[2]);
    }
    if let Some(v) = a.instances_per_bag {
        spec.instances_per_bag = v;
    }
    if let Some(v) = a.dim {
        spec.dim = v;
    }
    if let Some(v) = a.separation {
        spec.separation = v;
    }
    if let Some(v) = a.seed {
        spec.seed = v;
    }
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let out = run.resolve_out(a.out.as_deref())?;

    let generated = generate_synthetic(&run.data)?;
    create_dir(&out)?;
    let manifest = save_dataset(&generated.dataset, &out)?;
    run.echo(&out)?;
    println!("{} {}", manifest.version, out.display());
    println!("dim {}", manifest.dim);
    for (split, records) in &manifest.splits {
        let positive = records.iter().filter(|r| r.bag_label == 1).count();
        println!("{split:<6} {:>5} bags {positive:>5} positive", records.len());
    }
    Ok(())
}

fn apply_hyper(run: &mut RunConfigFile, h: &Hyper) {
    let t = &mut run.train;
    if let Some(v) = h.epochs {
        t.epochs = v;
    }
    if let Some(v) = h.lr {
        t.learning_rate = v;
    }
    if let Some(v) = h.hpm_threshold {
        t.hpm.threshold = v;
    }
    if let Some(v) = h.hpm_warmup {
        t.hpm.warmup_epochs = v;
    }
    if let Some(v) = h.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = h.seed {
        t.seed = v;
    }
    if let Some(v) = h.precision {
        t.precision = v;
    }
}

fn print_report(label: &str, r: &EvalReport) {
    let f = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    println!("{label} teacher_bag_auc                {}", f(r.teacher_bag_auc));
    println!("{label} teacher_attention_instance_auc {}", f(r.teacher_attention_instance_auc));
    println!("{label} student_instance_auc           {}", f(r.student_instance_auc));
    println!("{label} student_bag_auc                {}", f(r.student_bag_auc));
}

fn train(a: TrainArgs) -> Result<(), CliError> {
    let mut run = RunConfigFile::load(a.hyper.config.as_deref())?;
    apply_hyper(&mut run, &a.hyper);
    let t = &mut run.train;
    if let Some(mode) = a.mode {
        t.mode = mode;
    }
    if a.checkpoint_every.is_some() {
        t.checkpoint_every = a.checkpoint_every;
    }
    if a.no_distill {
        t.flags.distillation = false;
    }
    if a.no_share {
        t.flags.shared_encoder = false;
    }
    if a.no_hpm {
        t.flags.hpm = false;
    }
    if t.mode != TrainMode::Weno {
        t.flags = AblationFlags::NONE;
    }
    t.validate().map_err(|e| {
        CliError::Usage(format!(
            "{e}; use --mode baseline or combine --no-distill with --no-share --no-hpm"
        ))
    })?;
    let out = run.resolve_out(a.out.as_deref())?;

    let dataset = load_dataset(&a.data)?;
    create_dir(&out)?;
    run.echo(&out)?;
    let out_dir = out.clone();
    let output = run_with_checkpoints(&dataset, &run.train, &mut |record: &CheckpointRecord| {
        record.save(&out_dir.join(format!("epoch_{:04}.ckpt", record.epoch)))
    })?;
    write_metrics_csv(&output.metrics, &out.join(METRICS_FILE))?;
    output.checkpoint.save(&out.join(FINAL_CHECKPOINT))?;
    match output.metrics.last() {
        Some(m) => print_report("valid", &m.valid),
        None => println!("0 epochs: wrote the initialization checkpoint"),
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    let record = CheckpointRecord::load(&a.checkpoint)?;
    let dataset = load_dataset(&a.data)?;
    if dataset.dim != record.model.encoder.input_dim {
        return Err(CliError::Runtime(format!(
            "checkpoint expects dimension {} but dataset {} has dimension {}",
            record.model.encoder.input_dim,
            a.data.display(),
            dataset.dim
        )));
    }
    let split = dataset.split(a.split);
    let report = evaluate_checkpoint(&record, split)?;
    print_report(a.split.as_str(), &report);
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let csv = format!(
            "split,epoch,teacher_bag_auc,teacher_attention_instance_auc,student_instance_auc,student_bag_auc\n{},{},{},{},{},{}\n",
            a.split.as_str(),
            record.epoch,
            cell(report.teacher_bag_auc),
            cell(report.teacher_attention_instance_auc),
            cell(report.student_instance_auc),
            cell(report.student_bag_auc)
        );
        std::fs::write(dir.join(format!("eval_{}.csv", a.split.as_str())), csv)?;
        let run = RunConfigFile {
            data: dataset.spec.clone().unwrap_or_default(),
            train: record.config.clone(),
            output: config::OutputPaths::default(),
        };
        run.echo(dir)?;
    }
    Ok(())
}

fn ablate(a: AblateArgs) -> Result<(), CliError> {
    let mut run = RunConfigFile::load(a.hyper.config.as_deref())?;
    apply_hyper(&mut run, &a.hyper);
    run.train.mode = TrainMode::Weno;
    run.train.validate()?;
    let out = run.resolve_out(a.out.as_deref())?;
    let seeds = if a.seeds.is_empty() {
        vec![run.train.seed]
    } else {
        a.seeds.clone()
    };

    let dataset = load_dataset(&a.data)?;
    create_dir(&out)?;
    run.echo(&out)?;
    let report = run_ablation(&dataset, &run.train, &seeds)?;
    let runs_dir = out.join("runs");
    create_dir(&runs_dir)?;
    for (row, tag) in report.rows.iter().zip(["none", "d", "ds", "dsh"]) {
        for r in &row.runs {
            write_metrics_csv(&r.metrics, &runs_dir.join(format!("{tag}_seed{}.csv", r.seed)))?;
        }
    }
    let text = report.to_text();
    std::fs::write(out.join("ablation.txt"), &text)?;
    std::fs::write(out.join("ablation.csv"), report.to_csv())?;
    print!("{text}");
    Ok(())
}
