//! `sbd`: command-line front end for boundary ground-truth generation,
//! benchmarking and the multi-scale detector.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sbd_core::config::Config;

#[derive(Parser)]
#[command(name = "sbd", version, about = "Instance-boundary generation, benchmarking and detection")]
struct Cli {
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key; applied after --config. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    dump_config: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Label maps to thinned boundary maps.
    Bounds(BoundsArgs),
    /// Boundary-pixel fraction of boundary maps.
    Stats(StatsArgs),
    /// Boundary length per category pair.
    Pairs(LabelsArgs),
    /// 2x2 windows where three or more labels meet.
    Junctions(LabelsArgs),
    /// Generate the synthetic dataset and its manifest.
    Synth(SynthArgs),
    /// Benchmark predictions against ground truth.
    Eval(EvalArgs),
    /// Run the three-stage training schedule.
    Train(TrainArgs),
    /// Write soft boundary maps for a manifest split or a single image.
    Predict(PredictArgs),
    /// Compare analytic gradients with central differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
pub struct BoundsArgs {
    /// Label-map stems (`<stem>.cat.png` + `<stem>.inst.png`).
    #[arg(long = "labels", value_name = "STEM")]
    pub labels: Vec<PathBuf>,
    /// Process every labelled entry of a manifest instead.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value = "train,val,test", value_delimiter = ',')]
    pub splits: Vec<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Keep the two-pixel band instead of thinning.
    #[arg(long)]
    pub no_thin: bool,
}

#[derive(Args)]
pub struct StatsArgs {
    /// Boundary map PNGs.
    #[arg(required = true)]
    pub maps: Vec<PathBuf>,
}

#[derive(Args)]
pub struct LabelsArgs {
    #[arg(long = "labels", value_name = "STEM", required = true)]
    pub labels: Vec<PathBuf>,
    /// Emit JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Manifest providing ground truth; predictions are looked up as
    /// `<pred-dir>/<image path>`.
    #[arg(long, requires = "pred_dir")]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub pred_dir: Option<PathBuf>,
    /// Single prediction map (with --gt).
    #[arg(long, conflicts_with = "manifest", requires = "gt")]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Directory receiving summary.json and curve.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory receiving checkpoints and the loss log.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct PredictArgs {
    /// Checkpoint to run.
    #[arg(long, conflicts_with_all = ["untrained", "sobel"])]
    pub model: Option<PathBuf>,
    /// Use a freshly initialised model (config seed and architecture).
    #[arg(long, conflicts_with = "sobel")]
    pub untrained: bool,
    /// Use the Sobel gradient-magnitude baseline.
    #[arg(long)]
    pub sobel: bool,
    /// Restrict the model to its scale-1 branch with unit scale weight.
    #[arg(long)]
    pub single_scale: bool,
    #[arg(long, requires = "out_dir")]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Single RGB image (with --out).
    #[arg(long, conflicts_with = "manifest", requires = "out")]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct GradcheckArgs {
    /// Checkpoint to check; defaults to a freshly initialised model.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Side of the square synthetic input.
    #[arg(long, default_value_t = 8)]
    pub size: usize,
    /// Largest finite-difference step; reduced tenfold (twice) at kinks.
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
    /// Failure threshold on the maximum relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// `side:K`, `scale:S` (1-based) or `boundary`; all when omitted.
    #[arg(long)]
    pub selector: Vec<String>,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = Config::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    for pair in &cli.overrides {
        cfg.set_pair(pair)?;
    }
    if cli.dump_config {
        print!("{}", cfg.dump());
        return Ok(());
    }
    cfg.validate()?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let Some(command) = cli.command else {
        anyhow::bail!("no subcommand given; see --help");
    };
    match command {
        Command::Bounds(a) => commands::bounds(&cfg, &a),
        Command::Stats(a) => commands::stats(&a),
        Command::Pairs(a) => commands::pairs(&cfg, &a),
        Command::Junctions(a) => commands::junctions(&a),
        Command::Synth(a) => commands::synth(&cfg, &a),
        Command::Eval(a) => commands::eval(&cfg, &a),
        Command::Train(a) => commands::train(&cfg, &a),
        Command::Predict(a) => commands::predict(&cfg, &a),
        Command::Gradcheck(a) => commands::gradcheck(&cfg, &a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
