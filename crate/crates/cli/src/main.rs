//! `boltwave`: the pipeline as subcommands.
//!
//! Exit codes: 0 success, 1 runtime failure (one JSON line on stderr),
//! 2 bad usage.

mod commands;
mod config;
mod plot;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use boltwave::experiments::SplitMode;
use boltwave::losses::LossKind;
use boltwave::optim::OptimizerKind;
use boltwave::trainer::ScheduleKind;

/// Bad arguments or config keys; exits with 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "boltwave", version, about = "Acoustic-emission scalograms and ordinal bolt-tightening classifiers")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML config or a run.json from an earlier run; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed; falls back to the config file, then AE_PIPELINE_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: logical cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    /// Errors only.
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic AE + vibrometer streams.
    Synth(SynthArgs),
    /// Cut streams into windowed vibration cycles.
    Segment(SegmentArgs),
    /// Wavelet-denoise one stream.
    Denoise(DenoiseArgs),
    /// Render scalogram PNGs, an image manifest and a feature table.
    Scalogram(ScalogramArgs),
    /// Split an image manifest into train/val/test.
    Dataset(DatasetArgs),
    /// Train the reference linear softmax model.
    Train(TrainArgs),
    /// Evaluate a model on one split of a dataset.
    Eval(EvalArgs),
    /// Write per-sample predictions.
    Predict(PredictArgs),
    /// Repeated experiments over denoise levels, prior levels or sensors.
    Sweep(SweepArgs),
    /// Summary tables and plots from run directories.
    Report(ReportArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Segment(_) => "segment",
            Command::Denoise(_) => "denoise",
            Command::Scalogram(_) => "scalogram",
            Command::Dataset(_) => "dataset",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Predict(_) => "predict",
            Command::Sweep(_) => "sweep",
            Command::Report(_) => "report",
        }
    }
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthArgs {
    /// SyntheticSpec JSON: one object, or an array of campaigns.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Campaign ids; default A..E, or just the spec's campaign when --spec is an object.
    #[arg(long, value_delimiter = ',')]
    pub campaigns: Vec<String>,
    /// Relative burst-frequency shift per campaign.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub shifts: Vec<f64>,
    #[arg(long)]
    pub seconds_per_level: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub snr_db: Option<f64>,
    #[arg(long)]
    pub sample_rate_hz: Option<f64>,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentArgs {
    #[arg(long)]
    pub ae: Option<PathBuf>,
    #[arg(long)]
    pub vibro: Option<PathBuf>,
    /// A `synth` output directory; every campaign in it is segmented.
    #[arg(long)]
    pub from: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Denoise the AE channel first (0 = off).
    #[arg(long)]
    pub denoise_level: Option<usize>,
    #[arg(long)]
    pub block_seconds: Option<f64>,
    /// Keep raw cycles, no Hann window.
    #[arg(long)]
    pub no_window: bool,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DenoiseArgs {
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub level: Option<usize>,
    #[arg(long)]
    pub block_seconds: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalogramArgs {
    /// Segment directories, or directories of them.
    #[arg(long, value_delimiter = ',')]
    pub segments: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, conflicts_with = "literal_12_filters")]
    pub voices: Option<usize>,
    #[arg(long)]
    pub octaves: Option<usize>,
    /// Twelve filters in total instead of twelve per octave.
    #[arg(long = "literal-12-filters")]
    pub literal_12_filters: bool,
    #[arg(long)]
    pub n_fft: Option<usize>,
    /// Skip PNG output and only write the feature table.
    #[arg(long)]
    pub no_png: bool,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitArgs {
    #[arg(long)]
    pub mode: Option<SplitMode>,
    /// Held-out campaign (loco, gradual) or the only campaign used (noshm).
    #[arg(long)]
    pub test_campaign: Option<String>,
    /// Gradual prior: classes 1..=P of the test campaign join training.
    #[arg(long)]
    pub prior: Option<usize>,
    /// Sensors to keep; default all (sensor fusion).
    #[arg(long, value_delimiter = ',')]
    pub sensors: Vec<String>,
    /// noshm train,val,test fractions.
    #[arg(long, value_delimiter = ',')]
    pub fractions: Vec<f64>,
    /// Train share of the training pool for loco and gradual.
    #[arg(long)]
    pub train_fraction: Option<f64>,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetArgs {
    /// Optional `build` verb.
    #[arg(value_parser = ["build"], hide = true)]
    #[serde(skip)]
    pub verb: Option<String>,
    /// Image manifest (manifest.jsonl) or the `scalogram` output directory.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub split: SplitArgs,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperArgs {
    #[arg(long)]
    pub loss: Option<LossKind>,
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub sched: Option<ScheduleKind>,
    #[arg(long)]
    pub lr_max: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Piecewise schedule: multiply the rate by this factor...
    #[arg(long)]
    pub drop_factor: Option<f64>,
    /// ...every this many epochs.
    #[arg(long)]
    pub drop_epochs: Option<usize>,
    /// Validation period in iterations.
    #[arg(long)]
    pub eval_every: Option<usize>,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainArgs {
    /// `dataset` output directory.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalArgs {
    /// Model file, or a `train` output directory.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// train, val or test.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<String>,
    /// CSV file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepArgs {
    /// `synth` output directory (needed for --levels).
    #[arg(long)]
    pub streams: Option<PathBuf>,
    /// Denoising levels, e.g. `0..9` or `0,2,4`.
    #[arg(long)]
    pub levels: Option<String>,
    /// `scalogram` output directory (for --priors or a plain run).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Prior levels, e.g. `0..6`.
    #[arg(long)]
    pub priors: Option<String>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportArgs {
    /// Run directories: train, eval or sweep outputs.
    #[arg(long, value_delimiter = ',')]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn init_logging(g: &Global) {
    let level = if g.quiet {
        log::LevelFilter::Error
    } else {
        match g.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            _ => log::LevelFilter::Debug,
        }
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .init();
}

fn error_line(command: &str, err: &anyhow::Error) -> String {
    let causes: Vec<String> = err.chain().skip(1).map(|c| c.to_string()).collect();
    serde_json::json!({
        "status": "error",
        "command": command,
        "message": err.to_string(),
        "causes": causes,
    })
    .to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    init_logging(&cli.global);
    let name = cli.command.name();
    if let Some(n) = cli.global.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("{}", error_line(name, &e.into()));
            return ExitCode::from(1);
        }
    }
    match commands::run(cli.command, &cli.global) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}\n\nFor more information, try 'boltwave {name} --help'.");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("{}", error_line(name, &e));
            ExitCode::from(1)
        }
    }
}
