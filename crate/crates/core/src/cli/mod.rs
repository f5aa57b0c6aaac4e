//! Command-line frontend.
//!
//! Exit codes: 0 on success, 2 for invalid input or configuration, 3 for
//! numerical failures such as diverging training.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::classifiers::{HeadKind, JointInput, ProbAveraging};
use crate::error::{Error, Result};
use crate::eval::{NoTubeAp, Stratum};
use crate::linker::MaskMode;
use crate::pose::SkeletonLayout;

pub use commands::{run_manifest_path, RunManifest, DIR_RUN_MANIFEST, TUBES_SUFFIX};
pub use config::FileConfig;

#[derive(Debug, Parser)]
#[command(name = "mimebench", version, about = "Pose-based action recognition benchmark toolkit")]
pub struct Cli {
    /// JSON file with default option values; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for per-video work [default: all cores].
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Link per-frame detections into human tubes.
    Link(LinkArgs),
    /// Write masking geometry for the tubes of each video.
    Mask(MaskArgs),
    /// Train a SIP-Net or graph-convolution head.
    Train(TrainArgs),
    /// Write per-video class probabilities.
    Predict(PredictArgs),
    /// Evaluate predictions against a manifest.
    Eval(EvalArgs),
    /// Accuracy of SIP-Net as a function of the clip length.
    Sweep(SweepArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Merge evaluation reports into one table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct LinkArgs {
    /// Directory of `<video>.jsonl` detection files.
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub iou_threshold: Option<f64>,
    #[arg(long)]
    pub max_gap: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub tubes: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_from_str::<MaskMode>)]
    pub mode: Option<MaskMode>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub tubes: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub taxonomy: PathBuf,
}

#[derive(Debug, Default, Args)]
pub struct OptimArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Checkpoint path; the description goes to `<out>.sidecar.json`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_json_str::<HeadKind>)]
    pub head: Option<HeadKind>,
    /// Clip length.
    #[arg(short = 'T', long = "clip-len")]
    pub t: Option<usize>,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Held-out videos for early stopping.
    #[arg(long)]
    pub validation_manifest: Option<PathBuf>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub kt: Option<usize>,
    #[arg(long, value_parser = parse_json_str::<JointInput>)]
    pub joint_input: Option<JointInput>,
    #[arg(long, value_parser = parse_json_str::<SkeletonLayout>)]
    pub skeleton: Option<SkeletonLayout>,
    #[arg(long, value_parser = parse_json_str::<ProbAveraging>)]
    pub averaging: Option<ProbAveraging>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_json_str::<ProbAveraging>)]
    pub averaging: Option<ProbAveraging>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    /// Manifest CSV; the bundled reference manifest when omitted.
    #[arg(long, requires = "taxonomy")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// Report JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Text table; printed to stdout when omitted.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Method name used in the table header.
    #[arg(long, default_value = "predictions")]
    pub name: String,
    #[arg(long, value_parser = parse_json_str::<NoTubeAp>)]
    pub no_tube_ap: Option<NoTubeAp>,
    #[arg(long, value_delimiter = ',', value_parser = parse_from_str::<Stratum>)]
    pub strata: Option<Vec<Stratum>>,
    #[arg(long)]
    pub no_superclasses: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub tubes: PathBuf,
    #[arg(long)]
    pub train_manifest: PathBuf,
    #[arg(long)]
    pub test_manifest: PathBuf,
    #[arg(long)]
    pub taxonomy: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub t_values: Option<Vec<usize>>,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// CSV output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub videos_per_class: Option<usize>,
    #[arg(long)]
    pub test_per_class: Option<usize>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub min_length: Option<usize>,
    #[arg(long)]
    pub max_length: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `name=report.json`, repeatable.
    #[arg(long = "report", required = true, value_parser = parse_named_path)]
    pub reports: Vec<(String, PathBuf)>,
    /// Text output; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_from_str<T: std::str::FromStr<Err = Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Parses a snake_case enum name through its serde representation.
fn parse_json_str<T: serde::de::DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_named_path(s: &str) -> std::result::Result<(String, PathBuf), String> {
    let (name, path) = s
        .split_once('=')
        .ok_or_else(|| format!("expected name=path, got `{s}`"))?;
    Ok((name.to_string(), PathBuf::from(path)))
}

/// Parses arguments and runs the command. `--help` and `--version` print
/// and succeed.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(Error::Argument(e.to_string())),
    };
    commands::dispatch(cli)
}

/// Runs the command and maps the outcome to a process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match run(args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                3
            } else {
                2
            }
        }
    }
}
