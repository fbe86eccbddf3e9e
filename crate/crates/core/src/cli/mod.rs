//! The commands behind the `eegdnet` binary.
//!
//! Every command reads a flat `key = value` run configuration (see
//! [`RunConfig`]) with `--set key=value` overrides, writes its artifacts to an
//! output directory and returns exit code 0 on success, 1 on an internal
//! failure and 2 on a user or configuration error. Tables carry the crate
//! version and the configuration hash.

mod config;
mod plot;
mod report;
mod tools;
mod train;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};

pub use config::{parse_pairs, DataConfig, RunConfig};
pub use plot::{plot_csv, plot_svg, Series};
pub use report::{ablation_values, Axis, BenchmarkRow};
pub use tools::{grad_check_kinds, KindCheck};
pub use train::denoise_epochs;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "EEGDNET_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "eegdnet-out";

#[derive(Debug, Parser)]
#[command(name = "eegdnet", version, about = "Transformer denoising of single-channel EEG epochs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and report test-split metrics.
    Train(TrainArgs),
    /// Denoise an epoch file with a trained model.
    Denoise(DenoiseArgs),
    /// Evaluate a trained model on the test split, per SNR bin.
    Eval(EvalArgs),
    /// Metrics and cost of several model kinds side by side.
    Benchmark(BenchmarkArgs),
    /// Sweep one architecture axis of the transformer.
    Ablate(AblateArgs),
    /// Overlay clean, noisy and denoised waveforms as SVG and CSV.
    Plot(PlotArgs),
    /// Finite-difference gradient check of every model kind.
    Gradcheck(GradcheckArgs),
    /// Write synthetic clean and artifact epoch files.
    Synth(SynthArgs),
}

/// Options shared by commands that take a run configuration.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Run configuration file (`key = value` lines).
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override a configuration key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory [default: `out_dir` key, then $EEGDNET_OUT_DIR, then ./eegdnet-out].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    pub fn load(&self) -> Result<RunConfig> {
        RunConfig::load(self.config.as_deref(), &self.overrides)
    }

    /// Creates and returns the output directory.
    pub fn out_dir(&self, cfg: &RunConfig) -> Result<PathBuf> {
        let dir = self
            .out
            .clone()
            .or_else(|| cfg.out_dir.clone())
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Continue from `train_state.edn` in the output directory.
    #[arg(long)]
    pub resume: bool,
    /// Suppress per-epoch progress on stderr.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Args)]
pub struct DenoiseArgs {
    /// Model checkpoint (`model.edn` or a training state).
    #[arg(long, short)]
    pub model: PathBuf,
    /// Noisy epochs (EPK, or CSV with one epoch per row).
    #[arg(long, short)]
    pub input: PathBuf,
    /// Where to write the estimates; the extension picks the format.
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Model checkpoint [default: model.edn in the output directory].
    #[arg(long, short)]
    pub model: Option<PathBuf>,
    /// Also write the first N test pairs as clean/noisy/denoised EPK files.
    #[arg(long, value_name = "N")]
    pub dump: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Model kinds to compare.
    #[arg(long, value_delimiter = ',', default_value = "eegdnet,rnn,dln,rescnn1d,scnn")]
    pub models: Vec<String>,
    /// Directory holding `<kind>.edn` or `<kind>/model.edn` checkpoints [default: the output directory].
    #[arg(long)]
    pub checkpoints: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Axis to sweep: kq, depths or heads.
    #[arg(long)]
    pub axis: Axis,
    /// Axis values, e.g. `8x64,16x32` or `2,4,6` [default: the published grid].
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<String>,
    /// Only report parameter and FLOP counts; skip training.
    #[arg(long)]
    pub accounting_only: bool,
}

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    /// Clean reference epochs.
    #[arg(long)]
    pub clean: PathBuf,
    /// Noisy epochs.
    #[arg(long)]
    pub noisy: PathBuf,
    /// Denoised epochs; may be repeated to compare models.
    #[arg(long)]
    pub denoised: Vec<PathBuf>,
    /// Legend label for each `--denoised` file [default: the file stem].
    #[arg(long)]
    pub label: Vec<String>,
    /// Epoch index within the files.
    #[arg(long, default_value_t = 0)]
    pub epoch: usize,
    /// First plotted sample.
    #[arg(long, default_value_t = 0)]
    pub start: usize,
    /// Plotted samples [default: to the end of the epoch].
    #[arg(long)]
    pub len: Option<usize>,
    /// Output directory [default: $EEGDNET_OUT_DIR, then ./eegdnet-out].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    /// Model kinds to check, or `all`.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub kind: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Clean epochs to generate (and as many artifact epochs).
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    /// Artifact kind: ocular or muscle.
    #[arg(long, default_value = "ocular")]
    pub artifact: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// File format: epk or csv.
    #[arg(long, default_value = "epk")]
    pub format: String,
    /// Output directory [default: $EEGDNET_OUT_DIR, then ./eegdnet-out].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Runs one parsed command.
pub fn execute(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Train(a) => train::cmd_train(a).map(|_| ()),
        Command::Denoise(a) => train::cmd_denoise(a),
        Command::Eval(a) => train::cmd_eval(a),
        Command::Benchmark(a) => report::cmd_benchmark(a).map(|_| ()),
        Command::Ablate(a) => report::cmd_ablate(a),
        Command::Plot(a) => plot::cmd_plot(a),
        Command::Gradcheck(a) => tools::cmd_gradcheck(a),
        Command::Synth(a) => tools::cmd_synth(a),
    }
}

pub fn exit_code(result: &Result<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) if e.is_user_error() => 2,
        Err(_) => 1,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = execute(&cli.command);
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    exit_code(&result)
}

/// Comment lines that open every emitted CSV table.
pub(crate) fn provenance(hash: &str) -> String {
    format!("# eegdnet {VERSION}\n# config {hash}\n")
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// `--out`, then the environment default, then `./eegdnet-out`.
pub(crate) fn plain_out_dir(out: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}
