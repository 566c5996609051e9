use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "wig", version, about = "Weighted sigmoid gate experiments")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate scalar WiG curves and their derivatives.
    PlotActivation(PlotArgs),
    /// Certify analytic gradients against central finite differences.
    GradCheck(GradCheckArgs),
    /// Check the special-case limits and the fused network equivalence.
    EquivCheck(EquivArgs),
    /// Train a classifier on CIFAR-format binaries.
    TrainClassify(TrainArgs),
    /// Train a residual denoiser on a directory of PGM/PPM images.
    TrainDenoise(TrainArgs),
    /// Evaluate a classifier checkpoint on a CIFAR test split.
    EvalClassify(EvalArgs),
    /// Restore one image with a denoiser checkpoint.
    DenoiseImage(DenoiseArgs),
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Gate weights.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [1.0])]
    pub w: Vec<f64>,
    /// Gate biases; every (w, b) combination is tabulated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [0.0])]
    pub b: Vec<f64>,
    /// Closed interval `lo,hi` of x.
    #[arg(long, allow_hyphen_values = true, default_value = "-6,6")]
    pub range: String,
    #[arg(long, default_value_t = 241)]
    pub samples: usize,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GradTarget {
    WigDense,
    WigConv,
    Network,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    #[arg(long, value_enum)]
    pub target: GradTarget,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
    /// Network spec file for the `network` target; the desk denoiser by default.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Corrupts the analytic result; negative control for the checker.
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

#[derive(Debug, Args)]
pub struct EquivArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// key=value configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Training data; overrides `train_data` from the config.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory for the report and checkpoint.
    #[arg(long)]
    pub out: PathBuf,
    /// Extra `key=value` overrides applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Train once per listed activation into `<out>/<activation>` and
    /// write a comparison table.
    #[arg(long, value_delimiter = ',')]
    pub compare: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory holding the CIFAR test batch.
    #[arg(long)]
    pub data: PathBuf,
    /// Evaluate only the first N test images.
    #[arg(long)]
    pub subset: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Image to restore.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Gaussian noise added to the input first, on the 8-bit scale.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Reference for PSNR/SSIM; the input itself when omitted.
    #[arg(long)]
    pub clean: Option<PathBuf>,
    /// Also write the noisy image fed to the network.
    #[arg(long)]
    pub noisy_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
