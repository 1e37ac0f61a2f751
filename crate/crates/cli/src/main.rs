use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod run;

#[derive(Parser)]
#[command(name = "pricenet", version, about = "Price regression and price-segment classification from product images")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
pub struct Global {
    /// TOML run configuration; command-line flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root under which each run gets a timestamped directory.
    #[arg(long, global = true, env = run::OUT_ENV)]
    pub out_root: Option<PathBuf>,
    /// Write this run's artifacts to exactly this directory (created; must be empty).
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads for parallel loops (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Only print warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TaskArg {
    Reg,
    Class,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum LayoutArg {
    Desk,
    Paper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Occlusion,
    Saliency,
    Gradcam,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic product dataset (images, manifest, attributes).
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Image side in pixels.
        #[arg(long, default_value_t = 64)]
        side: usize,
        /// Bound on relative price noise.
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        accessory_rate: Option<f64>,
    },
    /// Split a manifest into train and test manifests.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        train_fraction: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train PriceNet on a manifest; writes a checkpoint and the loss curve.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "reg")]
        task: TaskArg,
        #[command(flatten)]
        net: NetFlags,
    },
    /// Evaluate a checkpoint on a manifest.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Predict prices or segments for individual images.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Fit and evaluate the classical baselines (and optionally a trained network).
    Baseline {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, value_enum, default_value = "reg")]
        task: TaskArg,
        /// Trained checkpoint: adds linear regression on its features and its own row.
        #[arg(long)]
        network: Option<PathBuf>,
        #[arg(long)]
        hog_dims: Option<usize>,
        #[arg(long)]
        cnn_dims: Option<usize>,
        #[arg(long)]
        svm_c: Option<f64>,
        #[arg(long)]
        svm_gamma: Option<f64>,
    },
    /// Coarse log-grid then refined hyperparameter search on validation loss.
    Search {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "reg")]
        task: TaskArg,
        /// Maximum number of trials.
        #[arg(long)]
        budget: usize,
        /// Learning-rate range as LOW:HIGH:POINTS (log-spaced coarse grid).
        #[arg(long)]
        lr_range: Option<String>,
        #[arg(long)]
        batch_size_range: Option<String>,
        #[arg(long)]
        hidden_units_range: Option<String>,
        #[arg(long)]
        epochs_range: Option<String>,
        /// Refined grid points per parameter.
        #[arg(long, default_value_t = 5)]
        refine_points: usize,
        #[command(flatten)]
        net: NetFlags,
    },
    /// Explain one prediction with an occlusion, saliency, or Grad-CAM map.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        /// Occlusion window in pixels.
        #[arg(long)]
        window: Option<usize>,
        /// Occlusion stride in pixels (default: the window).
        #[arg(long)]
        stride: Option<usize>,
        /// Class to explain (classification heads; default: the predicted class).
        #[arg(long)]
        class: Option<usize>,
        /// Grad-CAM layer name (default: last fire module concat).
        #[arg(long)]
        layer: Option<String>,
    },
}

/// Training and architecture flags; each overrides the config file when given.
#[derive(Args, Clone, Default)]
pub struct NetFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_decay: Option<f64>,
    #[arg(long)]
    pub hidden_units: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Shuffle, dropout, and augmentation seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Weight initialization seed.
    #[arg(long)]
    pub model_seed: Option<u64>,
    #[arg(long, value_enum)]
    pub layout: Option<LayoutArg>,
    #[arg(long)]
    pub width: Option<f64>,
    /// Disable all augmentation.
    #[arg(long)]
    pub no_augment: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.global.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::dispatch(&cli.global, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<commands::UsageError>() => {
            eprintln!("error: {e:#}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
