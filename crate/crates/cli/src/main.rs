mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::CliError;
use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "emph", version, about = "Exact multi-parameter persistent homology of time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic sinusoid dataset as a UCR-style CSV.
    Synth(SynthArgs),
    /// Print the barcode of a series (or of explicit radii) along a ray or curve.
    Barcode(BarcodeArgs),
    /// Print the persistence image of one series as an r x r CSV.
    Image(ImageArgs),
    /// Train a classifier, learning the filtration unless disabled.
    Train(TrainArgs),
    /// Evaluate a checkpoint on held-out data.
    Eval(EvalArgs),
    /// Grid-search learning rate, sigma and segment count by k-fold cross-validation.
    Crossval(CrossvalArgs),
    /// Time the exact direction gradient against finite differences.
    Bench(BenchArgs),
    /// Evaluate the two-parameter image and landscape on a fixture.
    MultipersDemo(DemoArgs),
}

/// Where series come from: a UCR file or one of the synthetic sets.
#[derive(Args, Clone, Default)]
pub struct DataArgs {
    /// UCR-style file: label first, then the samples; comma, tab or space separated.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Separate test file. Without it the input is split by `test_fraction`.
    #[arg(long)]
    pub test_input: Option<PathBuf>,
    /// Generate `two-class` or `three-class` data instead of reading a file.
    #[arg(long)]
    pub synth: Option<String>,
    /// Synthetic series per signal.
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// Standard deviation of the synthetic Gaussian noise.
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    /// Seed of the synthetic generator.
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
}

/// Training options. Each flag overrides the key of the same name in `--config`.
#[derive(Args, Clone, Default)]
pub struct ConfigArgs {
    /// Flat `key = value` file with defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub modes: Option<String>,
    #[arg(long)]
    pub dimension: Option<String>,
    #[arg(long)]
    pub segments: Option<String>,
    #[arg(long)]
    pub horizon: Option<String>,
    #[arg(long)]
    pub resolution: Option<String>,
    #[arg(long)]
    pub sigma: Option<String>,
    #[arg(long)]
    pub hidden: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<String>,
    #[arg(long)]
    pub direction_learning_rate: Option<String>,
    /// `constant` or `harmonic`.
    #[arg(long)]
    pub schedule: Option<String>,
    /// `sgd` or `adam` (network weights only).
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub c1: Option<String>,
    #[arg(long)]
    pub c2: Option<String>,
    /// `true` or `false`.
    #[arg(long)]
    pub learn_filtration: Option<String>,
    /// `frozen` or `exact`.
    #[arg(long)]
    pub scale_gradient: Option<String>,
    /// `exact` or `finite-difference`.
    #[arg(long)]
    pub gradient_method: Option<String>,
    #[arg(long)]
    pub fd_step: Option<String>,
    /// One comma-separated vector per segment, segments separated by `;`.
    #[arg(long)]
    pub initial_directions: Option<String>,
    #[arg(long)]
    pub folds: Option<String>,
    #[arg(long)]
    pub test_fraction: Option<String>,
    /// Output directory (or file, for commands that write one file).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut run = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let flags = [
            ("modes", &self.modes),
            ("dimension", &self.dimension),
            ("segments", &self.segments),
            ("horizon", &self.horizon),
            ("resolution", &self.resolution),
            ("sigma", &self.sigma),
            ("hidden", &self.hidden),
            ("epochs", &self.epochs),
            ("learning_rate", &self.learning_rate),
            ("direction_learning_rate", &self.direction_learning_rate),
            ("schedule", &self.schedule),
            ("optimizer", &self.optimizer),
            ("seed", &self.seed),
            ("c1", &self.c1),
            ("c2", &self.c2),
            ("learn_filtration", &self.learn_filtration),
            ("scale_gradient", &self.scale_gradient),
            ("gradient_method", &self.gradient_method),
            ("fd_step", &self.fd_step),
            ("initial_directions", &self.initial_directions),
            ("folds", &self.folds),
            ("test_fraction", &self.test_fraction),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                run.set(key, v)?;
            }
        }
        if self.out.is_some() {
            run.out = self.out.clone();
        }
        run.train.validate()?;
        Ok(run)
    }
}

#[derive(Args)]
pub struct SynthArgs {
    /// `two-class` or `three-class`.
    #[arg(long)]
    pub kind: String,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct BarcodeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Use these circle radii instead of a dataset.
    #[arg(long, value_delimiter = ',')]
    pub radii: Option<Vec<f64>>,
    /// Only this row of the dataset.
    #[arg(long)]
    pub row: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    pub modes: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub dimension: u32,
    /// Curve directions, one comma-separated vector per segment separated by `;`.
    /// Defaults to the diagonal ray.
    #[arg(long)]
    pub directions: Option<String>,
    /// Curve parameter length; required with more than one segment.
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ImageArgs {
    #[command(flatten)]
    pub barcode: BarcodeArgs,
    #[arg(long, default_value_t = 10)]
    pub resolution: usize,
    #[arg(long, default_value_t = 0.05)]
    pub sigma: f64,
    /// Grid margin factor over the diagonal barcodes' extent.
    #[arg(long, default_value_t = 2.0)]
    pub c2: f64,
    /// Apply Min-Max scaling before printing.
    #[arg(long)]
    pub scaled: bool,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Evaluate on every series of `--input` instead of its test split.
    #[arg(long)]
    pub all: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct CrossvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Learning rates to try; defaults to the configured one.
    #[arg(long, value_delimiter = ',')]
    pub grid_learning_rate: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub grid_sigma: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub grid_segments: Vec<usize>,
    /// Retrain the best cell on the whole training side and score the test side.
    #[arg(long)]
    pub final_fit: bool,
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 400)]
    pub samples: usize,
    #[arg(long, default_value_t = 80)]
    pub length: usize,
    /// Modes `1..=max_mode` are retained.
    #[arg(long, default_value_t = 5)]
    pub max_mode: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Central-difference step of the start-point gradient check.
    #[arg(long, default_value_t = 1e-7)]
    pub check_step: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct DemoArgs {
    /// Fixture JSON; the bundled worked example when absent.
    #[arg(long)]
    pub fixture: Option<PathBuf>,
    /// Landscape level.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// `ribbon` (region swept by the bars) or `hull` (convex hull of the endpoints).
    #[arg(long, default_value = "ribbon")]
    pub area: String,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Barcode(a) => commands::barcode(&a),
        Command::Image(a) => commands::image(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Crossval(a) => commands::crossval(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::MultipersDemo(a) => commands::multipers_demo(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
