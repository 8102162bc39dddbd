//! Experiment runner for distribution-dependent dropout.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

const CONFIG_HELP: &str = "\
Config file format (TOML; every key optional, flags override file values):

  [run]       seed, out, wall_clock
  [data]      train, test, dim            (sparse text paths)
              train_images, train_labels,
              test_images, test_labels    (IDX paths)
  [data.synthetic]  d, n, test_n, moments, noise
  [shallow]   mode, delta, k, smoothing, steps, eval_every, lr, grid,
              last_iterate
  [deep]      arch, mode, delta, k, epochs, batch_size, lr, lr_drop_epoch,
              momentum, init_std, eval_every

Modes: s-dropout (Bernoulli drop, 1/(1-delta) rescale), d-dropout
(multinomial with probabilities from training-set second moments),
u-dropout (uniform multinomial), e-dropout (multinomial with probabilities
recomputed from each mini-batch; deep only). When k is not given it
defaults to d*(1-delta) rounded half up, pairing delta=0.5 with k=0.5d.

Outputs: trace CSV (step,train_err,train_loss,test_err,test_loss,elapsed_ms),
summary.json, verification report.txt/report.json, checkpoint.bin (deep).
Traces are byte-identical across runs with the same seed and config;
pass --wall-clock to record real elapsed milliseconds instead.";

#[derive(Parser)]
#[command(
    name = "evodrop",
    version,
    about = "Multinomial, data-dependent and evolutional dropout: verification and training experiments",
    after_long_help = CONFIG_HELP
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the closed-form verification suite against its oracles
    Verify(VerifyArgs),
    /// Train a linear model with dropout SGD on sparse text or synthetic data
    TrainShallow(TrainShallowArgs),
    /// Train a dense feedforward net with mini-batch SGD and momentum
    TrainDeep(TrainDeepArgs),
    /// Paired s-dropout vs d-dropout shallow run with a shared seed
    Compare(TrainShallowArgs),
    /// Generate a synthetic dataset and write it as sparse text
    GenData(GenDataArgs),
}

#[derive(Args)]
pub struct CommonArgs {
    /// TOML config file; flags override file values (see --help)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// RNG seed; required for training runs (wall-clock seeding is not supported)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for traces, summaries and reports
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Record wall-clock elapsed_ms in traces (default keeps traces byte-stable)
    #[arg(long)]
    pub wall_clock: bool,
}

#[derive(Args)]
pub struct VerifyArgs {
    /// RNG seed for the Monte Carlo oracles
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Monte Carlo trials per check (smaller budgets widen the bands)
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
    /// Output directory for report.txt / report.json
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Test hook: corrupt a closed form to prove failures surface
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
}

#[derive(Args)]
pub struct TrainShallowArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Training data in sparse text format
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Test data in sparse text format
    #[arg(long)]
    pub test_data: Option<PathBuf>,
    /// Feature dimension override for sparse text data
    #[arg(long)]
    pub dim: Option<usize>,
    /// Generate synthetic data instead: d,n or d,n,test_n
    #[arg(long)]
    pub synthetic: Option<String>,
    /// Synthetic second-moment profile: loguniform:LO:HI or explicit:a,b,c
    #[arg(long)]
    pub moments: Option<String>,
    /// Synthetic label noise relative to the margin std
    #[arg(long)]
    pub noise: Option<f64>,
    /// s-dropout, d-dropout or u-dropout
    #[arg(long)]
    pub mode: Option<String>,
    /// Drop probability for s-dropout (also sets the default k)
    #[arg(long)]
    pub delta: Option<f64>,
    /// Multinomial trial count; default d*(1-delta) rounded half up
    #[arg(long)]
    pub k: Option<u64>,
    /// Smoothing added under the square root of the sampling rule
    #[arg(long)]
    pub smoothing: Option<f64>,
    /// SGD steps
    #[arg(long)]
    pub steps: Option<u64>,
    /// Evaluation cadence in steps
    #[arg(long)]
    pub eval_every: Option<u64>,
    /// Constant step size
    #[arg(long)]
    pub lr: Option<f64>,
    /// Tune the step size over the grid 0.1..0.0001 per method
    #[arg(long)]
    pub grid: bool,
    /// Report the last iterate instead of the averaged iterate
    #[arg(long)]
    pub last_iterate: bool,
    /// Also run the paired s-dropout vs d-dropout comparison
    #[arg(long)]
    pub compare: bool,
}

#[derive(Args)]
pub struct TrainDeepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Training images in IDX format
    #[arg(long)]
    pub train_images: Option<PathBuf>,
    /// Training labels in IDX format
    #[arg(long)]
    pub train_labels: Option<PathBuf>,
    /// Test images in IDX format
    #[arg(long)]
    pub test_images: Option<PathBuf>,
    /// Test labels in IDX format
    #[arg(long)]
    pub test_labels: Option<PathBuf>,
    /// Layer sizes, e.g. 784,150,10
    #[arg(long)]
    pub arch: Option<String>,
    /// s-dropout, u-dropout or e-dropout
    #[arg(long)]
    pub mode: Option<String>,
    /// Drop probability for s-dropout (also sets the default k)
    #[arg(long)]
    pub delta: Option<f64>,
    /// Multinomial trial count; default first-hidden-width*(1-delta), rounded half up
    #[arg(long)]
    pub k: Option<u64>,
    /// Training epochs
    #[arg(long)]
    pub epochs: Option<u64>,
    /// Mini-batch size
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Initial learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    /// Epoch at which the learning rate drops by 10x
    #[arg(long)]
    pub lr_drop_epoch: Option<u64>,
    /// Momentum coefficient
    #[arg(long)]
    pub momentum: Option<f64>,
    /// Std of the Gaussian weight initialization
    #[arg(long)]
    pub init_std: Option<f64>,
    /// Evaluation cadence in epochs
    #[arg(long)]
    pub eval_every: Option<u64>,
}

#[derive(Args)]
pub struct GenDataArgs {
    /// Feature dimension
    #[arg(long)]
    pub dim: usize,
    /// Number of examples
    #[arg(long)]
    pub count: usize,
    /// Second-moment profile: loguniform:LO:HI or explicit:a,b,c
    #[arg(long)]
    pub moments: Option<String>,
    /// Label noise relative to the margin std
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// RNG seed (the test split, when requested, uses seed+1)
    #[arg(long)]
    pub seed: u64,
    /// Output file for the training split
    #[arg(long)]
    pub out: PathBuf,
    /// Number of test examples to generate alongside
    #[arg(long)]
    pub test_count: Option<usize>,
    /// Output file for the test split
    #[arg(long)]
    pub test_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Verify(args) => commands::run_verify(args).map(|passed| {
            if passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }),
        Command::TrainShallow(args) => {
            commands::run_train_shallow(args, false).map(|()| ExitCode::SUCCESS)
        }
        Command::Compare(args) => {
            commands::run_train_shallow(args, true).map(|()| ExitCode::SUCCESS)
        }
        Command::TrainDeep(args) => commands::run_train_deep(args).map(|()| ExitCode::SUCCESS),
        Command::GenData(args) => commands::run_gen_data(args).map(|()| ExitCode::SUCCESS),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
