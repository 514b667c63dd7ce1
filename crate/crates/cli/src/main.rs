//! `ssr`: render datasets, train, run inference, evaluate, benchmark and make comparison figures.

mod commands;
mod config;
mod images;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config files or values; exit code 2.
    Config(String),
    /// Anything that fails while running; exit code 1.
    Runtime(String),
}

impl From<ssr_core::Error> for CliError {
    fn from(e: ssr_core::Error) -> Self {
        match e {
            ssr_core::Error::Config(_) => CliError::Config(e.to_string()),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "ssr", version, about = "Sparse-sampling path tracing with learned reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug, Default)]
pub struct Common {
    /// JSON file with configuration keys for this command.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one configuration key (dotted path), e.g. `--set loss.albedo=2.5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Render a sequence with its GBuffer, motion and optional reference into a dataset directory.
    Render(commands::RenderArgs),
    /// Train a model on a rendered dataset.
    Train(commands::TrainArgs),
    /// Reconstruct every frame of a split; writes PNG and linear PFM per frame.
    Infer(commands::InferArgs),
    /// Per-frame PSNR/SSIM/RMSE of model and baseline against the reference.
    Eval(commands::EvalArgs),
    /// Time quarter-rate against full-rate sampling.
    Bench(commands::BenchArgs),
    /// Side-by-side grids: input, baseline, model, reference.
    Figures(commands::FiguresArgs),
}

fn threads_from_env() -> Result<usize, CliError> {
    match std::env::var("SSR_THREADS") {
        Err(_) => Ok(0),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Config(format!("SSR_THREADS={s:?} is not a positive integer"))),
        },
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let threads = threads_from_env()?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    match cli.command {
        Command::Render(a) => commands::render(a),
        Command::Train(a) => commands::train(a),
        Command::Infer(a) => commands::infer(a),
        Command::Eval(a) => commands::eval(a),
        Command::Bench(a) => commands::bench(a),
        Command::Figures(a) => commands::figures(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let line = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("ssr: error: {line}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(m)) => {
            eprintln!("ssr: error: {}", one_line(&m));
            ExitCode::from(2)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("ssr: error: {}", one_line(&m));
            ExitCode::from(1)
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
