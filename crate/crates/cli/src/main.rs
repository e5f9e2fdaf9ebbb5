//! Pipeline driver: datasets, pretraining, conditioning, sampling, and
//! reports, one subcommand each, all reproducible from a config and seed.

mod config;
mod manifest;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use condgan_core::error::{Error, Result};

use crate::config::Config;

#[derive(Parser)]
#[command(
    name = "condgan",
    version,
    about = "Condition a frozen GAN generator with a frozen classifier"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Debug, Args)]
struct StageArgs {
    /// JSON config; omitted sections use built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides every stage seed with one value.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the epoch count of the train-* subcommand it is given to.
    #[arg(long)]
    epochs: Option<u32>,
    /// Overrides the variance-regularization weight (train-ig and all).
    #[arg(long)]
    lambda: Option<f64>,
    /// Overrides paths.workdir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic blocks dataset.
    GenData(StageArgs),
    /// Adversarially pretrain generator and discriminator.
    TrainGan(StageArgs),
    /// Pretrain the frozen classifier.
    TrainClassifier(StageArgs),
    /// Train the input generator against the frozen networks.
    TrainIg(StageArgs),
    /// Export per-class conditional sample grids as PPM.
    Sample(StageArgs),
    /// Score conditional samples and write report.json / report.txt.
    Eval(StageArgs),
    /// Print the stored report; writes nothing.
    Report(StageArgs),
    /// Run every stage in order.
    All(StageArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::TrainGan(_) => "train-gan",
            Command::TrainClassifier(_) => "train-classifier",
            Command::TrainIg(_) => "train-ig",
            Command::Sample(_) => "sample",
            Command::Eval(_) => "eval",
            Command::Report(_) => "report",
            Command::All(_) => "all",
        }
    }

    fn args(&self) -> &StageArgs {
        match self {
            Command::GenData(a)
            | Command::TrainGan(a)
            | Command::TrainClassifier(a)
            | Command::TrainIg(a)
            | Command::Sample(a)
            | Command::Eval(a)
            | Command::Report(a)
            | Command::All(a) => a,
        }
    }
}

/// Config file plus flag overrides, validated as a whole.
fn effective_config(cmd: &Command) -> Result<Config> {
    let args = cmd.args();
    let mut cfg = match &args.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = args.seed {
        cfg.override_seed(seed);
    }
    if let Some(epochs) = args.epochs {
        match cmd {
            Command::TrainGan(_) => cfg.gan.epochs = epochs,
            Command::TrainClassifier(_) => cfg.classifier.epochs = epochs,
            Command::TrainIg(_) => cfg.steer.epochs = epochs,
            _ => {
                return Err(Error::Config(format!(
                    "--epochs is ambiguous for `{}`; use it with train-gan, \
                     train-classifier, or train-ig",
                    cmd.name()
                )))
            }
        }
    }
    if let Some(lambda) = args.lambda {
        match cmd {
            Command::TrainIg(_) | Command::All(_) => cfg.steer.lambda = lambda,
            _ => {
                return Err(Error::Config(format!(
                    "--lambda only applies to train-ig and all, not `{}`",
                    cmd.name()
                )))
            }
        }
    }
    if let Some(out) = &args.out {
        cfg.paths.workdir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cmd: &Command) -> Result<()> {
    let cfg = effective_config(cmd)?;
    match cmd {
        Command::GenData(_) => stages::run_gen_data(&cfg),
        Command::TrainGan(_) => stages::run_train_gan(&cfg),
        Command::TrainClassifier(_) => stages::run_train_classifier(&cfg),
        Command::TrainIg(_) => stages::run_train_ig(&cfg),
        Command::Sample(_) => stages::run_sample(&cfg),
        Command::Eval(_) => stages::run_eval(&cfg),
        Command::Report(_) => stages::run_report(&cfg),
        Command::All(_) => stages::run_all(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{err}");
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{err}");
                    ExitCode::from(1)
                }
            };
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
