//! `intent`: generate data, train, evaluate and run the classifier.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use intent_core::Error;

#[derive(Parser, Debug)]
#[command(name = "intent", version, about = "Operator intention detection from multichannel traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration sources shared by the config-driven subcommands.
/// Precedence: `--set` and `--seed` over the file over built-in defaults.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set train.epochs=20`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Shorthand for `--set seed=N`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    pub print_config: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset as CSV traces plus manifest.csv.
    Generate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model on the first split ratio of an experiment config.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run experiments and write their reports.
    Eval {
        /// Experiment config; repeat for several experiments.
        #[arg(long = "config", required = true)]
        configs: Vec<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        print_config: bool,
        /// Report directory; reports go to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Experiments run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value = "text")]
        format: String,
        /// Also write each split's model and stats to the report directory.
        #[arg(long, requires = "out")]
        models: bool,
    },
    /// Classify one CSV trace.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Defaults to stats.csv beside the model.
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long)]
        trace: PathBuf,
        /// One class name per line; defaults to classes.txt beside the model.
        #[arg(long)]
        classes: Option<PathBuf>,
    },
    /// Classify a frame stream from stdin or one TCP connection.
    Stream {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long)]
        classes: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        window: usize,
        #[arg(long, default_value_t = 100)]
        hop: usize,
        /// Accept one connection on this address instead of reading stdin.
        #[arg(long, value_name = "ADDR")]
        listen: Option<String>,
    },
}

/// 2 for configuration problems, 3 for bad data, 4 for training or runtime failures.
fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::Config(_) => 2,
        Error::Dimension(_)
        | Error::DegenerateInput(_)
        | Error::Input(_)
        | Error::Relabel(_)
        | Error::Fusion(_)
        | Error::Format { .. }
        | Error::NonMonotonicTime { .. }
        | Error::Labeling { .. }
        | Error::InsufficientSupport { .. }
        | Error::ModelFormat { .. }
        | Error::Io(_) => 3,
        _ => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("INTENT_LOG", "info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Generate { config, out } => commands::generate(&config, &out),
        Command::Train { config, out } => commands::train(&config, &out),
        Command::Eval {
            configs,
            overrides,
            seed,
            print_config,
            out,
            jobs,
            format,
            models,
        } => commands::eval(&commands::EvalArgs {
            configs,
            overrides,
            seed,
            print_config,
            out,
            jobs,
            format,
            models,
        }),
        Command::Predict {
            model,
            stats,
            trace,
            classes,
        } => commands::predict(&model, stats.as_deref(), &trace, classes.as_deref()),
        Command::Stream {
            model,
            stats,
            classes,
            window,
            hop,
            listen,
        } => commands::stream(&model, stats.as_deref(), classes.as_deref(), window, hop, listen.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
