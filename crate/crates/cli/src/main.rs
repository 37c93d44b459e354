use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use curriculum_cli::config::{input_path, output_path};
use curriculum_cli::{cmd_forge, cmd_simulate, cmd_train_toy, cmd_validate, AppConfig, CliError};
use curriculum_core::forge::RecordPool;
use serde::Serialize;

/// Corpus forge, curriculum scheduler simulator and toy trainer.
///
/// Exit status: 0 success, 1 data or validation error, 2 configuration
/// error, 3 backend error.
#[derive(Parser)]
#[command(name = "curriculum", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a VQA corpus from detection annotations and organ masks.
    Forge {
        /// JSON configuration; $MEDCLM_CONFIG takes precedence.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        masks: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report backend failures per annotation instead of aborting.
        #[arg(long)]
        skip_failed: bool,
    },
    /// Run the scheduler against a scripted loss scenario.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a per-epoch CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Train the toy model on a corpus under the curriculum scheduler.
    TrainToy {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Overrides harness.epochs.
        #[arg(long)]
        epochs: Option<u32>,
        /// Overrides harness.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check every record of a corpus file.
    Validate {
        #[arg(long)]
        corpus: PathBuf,
        /// Treat the file as a Hard pool, where rationales may be empty.
        #[arg(long)]
        hard: bool,
    },
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("summaries serialize"));
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Forge {
            config,
            dataset,
            masks,
            out,
            skip_failed,
        } => {
            let config = AppConfig::load(config.as_deref())?;
            let dataset = input_path(dataset, &config.io.dataset, "dataset")?;
            let masks = input_path(masks, &config.io.masks, "masks")?;
            let out = output_path(out, &config.io.out)?;
            print_json(&cmd_forge(&config, &dataset, &masks, &out, skip_failed)?);
        }
        Command::Simulate {
            config,
            scenario,
            out,
            csv,
        } => {
            let config = AppConfig::load(config.as_deref())?;
            let scenario = input_path(scenario, &config.io.scenario, "scenario")?;
            let out = output_path(out, &config.io.out)?;
            let csv = csv.or(config.io.csv.clone());
            print_json(&cmd_simulate(&config, &scenario, &out, csv.as_deref())?);
        }
        Command::TrainToy {
            config,
            corpus,
            out,
            csv,
            epochs,
            seed,
        } => {
            let mut config = AppConfig::load(config.as_deref())?;
            if let Some(e) = epochs {
                config.harness.epochs = e;
            }
            if let Some(s) = seed {
                config.harness.seed = s;
            }
            let corpus = input_path(corpus, &config.io.corpus, "corpus")?;
            let out = output_path(out, &config.io.out)?;
            let csv = csv.or(config.io.csv.clone());
            print_json(&cmd_train_toy(&config, &corpus, &out, csv.as_deref())?);
        }
        Command::Validate { corpus, hard } => {
            let pool = if hard { RecordPool::Hard } else { RecordPool::Main };
            let report = cmd_validate(&corpus, pool)?;
            print_json(&report);
            if !report.is_valid() {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
