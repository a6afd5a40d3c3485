use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lmn::checkpoint::Checkpoint;
use lmn::commands;
use lmn::config::RunConfig;
use lmn::Error;

const EXIT_ERROR: u8 = 1;
const EXIT_CERTIFY_FAILED: u8 = 2;
const EXIT_AUDIT_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "lmn", version, about = "Train, certify and audit Lipschitz monotonic networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a key=value run config.
    Train { config: PathBuf },
    /// Report MSE/RMSE or accuracy of a checkpoint on a CSV file.
    Evaluate {
        checkpoint: PathBuf,
        data: PathBuf,
        /// Recipe name or file; defaults to the one stored in the checkpoint.
        #[arg(long)]
        recipe: Option<String>,
    },
    /// Recompute the norm certificate from the stored weights.
    Certify { checkpoint: PathBuf },
    /// Sample monotone pairs in the widened data box and count violations.
    Audit {
        checkpoint: PathBuf,
        data: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        recipe: Option<String>,
        /// Write the report here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep one feature with the others held at their medians; CSV output.
    Curve {
        checkpoint: PathBuf,
        #[arg(long)]
        feature: usize,
        #[arg(long, allow_hyphen_values = true)]
        min: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        max: Option<f64>,
        #[arg(long, default_value_t = 101)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write_out(path: &Option<PathBuf>, text: &str) -> Result<(), Error> {
    if let Some(p) = path {
        fs::write(p, text).map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Train { config } => {
            let cfg = RunConfig::load(&config)?;
            let outcome = commands::train(&cfg)?;
            print!("{}", outcome.metrics.to_text());
            println!("output={}", outcome.output.display());
            if outcome.certify.passed() {
                Ok(0)
            } else {
                eprint!("{}", outcome.certify);
                Ok(EXIT_CERTIFY_FAILED)
            }
        }
        Command::Evaluate {
            checkpoint,
            data,
            recipe,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            print!("{}", commands::evaluate(&ck, &data, recipe.as_deref())?.to_text());
            Ok(0)
        }
        Command::Certify { checkpoint } => {
            let report = commands::certify(&Checkpoint::load(&checkpoint)?);
            print!("{report}");
            Ok(if report.passed() { 0 } else { EXIT_CERTIFY_FAILED })
        }
        Command::Audit {
            checkpoint,
            data,
            trials,
            seed,
            recipe,
            out,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let report = commands::audit(&ck, Some(&data), recipe.as_deref(), trials, seed)?;
            let text = report.to_string();
            write_out(&out, &text)?;
            print!("{text}");
            Ok(if report.passed() { 0 } else { EXIT_AUDIT_FAILED })
        }
        Command::Curve {
            checkpoint,
            feature,
            min,
            max,
            steps,
            out,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let points = commands::curve(&ck, feature, min, max, steps)?;
            let csv = commands::curve_csv(&ck.meta.feature_names[feature], &points);
            write_out(&out, &csv)?;
            if out.is_none() {
                print!("{csv}");
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
