use std::path::PathBuf;
use std::process::ExitCode;

use adalezo::experiment::{parse_config, run_experiment, RunMode};
use adalezo::validate::CLAIMS;
use clap::Parser;

/// Runs zeroth-order optimizer comparisons and validation suites from a TOML
/// configuration and writes CSV artifacts.
///
/// Exit status: 0 when every run finished and every validation passed, 1 when
/// something failed (see failures.csv), 2 on configuration or I/O errors.
#[derive(Debug, Parser)]
#[command(name = "adalezo", version)]
struct Cli {
    /// Experiment configuration file.
    #[arg(required_unless_present = "list_claims")]
    config: Option<PathBuf>,

    /// Write artifacts here instead of the configured output_dir.
    #[arg(short, long)]
    output_dir: Option<PathBuf>,

    /// Number of worker threads.
    #[arg(short, long)]
    workers: Option<usize>,

    /// Skip the method runs and only evaluate the configured validations.
    #[arg(long)]
    validate_only: bool,

    /// Print every validation claim id and exit.
    #[arg(long)]
    list_claims: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.list_claims {
        for (id, what) in CLAIMS {
            println!("{id}\t{what}");
        }
        return ExitCode::SUCCESS;
    }
    let path = cli.config.expect("clap enforces a config path");
    let mut cfg = match parse_config(&path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(dir) = cli.output_dir {
        cfg.output_dir = dir;
    }
    if let Some(w) = cli.workers {
        if w == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(2);
        }
        cfg.workers = w;
    }
    let mode = RunMode {
        validate_only: cli.validate_only,
    };
    match run_experiment(&cfg, mode) {
        Ok(outcome) => {
            for f in &outcome.failures {
                eprintln!("FAILED {} {}: {}", f.kind, f.id, f.message);
            }
            eprintln!(
                "{} runs, {} validation reports, {} failures; artifacts in {}",
                outcome.records.len(),
                outcome.validation.len(),
                outcome.failures.len(),
                cfg.output_dir.display()
            );
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
