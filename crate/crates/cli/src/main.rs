use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use multihost_cli::config::KEY_REFERENCE;
use multihost_cli::{exit, parse_config_file, parse_config_str, run, Command, RunError};

/// Principal eigenvalues, simulations and third-host maps for populations
/// spread over migration-coupled hosts.
#[derive(Debug, Parser)]
#[command(name = "multihost", version, after_long_help = KEY_REFERENCE)]
struct Cli {
    /// What to run; may instead be given as `command` in the config file.
    command: Option<Command>,

    /// TOML configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,

    /// Override a configuration key, e.g. `--set model.delta=0.5`. Repeatable;
    /// overrides win over the file.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Shorthand for `--set output_dir=DIR`.
    #[arg(short, long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Shorthand for `--set workers=N`.
    #[arg(short, long)]
    workers: Option<usize>,

    /// Exit with status 4 when a built-in check of the results fails.
    #[arg(long)]
    assert: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut overrides = cli.overrides.clone();
    if let Some(dir) = &cli.out {
        overrides.push(format!("output_dir={:?}", dir.display().to_string()));
    }
    if let Some(w) = cli.workers {
        overrides.push(format!("workers={w}"));
    }
    let parsed = match &cli.config {
        Some(path) => parse_config_file(path, &overrides, cli.command).map(|(c, text)| (c, Some(text))),
        None => parse_config_str("", &overrides, cli.command).map(|c| (c, None)),
    };
    let (config, input) = match parsed {
        Ok(v) => v,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(exit::CONFIG as u8);
        }
    };
    match run(&config, input.as_deref(), cli.assert) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            println!("output: {}", outcome.dir.display());
            ExitCode::from(exit::SUCCESS as u8)
        }
        Err(e) => {
            eprintln!("{e}");
            let code = match e {
                RunError::Io(_) => exit::IO,
                RunError::Solver { .. } => exit::SOLVER,
                RunError::Assertion(_) => exit::ASSERTION,
            };
            ExitCode::from(code as u8)
        }
    }
}
