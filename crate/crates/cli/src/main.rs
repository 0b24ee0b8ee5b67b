use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dtcascade_cli::{registry, run_experiment, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "dtcascade", version, about = "Run reproducible discrete-time cascade experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its report.
    Run {
        #[arg(long)]
        experiment: String,
        /// JSON file with experiment parameters; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// List registered experiments.
    List,
}

fn load(path: &Option<PathBuf>) -> Result<serde_json::Value, CliError> {
    match path {
        None => Ok(serde_json::Value::Null),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
        }
    }
}

/// Executes a parsed command and returns the process exit code.
fn dispatch(cli: Cli) -> u8 {
    match cli.command {
        Command::List => {
            for (name, about, _) in registry() {
                println!("{name:<22} {about}");
            }
            0
        }
        Command::Run { experiment, config, out, seed, jobs } => {
            let result = load(&config).and_then(|params| {
                if jobs == Some(0) {
                    return Err(CliError::Config("--jobs must be positive".into()));
                }
                run_experiment(&ExperimentConfig { name: experiment, params, out_dir: out, seed, parallelism: jobs })
            });
            match result {
                Ok(report) => {
                    println!(
                        "{}: {:?} ({} files, config {})",
                        report.experiment,
                        report.status,
                        report.files.len() + 1,
                        &report.config_hash[..12]
                    );
                    report.status.exit_code() as u8
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code() as u8
                }
            }
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(dispatch(Cli::parse()))
}
