use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wassflow_cli::config::ExperimentConfig;
use wassflow_cli::experiments::RunError;

/// Runs wassflow experiments from a configuration file.
#[derive(Parser)]
#[command(name = "wassflow", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiments named in a config file.
    Run {
        config: PathBuf,
        /// Output directory; overrides `[output] dir`. Defaults to `out`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for the parallel stages.
        #[arg(long)]
        threads: Option<usize>,
        /// Replace a tolerance, as `name=value`. Repeatable.
        #[arg(long = "tol-override", value_name = "NAME=VALUE")]
        tol_override: Vec<String>,
    },
    /// List the available experiments.
    List,
}

const EXIT_CHECKS_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn config_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_CONFIG)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            print!("{}", wassflow_cli::list());
            ExitCode::SUCCESS
        }
        Command::Run { config, out, threads, tol_override } => {
            if let Some(n) = threads {
                if n == 0 {
                    return config_error("--threads must be at least 1");
                }
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    return config_error(e);
                }
            }
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => return config_error(format!("cannot read {}: {e}", config.display())),
            };
            let mut cfg = match ExperimentConfig::from_text(&text) {
                Ok(c) => c,
                Err(e) => return config_error(e),
            };
            if let Err(e) = cfg.override_tolerances(&tol_override) {
                return config_error(e);
            }
            let dir = out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
            match wassflow_cli::run(&cfg, &dir) {
                Ok(report) => {
                    print!("{}", wassflow_cli::summary(&report));
                    println!("report: {}", dir.join("report.json").display());
                    if report.passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(EXIT_CHECKS_FAILED)
                    }
                }
                Err(e @ RunError::Config(_)) => config_error(e),
                Err(e @ RunError::Numerical { .. }) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_NUMERICAL)
                }
            }
        }
    }
}
