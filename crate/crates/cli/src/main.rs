//! `abslab` — train and compare adaptive-batch RL runs on the toy
//! environments.
//!
//! Exit codes: 0 ok, 1 configuration error, 2 training divergence,
//! 3 I/O or malformed-data error.

use abslab_core::compare::compare_runs;
use abslab_core::config::{parse_config_with, ConfigOverrides, Mode};
use abslab_core::selftest::run_selftest;
use abslab_core::train::run_experiment;
use abslab_core::Error;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "abslab", version, about = "Adaptive batch scaling laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one training experiment from a config file.
    Train {
        /// Path to a `key = value` config file.
        #[arg(long)]
        config: PathBuf,
        /// Override the training mode (e.g. pqn-abs).
        #[arg(long)]
        mode: Option<String>,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize finished runs (early/late decile returns).
    Compare {
        /// Run directories containing metrics.csv.
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Also write SVG line charts next to the first run directory.
        #[arg(long)]
        svg: bool,
    },
    /// Run the built-in oracle battery.
    Selftest,
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train {
            config,
            mode,
            seed,
            out,
        } => {
            let mode = mode.map(|m| m.parse::<Mode>()).transpose()?;
            let cfg = parse_config_with(
                &config,
                &ConfigOverrides {
                    mode,
                    seed,
                    out_dir: out,
                },
            )?;
            let result = run_experiment(&cfg)?;
            println!(
                "run {} finished: {} iterations, {} env steps, final return {}",
                cfg.run_id,
                result.iterations,
                result.global_steps,
                result
                    .final_return
                    .map(|r| format!("{r:.4}"))
                    .unwrap_or_else(|| "n/a".into()),
            );
            println!("artifacts in {}", result.out_dir.display());
            Ok(())
        }
        Command::Compare { dirs, svg } => {
            let chart_dir = svg.then(|| {
                dirs[0]
                    .parent()
                    .map(|p| p.to_path_buf())
                    .unwrap_or_else(|| PathBuf::from("."))
            });
            let table = compare_runs(&dirs, chart_dir.as_deref())?;
            print!("{table}");
            if let Some(dir) = chart_dir {
                println!("charts written to {}", dir.display());
            }
            Ok(())
        }
        Command::Selftest => {
            let report = run_selftest()?;
            print!("{report}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
