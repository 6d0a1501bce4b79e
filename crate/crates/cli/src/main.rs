use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bhgen::commands::{self, with_jobs};
use bhgen::figures;
use bhgen_core::csvio::VerdictStatus;

#[derive(Parser)]
#[command(
    name = "bhgen",
    about = "Simulation, calibration and statistical verification of super-critical \
             branching processes with label-loss average-generation estimation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the Malthusian growth rates and derived constants as key=value lines
    Malthus {
        #[arg(long)]
        config: PathBuf,
    },
    /// Simulate the configured ensemble; writes trajectory/estimator/summary CSVs
    Ensemble {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (defaults to the config's `outputs`, then ./out)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replicate parallelism (default: all cores, or $BHGEN_JOBS)
        #[arg(long, env = "BHGEN_JOBS")]
        jobs: Option<usize>,
    },
    /// Solve the renewal moment grids; writes oracle.csv
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = "BHGEN_JOBS")]
        jobs: Option<usize>,
    },
    /// Check an ensemble directory against an oracle CSV; writes verdict.csv
    Verify {
        /// Directory produced by `bhgen ensemble`
        #[arg(long)]
        ensemble: PathBuf,
        /// CSV produced by `bhgen oracle`
        #[arg(long)]
        oracle: PathBuf,
        /// Verdict CSV path (defaults to <ensemble>/verdict.csv)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit the CSV datasets behind the bundled demonstration studies
    Figures {
        #[arg(long)]
        out: PathBuf,
        /// Restrict to specific panels (e.g. --panel fig3a --panel fig10b)
        #[arg(long = "panel")]
        panels: Vec<String>,
        #[arg(long, env = "BHGEN_JOBS")]
        jobs: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> bhgen_core::Result<ExitCode> {
    match cli.command {
        Command::Malthus { config } => {
            print!("{}", commands::cmd_malthus(&config)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Ensemble { config, out, jobs } => {
            let dir = commands::cmd_ensemble(&config, out.as_deref(), jobs)?;
            eprintln!("ensemble written to {}", dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { config, out, jobs } => {
            let path = commands::cmd_oracle(&config, out.as_deref(), jobs)?;
            eprintln!("oracle written to {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            ensemble,
            oracle,
            out,
        } => {
            let (rows, all_pass) = commands::cmd_verify(&ensemble, &oracle, out.as_deref())?;
            for row in &rows {
                println!(
                    "{:<5} {} measured={} bound={} {}",
                    row.status.as_str(),
                    row.check,
                    row.measured.map(|v| v.to_string()).unwrap_or_default(),
                    row.bound.map(|v| v.to_string()).unwrap_or_default(),
                    row.detail
                );
            }
            let failed = rows
                .iter()
                .filter(|r| r.status == VerdictStatus::Fail)
                .count();
            if all_pass {
                println!("verification passed ({} checks)", rows.len());
                Ok(ExitCode::SUCCESS)
            } else {
                println!("verification FAILED ({failed} of {} checks)", rows.len());
                Ok(ExitCode::from(1))
            }
        }
        Command::Figures { out, panels, jobs } => {
            let only = (!panels.is_empty()).then_some(panels);
            with_jobs(jobs, || figures::cmd_figures(&out, only.as_deref()))?;
            eprintln!("figure data written to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
