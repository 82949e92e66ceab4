use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use spline_noise::cli::{self, CliError, Fault, RunOptions};

/// Spline smoothing residuals as detectors of a single dominant noise
/// component: Monte Carlo curves and numerical self-checks.
#[derive(Debug, Parser)]
#[command(name = "spline-noise", version)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the Monte Carlo experiment and write CSV/SVG curves and a manifest.
    Run {
        /// Run configuration (JSON), or a manifest from an earlier run.
        #[arg(long)]
        config: PathBuf,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads. Affects speed only, never results.
        #[arg(long)]
        threads: Option<usize>,
        /// Skip the SVG charts.
        #[arg(long)]
        no_svg: bool,
    },
    /// Run the invariant battery and write a pass/fail report.
    Check {
        /// Output directory for the report, created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Corrupt the penalty operator to confirm that the battery fails.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Write the standard configuration as a starting point.
    InitConfig {
        /// Destination file.
        #[arg(long)]
        out: PathBuf,
        /// Number of observations.
        #[arg(long, default_value_t = 10)]
        n: usize,
    },
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run {
            config,
            out,
            seed,
            threads,
            no_svg,
        } => {
            let config = cli::load_run_config(&config)?;
            let options = RunOptions {
                seed,
                threads,
                svg: !no_svg,
            };
            let manifest = cli::run_curves(&config, &out, &options)?;
            println!(
                "wrote {} files and {} to {} in {:.2} s",
                manifest.files.len(),
                cli::MANIFEST_FILE,
                out.display(),
                manifest.duration_seconds
            );
            Ok(())
        }
        Command::Check { out, inject_fault } => {
            let fault = inject_fault.then_some(Fault::PerturbPenalty);
            let result = cli::run_oracle_checks(&out, fault);
            let report_path = out.join(cli::checks::REPORT_FILE);
            if let Ok(text) = std::fs::read_to_string(&report_path) {
                print!("{text}");
            }
            result.map(|_| ())
        }
        Command::InitConfig { out, n } => cli::write_default_config(&out, n),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spline-noise: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
