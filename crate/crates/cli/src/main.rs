use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use firasym_cli::commands;
use firasym_cli::config::{Overrides, RunManifest};
use firasym_cli::{CliError, EXIT_FAIL, EXIT_PASS};

#[derive(Parser)]
#[command(name = "firasym", version, about = "Simulate, estimate and verify FIR identification asymptotics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON configuration; the built-in preset is used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated suites: as, clt, rates, moments, shat, lemmas, snr.
    #[arg(long)]
    suites: Option<String>,
    /// Output directory.
    #[arg(long, env = "FIRASYM_OUT_DIR")]
    out: Option<PathBuf>,
    /// Worker threads for the Monte Carlo ensemble.
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn manifest(self) -> Result<RunManifest, CliError> {
        RunManifest::resolve(Overrides {
            config_path: self.config,
            seed: self.seed,
            suites: self.suites,
            out_dir: self.out,
            workers: self.workers,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write seeded datasets as CSV.
    Simulate(Common),
    /// Fit LS and regularized estimates to a dataset.
    Estimate {
        dataset: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run verification suites and write report.json / report.txt.
    Verify(Common),
    /// Print the table of a saved report.
    Report {
        /// report.json or the directory containing it.
        path: PathBuf,
    },
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Simulate(common) => {
            let m = common.manifest()?;
            for f in commands::simulate(&m)? {
                println!(
                    "{}: n={} N={} rep={} snr={:.6}",
                    f.path.display(),
                    f.n,
                    f.n_samples,
                    f.replication,
                    f.snr
                );
            }
            Ok(EXIT_PASS)
        }
        Command::Estimate { dataset, common } => {
            let write = common.out.is_some();
            let m = common.manifest()?;
            let report = commands::estimate(&m, &dataset)?;
            print!("{}", commands::estimate_json(&report));
            if write {
                commands::write_estimate(&m, &report)?;
            }
            Ok(EXIT_PASS)
        }
        Command::Verify(common) => {
            let m = common.manifest()?;
            let report = commands::verify(&m)?;
            print!("{}", report.table());
            if report.all_passed() {
                Ok(EXIT_PASS)
            } else {
                eprintln!("failing criteria:");
                for v in report.failures() {
                    eprintln!("  {}: measured {:e}, target {:e}", v.id, v.measured, v.target);
                }
                Ok(EXIT_FAIL)
            }
        }
        Command::Report { path } => {
            let report = commands::load_report(&path)?;
            print!("{}", report.table());
            Ok(if report.all_passed() { EXIT_PASS } else { EXIT_FAIL })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
