use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use carleman_core::experiment::{self, ExperimentConfig, Status};
use carleman_core::tensor::{MemoryBudget, BUDGET_ENV};
use carleman_core::theory;
use carleman_core::CarlemanError;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_BUDGET: u8 = 3;
const EXIT_DIVERGED: u8 = 4;
const EXIT_VIOLATION: u8 = 5;

#[derive(Parser)]
#[command(name = "carleman", version, about = "Carleman linearization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,

    /// Memory budget for lifted states, in bytes.
    #[arg(long, global = true, env = BUDGET_ENV)]
    budget_bytes: Option<u64>,

    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// One truncation-error evaluation, printed as a JSON record.
    Run,
    /// Cartesian sweep over N, nonlinearity and T, written as CSV.
    Sweep,
    /// Spectral diagnostics of the configured model as JSON.
    Spectrum,
    /// Eigenstructure checks on a random quadratic system.
    VerifyTheory {
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long = "N", default_value_t = 3)]
        levels: usize,
        /// `‖F2‖₁` of the random system.
        #[arg(long, default_value_t = 0.1)]
        coupling_norm: f64,
    },
}

fn exit_code(err: &CarlemanError) -> u8 {
    match err {
        CarlemanError::Config(_) | CarlemanError::InvalidInput(_) | CarlemanError::Io(_) => EXIT_CONFIG,
        CarlemanError::BudgetExceeded { .. } => EXIT_BUDGET,
        CarlemanError::UnstableStep { .. } => EXIT_DIVERGED,
        _ => EXIT_FAILURE,
    }
}

fn output(path: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: serde::Serialize>(path: &Option<PathBuf>, value: &T) -> Result<(), CarlemanError> {
    let mut out = output(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(io::Error::from)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn load(cli: &Cli) -> Result<ExperimentConfig, CarlemanError> {
    let path = cli.config.as_ref().ok_or_else(|| CarlemanError::Config("--config is required".into()))?;
    ExperimentConfig::from_path(path).map_err(|e| match e {
        CarlemanError::Io(io) => CarlemanError::Config(format!("{}: {io}", path.display())),
        other => other,
    })
}

fn execute(cli: &Cli) -> Result<u8, CarlemanError> {
    let budget = cli.budget_bytes.map(MemoryBudget::new).unwrap_or_default();
    match &cli.command {
        Command::Run => {
            let cfg = load(cli)?;
            let record = experiment::run(&cfg, &budget)?;
            write_json(&cli.out, &record)?;
            Ok(if record.status == Status::Diverged { EXIT_DIVERGED } else { 0 })
        }
        Command::Sweep => {
            let cfg = load(cli)?;
            let results = experiment::sweep(&cfg, &budget, cli.workers)?;
            let total = results.len();
            let mut rows = Vec::with_capacity(total);
            let mut first_error = None;
            for (i, r) in results.into_iter().enumerate() {
                match r {
                    Ok(rec) => rows.push(rec),
                    Err(e) => {
                        eprintln!("cell {i}: {e}");
                        first_error.get_or_insert(e);
                    }
                }
            }
            let mut out = output(&cli.out)?;
            experiment::write_csv(&mut out, &rows)?;
            out.flush()?;
            if total == 0 || rows.iter().any(|r| r.status == Status::Ok) {
                Ok(0)
            } else if let Some(e) = first_error {
                Err(e)
            } else {
                Ok(EXIT_DIVERGED)
            }
        }
        Command::Spectrum => {
            let cfg = load(cli)?;
            write_json(&cli.out, &experiment::spectrum(&cfg)?)?;
            Ok(0)
        }
        Command::VerifyTheory { n, levels, coupling_norm } => {
            let report = theory::verify_random(*n, *levels, cli.seed, *coupling_norm)?;
            write_json(&cli.out, &report)?;
            if report.passed {
                Ok(0)
            } else {
                eprintln!("violated: {}", report.failures().join(", "));
                Ok(EXIT_VIOLATION)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
