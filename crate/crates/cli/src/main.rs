//! qsgdiag: diagonalize hermitean matrices by simulated quantum measurement.
//!
//! Exit codes: 0 on a complete run, 2 when the harvest ended with unseen
//! eigenspaces (run cap hit), 1 on input or validation errors.

use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qsgdiag_core::pipeline::{self, ReportFormat, RunConfig};
use qsgdiag_core::{Error, SpinSystem};

const SEED_ENV: &str = "QSGDIAG_SEED";

#[derive(Debug, Parser)]
#[command(name = "qsgdiag", version, about = "Quantum-measurement diagonalization of hermitean matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the five-stage measurement pipeline on a matrix file
    Diagonalize {
        /// JSON matrix file: {"matrix": [[[re, im], ...], ...]} (plain
        /// numbers allowed for real entries)
        #[arg(long)]
        input: PathBuf,

        /// Master seed; falls back to QSGDIAG_SEED, then 0
        #[arg(long)]
        seed: Option<u64>,

        /// Miss-probability bound for the stopping rule
        #[arg(long, default_value_t = 1e-6)]
        epsilon: f64,

        /// Hard cap on measurement runs
        #[arg(long, default_value_t = 1_000_000)]
        max_runs: u64,

        /// Tomography shots per multipole, or "exact"
        #[arg(long, default_value = "exact")]
        shots: String,

        /// Gaussian readout noise on sampled eigenvalues
        #[arg(long, default_value_t = 0.0)]
        noise_sigma: f64,

        /// Outcome clustering tolerance (0 = exact grouping)
        #[arg(long, default_value_t = 0.0)]
        cluster_tol: f64,

        /// Relative eigenvalue merge tolerance
        #[arg(long, default_value_t = 1e-9)]
        degeneracy_tol: f64,

        /// Central-difference step for force/Maxwell diagnostics
        #[arg(long, default_value_t = 1e-3)]
        fd_step: f64,

        /// Report format: text or json
        #[arg(long, default_value = "text")]
        format: String,

        /// Write the report here instead of stdout
        #[arg(long)]
        output: Option<PathBuf>,

        /// Print the Maxwell diagnostic for the measuring field
        #[arg(long)]
        check_maxwell: bool,

        /// Run measurement and tomography loops on a thread pool
        #[arg(long)]
        parallel: bool,
    },

    /// Dump the multipole basis for a spin, with scale records
    Basis {
        /// Spin quantum number, e.g. "1/2", "1", "3/2", "2"
        #[arg(long)]
        spin: String,

        /// Only json is supported
        #[arg(long, default_value = "json")]
        format: String,

        /// Write the dump here instead of stdout
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// Accepts "p/2", integers and half-integer decimals.
fn parse_spin(text: &str) -> Result<SpinSystem, Error> {
    let twice_s = if let Some((num, den)) = text.split_once('/') {
        let num: u32 = num
            .trim()
            .parse()
            .map_err(|_| Error::InvalidSpin(format!("bad numerator in {text:?}")))?;
        match den.trim() {
            "2" => num,
            "1" => 2 * num,
            other => {
                return Err(Error::InvalidSpin(format!(
                    "denominator must be 1 or 2, got {other:?}"
                )))
            }
        }
    } else {
        let s: f64 = text
            .trim()
            .parse()
            .map_err(|_| Error::InvalidSpin(format!("cannot parse spin {text:?}")))?;
        let doubled = 2.0 * s;
        if (doubled - doubled.round()).abs() > 1e-9 || doubled < 0.0 {
            return Err(Error::InvalidSpin(format!(
                "spin must be a nonnegative half-integer, got {text:?}"
            )));
        }
        doubled.round() as u32
    };
    SpinSystem::new(twice_s)
}

fn parse_shots(text: &str) -> Result<u64, Error> {
    if text.eq_ignore_ascii_case("exact") {
        return Ok(0);
    }
    text.parse()
        .map_err(|_| Error::InvalidConfig(format!("--shots takes an integer or \"exact\", got {text:?}")))
}

fn resolve_seed(flag: Option<u64>) -> Result<u64, Error> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(text) => text.parse().map_err(|_| {
            Error::InvalidConfig(format!("{SEED_ENV} must be a 64-bit integer, got {text:?}"))
        }),
        Err(_) => Ok(0),
    }
}

fn write_out(output: Option<&PathBuf>, content: &str) -> Result<(), Error> {
    match output {
        Some(path) => {
            let mut f = File::create(path)?;
            f.write_all(content.as_bytes())?;
        }
        None => {
            std::io::stdout().write_all(content.as_bytes())?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Diagonalize {
            input,
            seed,
            epsilon,
            max_runs,
            shots,
            noise_sigma,
            cluster_tol,
            degeneracy_tol,
            fd_step,
            format,
            output,
            check_maxwell,
            parallel,
        } => {
            let matrix = pipeline::load_matrix(&input)?;
            let config = RunConfig {
                seed: resolve_seed(seed)?,
                epsilon,
                max_runs,
                tomography_shots: parse_shots(&shots)?,
                noise_sigma,
                cluster_tol,
                degeneracy_tol,
                constants: Default::default(),
                fd_step,
                parallel,
            };
            let format: ReportFormat = format.parse()?;
            let report = pipeline::diagonalize_quantum(&matrix, &config)?;

            if check_maxwell {
                match &report.maxwell {
                    Some(mx) => eprintln!(
                        "maxwell: div <= {:.3e}, curl <= {:.3e} over {} points (h = {:.1e})",
                        mx.max_div, mx.max_curl, mx.points, mx.step
                    ),
                    None => eprintln!(
                        "maxwell: checked for the spin-1/2 measuring field only; \
                         general-N profiles are abstract"
                    ),
                }
            }

            let rendered = match format {
                ReportFormat::Json => pipeline::render_json(&report)?,
                ReportFormat::Text => pipeline::render_text(&report),
            };
            write_out(output.as_ref(), &rendered)?;
            Ok(if report.complete { 0 } else { 2 })
        }
        Command::Basis {
            spin,
            format,
            output,
        } => {
            if format != "json" {
                return Err(Error::InvalidConfig(format!(
                    "basis dump supports only json, got {format:?}"
                )));
            }
            let spin = parse_spin(&spin)?;
            let dump = pipeline::basis_json(spin)?;
            write_out(output.as_ref(), &dump)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}
