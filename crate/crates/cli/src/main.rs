//! `sigmak`: batch front end for the conformal σ_k toolkit.
//!
//! Exit codes: 0 success, 1 verification failure, 2 solver
//! non-convergence, 3 bad input.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{BadInput, EnvelopeArgs, HarnackArgs, Method, SigmaArgs, SolveGauge, VerificationFailed};

#[derive(Parser)]
#[command(name = "sigmak", version, about = "Conformal k-Hessian toolkit: identities, diagnostics and radial solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Elementary symmetric polynomials and cone membership of λ.
    Sigma {
        /// Comma-separated eigenvalues.
        #[arg(long, allow_hyphen_values = true)]
        lambda: Option<String>,
        /// File with one tuple per line.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        k: usize,
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify the singularity of a radial profile CSV (r, w[, dw, d2w]).
    Classify {
        profile: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        eps_class: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve a radial problem file; writes solution.csv and summary.json.
    Solve {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, value_enum, default_value = "w")]
        gauge: SolveGauge,
        /// Override the number of grid intervals.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trace the homotopy branch of a supercritical problem; writes branch.csv.
    Continue {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Radial envelope of a raw grid field and its inequality check.
    Envelope {
        #[arg(long)]
        grid: PathBuf,
        /// Comma-separated center (defaults to the box center).
        #[arg(long, allow_hyphen_values = true)]
        center: Option<String>,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum, default_value = "interpolated")]
        method: Method,
        /// Relative tolerance (defaults to 10h).
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Empirical Harnack constant of χ from a CSV (r, chi) or a raw grid.
    Harnack {
        #[arg(long)]
        chi: Option<PathBuf>,
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        /// χ(0) when the origin belongs to the domain.
        #[arg(long)]
        origin: Option<f64>,
        #[arg(long)]
        min_separation: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Volume ratio curve of a radial conformal metric.
    Volume {
        #[arg(long)]
        metric: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the seeded identity and property suite.
    Verify {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Multiplier on the case counts.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Sigma { lambda, csv, k, json, out } => commands::sigma(SigmaArgs { lambda, csv, k, json, out }),
        Command::Classify { profile, n, k, eps_class, out } => {
            commands::classify(&profile, n, k, eps_class, out.as_deref())
        }
        Command::Solve { problem, gauge, grid, out } => commands::solve(&problem, gauge, grid, out.as_deref()),
        Command::Continue { problem, out } => commands::continuation(&problem, out.as_deref()),
        Command::Envelope { grid, center, n, k, method, tau, out } => {
            commands::envelope(EnvelopeArgs { grid, center, n, k, method, tau, out })
        }
        Command::Harnack { chi, grid, n, k, origin, min_separation, out } => {
            commands::harnack(HarnackArgs { chi, grid, n, k, origin, min_separation, out })
        }
        Command::Volume { metric, out } => commands::volume(&metric, out.as_deref()),
        Command::Verify { seed, scale, out } => commands::verify(seed, scale, out.as_deref()),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<VerificationFailed>().is_some() {
        return 1;
    }
    if err.downcast_ref::<BadInput>().is_some() {
        return 3;
    }
    match err.downcast_ref::<sigmak::Error>() {
        Some(sigmak::Error::NonConvergence { .. } | sigmak::Error::ConeExit { .. }) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
