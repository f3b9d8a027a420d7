//! `permclear` command-line front end.
//!
//! Every command reads its inputs from files, writes one JSON report (or a
//! plain-text table derived from it) and exits with 0 on success, 2 when a
//! certification check fails and 1 on input or solver errors.

mod commands;
mod render;

use clap::{Parser, Subcommand, ValueEnum};
use std::io::Write;
use std::path::PathBuf;

pub use commands::Outcome;

/// Exit status for a clean run.
pub const EXIT_OK: i32 = 0;
/// Exit status for unreadable input, bad flags or solver failure.
pub const EXIT_ERROR: i32 = 1;
/// Exit status when a certification check fails.
pub const EXIT_CERTIFICATION: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum ReportFormat {
    #[default]
    Json,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum ClearMethod {
    #[default]
    Barrier,
    Lp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum FitMode {
    #[default]
    Exact,
    Ellipsoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum OracleMode {
    #[default]
    Proportional,
    Fixed,
    Maxent,
    Decompose,
    Permanent,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "permclear", version, about = "Clear and price permutation betting markets")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
    #[arg(long, global = true, value_enum, default_value_t)]
    pub format: ReportFormat,
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Certification tolerance override.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Solve the clearing problem and certify the prices.
    Clear {
        #[arg(long)]
        orders: PathBuf,
        #[arg(long)]
        theta_scale: Option<f64>,
        #[arg(long, value_enum, default_value_t)]
        method: ClearMethod,
    },
    /// Follow the starting orders to zero and report the limit prices.
    Prices {
        #[arg(long)]
        orders: PathBuf,
        #[arg(long)]
        theta_scale: Option<f64>,
    },
    /// Birkhoff–von Neumann decomposition of a price matrix.
    Decompose {
        #[arg(long)]
        q: PathBuf,
    },
    /// Fit a maximum-entropy model to a price matrix.
    Maxent {
        #[arg(long)]
        q: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        mode: FitMode,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
    },
    /// Draw outcomes from a fitted model, one JSON line each.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 10)]
        count: usize,
    },
    /// Re-certify a clearing report against its order book.
    Verify {
        #[arg(long)]
        orders: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Brute-force reference solvers over all outcomes.
    Oracle {
        #[arg(long, value_enum, default_value_t)]
        mode: OracleMode,
        #[arg(long, required_unless_present = "q")]
        orders: Option<PathBuf>,
        #[arg(long)]
        q: Option<PathBuf>,
    },
    /// Clear, certify, price, decompose, fit and sample in one run.
    Pipeline {
        #[arg(long)]
        orders: PathBuf,
        #[arg(long)]
        theta_scale: Option<f64>,
        #[arg(long, value_enum, default_value_t)]
        mode: FitMode,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 20)]
        count: usize,
    },
}

/// Output and diagnostic sinks.
pub struct Streams<'a> {
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
}

/// Runs one command and returns the process exit code.
pub fn run(config: &RunConfig, streams: &mut Streams<'_>) -> i32 {
    let result = commands::execute(config).and_then(|out| {
        match &config.out {
            Some(path) => std::fs::write(path, &out.text)
                .map_err(|e| format!("cannot write {}: {e}", path.display()))?,
            None => streams
                .stdout
                .write_all(out.text.as_bytes())
                .map_err(|e| format!("cannot write report: {e}"))?,
        }
        Ok(out.outcome)
    });
    match result {
        Ok(Outcome::Passed) => EXIT_OK,
        Ok(Outcome::CertificationFailed(why)) => {
            let _ = writeln!(streams.stderr, "certification failed: {why}");
            EXIT_CERTIFICATION
        }
        Err(msg) => {
            let _ = writeln!(streams.stderr, "error: {msg}");
            EXIT_ERROR
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from_args<I, T>(args: I, streams: &mut Streams<'_>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    init_logging();
    match RunConfig::try_parse_from(args) {
        Ok(config) => run(&config, streams),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let text = e.render().to_string();
            let sink = if e.use_stderr() { &mut *streams.stderr } else { &mut *streams.stdout };
            let _ = sink.write_all(text.as_bytes());
            code
        }
    }
}

/// Log level comes from `PERMCLEAR_LOG` (e.g. `debug`); warnings by default.
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("PERMCLEAR_LOG", "warn");
    let _ = env_logger::Builder::from_env(env)
        .target(env_logger::Target::Stderr)
        .try_init();
}
