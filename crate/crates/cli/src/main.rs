//! `sos-subspace`: command-line driver for the list-decodable subspace
//! recovery pipeline.
//!
//! Exit codes: 0 on success, 2 on invalid input or a failed validation or
//! verification, 3 when the SDP solver does not converge (including timeouts
//! and detected infeasibility), 1 for anything else.

mod artifacts;
mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sos_subspace::rounding::Scheme;

use config::ExperimentConfig;

/// A failure that maps to exit code 2.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

#[derive(Parser, Debug)]
#[command(name = "sos-subspace", version, about = "List-decodable subspace recovery by sum-of-squares")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment config; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the config's seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Artifact directory [default: the config's output_path, else `out`].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Relaxation degree.
    #[arg(long, global = true)]
    degree: Option<usize>,
    #[arg(long, global = true, value_enum)]
    scheme: Option<SchemeArg>,
    /// Conditioning depth for large-list rounding.
    #[arg(long, global = true)]
    t: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Sample instances.
    Gen,
    /// Solve the relaxation for each instance and validate the result.
    Solve,
    /// Round solved pseudo-distributions into candidate lists.
    Round,
    /// Enumerate spans by brute force.
    Oracle,
    /// Run the numerical checks of the supporting inequalities.
    Verify,
    /// Sweep alphas and seeds end to end into bench.csv.
    Bench,
    /// Summarize bench.csv into report.csv.
    Report,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum SchemeArg {
    Votes,
    LargeList,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Votes => Scheme::Votes,
            SchemeArg::LargeList => Scheme::LargeList,
        }
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| Invalid(format!("{e:#}")))?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output_path = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(d) = cli.degree {
        cfg.relaxation_degree = d;
    }
    if let Some(s) = cli.scheme {
        cfg.rounding.scheme = s.into();
    }
    if let Some(t) = cli.t {
        cfg.rounding.t = t;
    }
    cfg.validate().map_err(|e| Invalid(format!("{e:#}")))?;
    Ok(cfg)
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = load_config(cli)?;
    let out = &cfg.output_path;
    match cli.command {
        Command::Gen => commands::gen(&cfg, out),
        Command::Solve => commands::solve(&cfg, out),
        Command::Round => commands::round(&cfg, out),
        Command::Oracle => commands::oracle(&cfg, out),
        Command::Verify => commands::verify(out),
        Command::Bench => commands::bench(&cfg, out),
        Command::Report => commands::report(out),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use sos_subspace::Error as E;
    for cause in err.chain() {
        if cause.is::<Invalid>() || cause.is::<serde_json::Error>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::NonConvergence { .. } | E::Timeout { .. } | E::InfeasibleSdp { .. } => 3,
                E::Io(_) => 1,
                _ => 2,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
