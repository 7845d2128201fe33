//! `pcvqkd`: scenario runner for the passive-preparation CV-QKD model.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 numerical failure,
//! 4 I/O failure.

mod commands;
mod output;
mod scenario;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{CmdResult, CommandError, Destinations};
use output::Sink;
use scenario::Scenario;

#[derive(Parser)]
#[command(name = "pcvqkd", version, about = "Monte Carlo, fitting and key-rate sweeps for passively prepared CV-QKD")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dump one Monte Carlo batch and compare its second moments with the model.
    Simulate(Common),
    /// Correlation versus mean photon number.
    SweepN0 {
        #[command(flatten)]
        common: Common,
        /// Skip Monte Carlo and emit only the model column.
        #[arg(long)]
        analytic_only: bool,
    },
    /// Correlation versus total attenuation (dB grid).
    SweepAttenuation {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        analytic_only: bool,
    },
    /// Fit the mode overlap to measured correlations.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Points CSV (n0, corr_mean, corr_std[, n_blocks]); overrides fit.points_csv.
        #[arg(long)]
        points: Option<PathBuf>,
    },
    /// Secure key rate versus fiber length, plus measured points if configured.
    Keyrate(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Primary CSV output; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Secondary output (moments report or measured key-rate points).
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    blocks: Option<usize>,
}

impl Common {
    fn load(&self) -> CmdResult<(Scenario, Destinations)> {
        let text = std::fs::read_to_string(&self.scenario)
            .map_err(|e| CommandError::io(Some(&self.scenario), e))?;
        let base = self.scenario.parent().unwrap_or(Path::new("."));
        let mut s = scenario::parse(&text, base)?;
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(n) = self.samples {
            s.n_samples = n;
        }
        if let Some(b) = self.blocks {
            s.n_blocks = b;
        }
        let out = Destinations {
            primary: Sink::from_path(self.out.clone().or_else(|| s.outputs.primary.clone())),
            secondary: Sink::from_path(self.report.clone().or_else(|| s.outputs.secondary.clone())),
        };
        Ok((s, out))
    }
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Simulate(c) => {
            let (s, out) = c.load()?;
            commands::simulate(&s, &out)
        }
        Command::SweepN0 { common, analytic_only } => {
            let (s, out) = common.load()?;
            commands::sweep_n0(&s, analytic_only, &out)
        }
        Command::SweepAttenuation { common, analytic_only } => {
            let (s, out) = common.load()?;
            commands::sweep_attenuation(&s, analytic_only, &out)
        }
        Command::Fit { common, points } => {
            let (s, out) = common.load()?;
            commands::fit(&s, points.as_deref(), &out)
        }
        Command::Keyrate(c) => {
            let (s, out) = c.load()?;
            commands::keyrate(&s, &out)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
