//! Command-line front end for fitting, cross-validating, classifying and
//! simulating robust mixtures of linear experts.

pub mod commands;
pub mod ingest;
pub mod output;
pub mod report;
pub mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use settings::Settings;

#[derive(Debug, Parser)]
#[command(name = "cgmix", version, about = "Robust mixtures of linear experts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// TOML file with default option values; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write a JSON report plus plotting CSVs.
    Fit(Common),
    /// Fit a model and write MAP labels with outlier flags.
    Classify(Common),
    /// Choose a bandwidth by blocked cross-validation.
    CvBandwidth(Common),
    /// Scale the responses of a random subset of rows.
    Contaminate(Common),
    /// Run a seeded simulation study.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Use the full design: four scenarios, three sizes, six models, 100 replications.
        #[arg(long)]
        paper_grid: bool,
        /// List the cells without fitting anything.
        #[arg(long)]
        dry_run: bool,
    },
}

pub const EXIT_FIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

/// Fit failures exit with 1; usage, input and IO problems with 2.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let fit_failure = err.chain().any(|e| {
        matches!(
            e.downcast_ref::<cgmix::Error>(),
            Some(
                cgmix::Error::FitFailure { .. }
                    | cgmix::Error::EmptyComponent { .. }
                    | cgmix::Error::SingularDesign { .. }
                    | cgmix::Error::GatingDivergence(_)
                    | cgmix::Error::NoKernelMass { .. }
                    | cgmix::Error::Numeric(_)
            )
        )
    });
    if fit_failure {
        EXIT_FIT_FAILURE
    } else {
        EXIT_USAGE
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let resolve = |c: Common| c.settings.resolve(c.config.as_deref());
    match cli.command {
        Command::Fit(c) => commands::fit_cmd(&resolve(c)?),
        Command::Classify(c) => commands::classify_cmd(&resolve(c)?),
        Command::CvBandwidth(c) => commands::cv_cmd(&resolve(c)?),
        Command::Contaminate(c) => commands::contaminate_cmd(&resolve(c)?),
        Command::Simulate {
            common,
            paper_grid,
            dry_run,
        } => commands::simulate_cmd(&resolve(common)?, paper_grid, dry_run),
    }
}

pub fn main_with(cli: Cli) -> ExitCode {
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
