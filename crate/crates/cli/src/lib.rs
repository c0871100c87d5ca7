//! Command-line front end: ingestion, the screen/detect pipeline, Monte Carlo
//! validation and timing, with JSON/CSV artifacts and a checksummed manifest.

pub mod artifacts;
pub mod calibrate;
pub mod commands;
pub mod csvio;
pub mod failure;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use fisherwatch::DetectorKind;

pub use failure::Failure;

/// Seed used when neither `--seed` nor the scenario provides one.
pub const DEFAULT_SEED: u64 = 20_240_917;

#[derive(Debug, Parser)]
#[command(name = "fisherwatch", version, about = "Covariance change-point detection with Fisher random matrices")]
pub struct Cli {
    /// Seed for every random draw; overrides a scenario's own seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Dele,
    Deht,
    Mp,
}

impl From<Method> for DetectorKind {
    fn from(m: Method) -> Self {
        match m {
            Method::Dele => DetectorKind::Dele,
            Method::Deht => DetectorKind::Deht,
            Method::Mp => DetectorKind::Mp,
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct DataArgs {
    /// Input CSV, one channel per row, first column the channel id.
    pub data: PathBuf,
    /// JSON with any of D, d1, d2, s, alpha, kappa, beta1, beta2, profile, normalization.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input has one sample per row instead of one channel per row.
    #[arg(long)]
    pub transpose: bool,
    /// Sampling rate in Hz, used to report delays in seconds.
    #[arg(long)]
    pub sample_rate: Option<f64>,
    /// Output directory.
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic record from a scenario JSON file.
    Simulate {
        scenario: PathBuf,
        /// Output CSV path. Ground truth and the manifest are written next to
        /// it as `<stem>.truth.json` and `<stem>.manifest.json`.
        output: PathBuf,
    },
    /// Screen the record for intervals that may contain a covariance change.
    Screen {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Screen, then localize faults inside each interval.
    Detect {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum)]
        method: Method,
        /// Ground truth written by `simulate`, used to report delays.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Monte Carlo calibration of L and of the Fisher spectral law.
    ValidateNull {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        reps: usize,
        #[arg(long, default_value_t = 80)]
        p: usize,
        #[arg(long, default_value_t = 240)]
        n1: usize,
        #[arg(long, default_value_t = 240)]
        n2: usize,
        #[arg(long, default_value_t = 200)]
        esd_p: usize,
        #[arg(long, default_value_t = 1000)]
        esd_n: usize,
        #[arg(long, short, default_value = ".")]
        out: PathBuf,
    },
    /// Median wall time of the full pipeline for each detector.
    Bench {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 5)]
        runs: usize,
    },
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<(), Failure> {
    let seed = cli.seed;
    match cli.command {
        Command::Simulate { scenario, output } => commands::simulate(&scenario, &output, seed),
        Command::Screen { data } => commands::screen(&data),
        Command::Detect { data, method, truth } => commands::detect(&data, method.into(), truth.as_deref()),
        Command::ValidateNull {
            config,
            reps,
            p,
            n1,
            n2,
            esd_p,
            esd_n,
            out,
        } => commands::validate_null(
            config.as_deref(),
            calibrate::NullSetup {
                p,
                n1,
                n2,
                reps,
                esd_p,
                esd_n1: esd_n,
                esd_n2: esd_n,
                ..Default::default()
            },
            seed.unwrap_or(DEFAULT_SEED),
            &out,
        ),
        Command::Bench { data, runs } => commands::bench(&data, runs),
    }
}

/// Parses `args` and runs them, returning the process exit status. Errors
/// are reported on stderr as one `error[reason]: message` line.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", Failure::input("usage", first.trim_start_matches("error: ")).line());
            return failure::EXIT_INPUT;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("{}", f.line());
            f.exit
        }
    }
}
