//! Command-line driver for the kd-switch predictor.
//!
//! Subcommands:
//!
//! - `predict`: stream a dataset through the ensemble and report the
//!   per-step log loss and the cumulative normalized log loss (NLL).
//! - `tst`: run the sequential two-sample test, optionally over many trials.
//! - `bench`: time the predictor per decade of stream length.
//! - `generate`: write a synthetic dataset as CSV.
//!
//! Per-step records go to `--out` as CSV; the JSON summary goes to stdout
//! (and to `--summary` when given). Floats are written with 17 significant
//! digits. Unless `--timing` or `--max-seconds` is used, output depends only
//! on the arguments, so repeated runs are byte-identical.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub mod commands;
pub mod dataset;
pub mod error;
pub mod output;

pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "kdswitch", version, about = "Online k-d tree switching predictor and sequential two-sample test")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sequential prediction with per-step log loss.
    Predict(RunArgs),
    /// Sequential two-sample test with an anytime-valid p-value.
    Tst(RunArgs),
    /// Per-decade timing of the predictor.
    Bench(RunArgs),
    /// Write a synthetic dataset as CSV.
    Generate(RunArgs),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    #[default]
    Switch,
    Ctw,
}

impl Mode {
    pub fn schedule(self) -> kdswitch::AlphaSchedule {
        match self {
            Mode::Switch => kdswitch::AlphaSchedule::Switch,
            Mode::Ctw => kdswitch::AlphaSchedule::Ctw,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Switch => "switch",
            Mode::Ctw => "ctw",
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct RunArgs {
    /// Synthetic source, `name[:key=value,...]`. Names: sg, gmd, gvd, blobs,
    /// multiscale_gmm, threshold.
    #[arg(long, conflicts_with = "csv")]
    pub dataset: Option<String>,

    /// Labeled CSV input with a header row.
    #[arg(long)]
    pub csv: Option<PathBuf>,

    /// Name of the label column in `--csv` input.
    #[arg(long, default_value = "label")]
    pub label_col: String,

    /// Number of trees J (default 1, or 50 for `tst`).
    #[arg(long)]
    pub trees: Option<usize>,

    #[arg(long, value_enum, default_value_t = Mode::Switch)]
    pub mode: Mode,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Known Bernoulli label prior (label 0 has probability theta0). Without
    /// it `predict` shuffles a pooled sample and learns the prior.
    #[arg(long)]
    pub theta0: Option<f64>,

    /// Randomly rotate the features, one rotation per tree (default for `tst`).
    #[arg(long, conflicts_with = "no_rotate")]
    pub rotate: bool,

    /// Disable the per-tree rotations.
    #[arg(long)]
    pub no_rotate: bool,

    /// Test level for `tst`.
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,

    /// Stream length (ignored for `--csv`, which uses the whole file).
    #[arg(long, default_value_t = 10_000)]
    pub n: u64,

    /// Independent trials for `tst`.
    #[arg(long, default_value_t = 1)]
    pub trials: usize,

    /// Comma-separated sample counts at which `tst` reports power.
    #[arg(long, value_delimiter = ',')]
    pub checkpoints: Vec<u64>,

    /// Per-step CSV output path.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Also write the JSON summary here.
    #[arg(long)]
    pub summary: Option<PathBuf>,

    /// Stop the stream after this much wall-clock time.
    #[arg(long)]
    pub max_seconds: Option<f64>,

    /// Add wall-clock columns and fields (makes output non-reproducible).
    #[arg(long)]
    pub timing: bool,
}

impl RunArgs {
    pub fn rotate_or(&self, default: bool) -> bool {
        if self.rotate {
            true
        } else if self.no_rotate {
            false
        } else {
            default
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.trees == Some(0) {
            return bad("--trees must be at least 1".into());
        }
        if self.n == 0 {
            return bad("--n must be at least 1".into());
        }
        if self.trials == 0 {
            return bad("--trials must be at least 1".into());
        }
        if let Some(t) = self.theta0 {
            if !(t > 0.0 && t < 1.0) {
                return bad(format!("--theta0 must lie in (0, 1), got {t}"));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("--alpha must lie in (0, 1), got {}", self.alpha));
        }
        if let Some(s) = self.max_seconds {
            if !(s > 0.0) {
                return bad(format!("--max-seconds must be positive, got {s}"));
            }
        }
        Ok(())
    }
}

/// What a command produced: the JSON summary text.
#[derive(Debug)]
pub struct Outcome {
    pub summary: String,
}

/// Runs a parsed command.
pub fn run(cli: &Cli) -> Result<Outcome> {
    let (args, f): (&RunArgs, fn(&RunArgs) -> Result<String>) = match &cli.command {
        Command::Predict(a) => (a, commands::predict::run),
        Command::Tst(a) => (a, commands::tst::run),
        Command::Bench(a) => (a, commands::bench::run),
        Command::Generate(a) => (a, commands::generate::run),
    };
    args.validate()?;
    let summary = f(args)?;
    if let Some(path) = &args.summary {
        output::write_text(path, &summary)?;
    }
    Ok(Outcome { summary })
}

/// Parses `argv`, runs the command, prints the summary and returns the exit
/// code. Usage errors map to the config-error code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(out) => {
            let quiet = matches!(&cli.command, Command::Generate(a) if a.out.is_none());
            if !quiet {
                print!("{}", out.summary);
            }
            0
        }
        Err(e) => {
            eprintln!("kdswitch: {e}");
            e.exit_code()
        }
    }
}
