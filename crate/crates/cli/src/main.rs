mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::output::{report_error, CliError};

#[derive(Parser, Debug)]
#[command(name = "bifocus", version, about = "Numerical experiments on a reversible bifocal homoclinic network")]
pub struct Cli {
    /// Model parameter file (JSON); defaults to the built-in parameters for `--branches`.
    #[arg(long, global = true)]
    pub params: Option<PathBuf>,

    /// Number of branches of the built-in parameters when `--params` is absent.
    #[arg(long, global = true, default_value_t = 2)]
    pub branches: usize,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Seed of the Monte-Carlo estimates.
    #[arg(long, global = true, default_value_t = 7)]
    pub seed: u64,

    /// Residual tolerance of computed points.
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub tol: f64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write the built-in parameters for `--branches` to `<out>/params.json`.
    InitParams,
    /// Check the parameters against the standing hypotheses.
    Validate,
    /// Spiral traced by the image of a radial seed in D_i, and its crossings with W^s_j.
    Spiral(SpiralArgs),
    /// Secondary homoclinic points pulled back from the spiral crossings.
    Homoclinics(PairArgs),
    /// Nested-disk chain realizing a word.
    Chain(WordArgs),
    /// Switching sweep over all words up to `--word-len`, or a single switching point with `--word`.
    Switch(SwitchArgs),
    /// Reversible periodic point with a given prefix.
    Periodic(PeriodicArgs),
    /// Entropy lower bound certified by a stored sweep.
    Entropy(EntropyArgs),
    /// Forward and backward orbit of a stored point.
    Orbit(OrbitArgs),
}

#[derive(Args, Debug)]
pub struct PairArgs {
    /// Branch of the seed disk D_i.
    #[arg(long, default_value_t = 1)]
    pub branch: usize,
    /// Branch j of the stable line W^s_j.
    #[arg(long, default_value_t = 2)]
    pub target: usize,
    /// Turn window `a..b`.
    #[arg(long, default_value = "1..5", value_parser = output::parse_range)]
    pub turns: [i64; 2],
}

#[derive(Args, Debug)]
pub struct SpiralArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    /// End of the seed parameter range.
    #[arg(long, default_value_t = 7.0)]
    pub s_max: f64,
}

#[derive(Args, Debug)]
pub struct WordArgs {
    /// Itinerary, e.g. `1,2,1`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub word: Vec<usize>,
    /// Windings, one per passage (default: 2 each).
    #[arg(long, value_delimiter = ',')]
    pub windings: Vec<i64>,
    /// Monte-Carlo samples per area ratio.
    #[arg(long, default_value_t = 20_000)]
    pub samples: usize,
}

#[derive(Args, Debug)]
pub struct SwitchArgs {
    /// Longest word of the sweep.
    #[arg(long, default_value_t = 4)]
    pub word_len: usize,
    /// Number of symbols of the sweep (default: all branches).
    #[arg(long)]
    pub symbols: Option<usize>,
    /// Winding used for every passage of the sweep.
    #[arg(long, default_value_t = 2)]
    pub winding: i64,
    /// Single word instead of a sweep.
    #[arg(long, value_delimiter = ',')]
    pub word: Vec<usize>,
    /// Windings of the single word; one more than the passages sets the extension.
    #[arg(long, value_delimiter = ',')]
    pub windings: Vec<i64>,
    /// Depth of the convergence report of a single switching point (default: word length + 1).
    #[arg(long)]
    pub depth: Option<usize>,
}

#[derive(Args, Debug)]
pub struct PeriodicArgs {
    /// Prefix `i_0, …, i_m`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub word: Vec<usize>,
    /// Windings of the `m` passages (default: 2 each).
    #[arg(long, value_delimiter = ',')]
    pub windings: Vec<i64>,
    /// Also compute the family with closing windings `a..b`.
    #[arg(long, value_parser = output::parse_range)]
    pub closing: Option<[i64; 2]>,
}

#[derive(Args, Debug)]
pub struct EntropyArgs {
    /// Sweep report (default: `<out>/sweep.json`).
    #[arg(long)]
    pub sweep: Option<PathBuf>,
    /// Word length k.
    #[arg(long)]
    pub word_len: Option<usize>,
}

#[derive(Args, Debug)]
pub struct OrbitArgs {
    /// JSON file holding a point `{a, b, c}` or a switching-point export.
    #[arg(long, conflicts_with = "word")]
    pub point: Option<PathBuf>,
    /// Take the switching point of this word from the sweep report.
    #[arg(long, value_delimiter = ',')]
    pub word: Vec<usize>,
    /// Sweep report used with `--word` (default: `<out>/sweep.json`).
    #[arg(long)]
    pub sweep: Option<PathBuf>,
    /// Steps in each direction.
    #[arg(long, default_value_t = 16)]
    pub steps: usize,
    /// Depth of the convergence report (default: `--steps`).
    #[arg(long)]
    pub depth: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(&e);
            ExitCode::from(e.exit_code())
        }
    }
}

impl From<bifocus::Error> for CliError {
    fn from(e: bifocus::Error) -> Self {
        match e {
            bifocus::Error::Io(e) => CliError::Io(e.to_string()),
            bifocus::Error::InvalidRequest(m) => CliError::Usage(m),
            e => CliError::Compute(e),
        }
    }
}
