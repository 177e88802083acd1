//! Command-line front end. [`run`] parses arguments, executes one subcommand and
//! returns the process exit code: 0 on success, 2 for usage and domain errors, 3 for
//! numerical failures.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "lhv-forge", version, about = "Local-hidden-variable models for Bell tests with inefficient detectors")]
pub struct Cli {
    /// JSON file with default values for any flag; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for searches and simulation. Results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build or evaluate model files.
    #[command(subcommand)]
    Model(ModelCommand),
    /// Critical efficiencies of a model file or of a bare area S.
    Efficiency(EfficiencyArgs),
    /// Whether some detector-A region lies under the envelope of a model's B bands.
    CheckOptimal(ModelPathArgs),
    /// Efficiency curves over a range of r, one CSV per curve kind.
    Sweep(SweepArgs),
    /// Single setting-space search at one r.
    Optimize(OptimizeArgs),
    /// Draw detection events from a model and tabulate counts.
    Simulate(SimulateArgs),
    /// χ² test of counts against quantum predictions at efficiency η.
    Chisq(ChisqArgs),
}

#[derive(Debug, Subcommand)]
pub enum ModelCommand {
    Build(BuildArgs),
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// maximal-nxn, maximal-2x2, nonmaximal-nxn, finite or delayed-choice
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub r: Option<String>,
    /// Comma-separated angles in radians; `pi/8` style multiples are accepted.
    #[arg(long, allow_hyphen_values = true)]
    pub a_settings: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub b_settings: Option<String>,
    /// none, symmetric or independent
    #[arg(long)]
    pub padding: Option<String>,
    #[arg(long)]
    pub resolution: Option<u64>,
    /// Constant added to the column height (non-optimal test fixtures).
    #[arg(long)]
    pub height_offset: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<String>,
}

#[derive(Debug, Args)]
pub struct EfficiencyArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Sample-space area, instead of a model file.
    #[arg(long)]
    pub s: Option<String>,
}

#[derive(Debug, Args)]
pub struct ModelPathArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated subset of nxn, lhv2x2, lhv3x3, ch.
    #[arg(long)]
    pub kinds: Option<String>,
    /// r range as min:max:step.
    #[arg(long)]
    pub r: Option<String>,
    /// Directory for `<kind>.csv` files and `sweep.meta.json`; stdout if absent.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub ch_step: Option<String>,
    #[arg(long)]
    pub step_2x2: Option<String>,
    #[arg(long)]
    pub step_3x3: Option<String>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// lhv2x2, lhv3x3 or ch
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub r: Option<String>,
    /// Coarse grid step; defaults to pi/200 (2x2, CH) or pi/32 (3x3).
    #[arg(long)]
    pub step: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Schedule; defaults to the model's own lists, or the CHSH angles.
    #[arg(long, allow_hyphen_values = true)]
    pub a_settings: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub b_settings: Option<String>,
    #[arg(long)]
    pub n: Option<u64>,
    /// Falls back to LHV_FORGE_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    /// lhv (default) or quantum
    #[arg(long)]
    pub source: Option<String>,
    /// State ratio for the quantum source when no model file is given.
    #[arg(long)]
    pub r: Option<String>,
    /// Detector efficiency for the quantum source.
    #[arg(long)]
    pub eta: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional per-trial CSV.
    #[arg(long)]
    pub trials: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ChisqArgs {
    /// Output of `simulate`, or a bare counts table.
    #[arg(long)]
    pub counts: Option<PathBuf>,
    /// Efficiency under test; defaults to the value recorded by `simulate`.
    #[arg(long)]
    pub eta: Option<String>,
    /// State ratio r; defaults to the state recorded by `simulate`.
    #[arg(long)]
    pub r: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub a_settings: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub b_settings: Option<String>,
    /// poisson (default) or a positive constant
    #[arg(long)]
    pub sigma: Option<String>,
    /// uniform (default) or conditioned
    #[arg(long)]
    pub basis: Option<String>,
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { stdout.write_all(text.as_bytes()) } else { stderr.write_all(text.as_bytes()) };
            return code;
        }
    };
    let pool = match cli.jobs {
        Some(0) => {
            let _ = writeln!(stderr, "error: --jobs must be at least 1");
            return EXIT_USAGE;
        }
        Some(j) => rayon::ThreadPoolBuilder::new().num_threads(j).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(stderr, "error: cannot start worker pool: {e}");
            return EXIT_NUMERICAL;
        }
    };
    let mut buf: Vec<u8> = Vec::new();
    let result = pool.install(|| commands::execute(&cli, &mut buf));
    match result {
        Ok(()) => {
            let _ = stdout.write_all(&buf);
            0
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_usage() {
                EXIT_USAGE
            } else {
                EXIT_NUMERICAL
            }
        }
    }
}
