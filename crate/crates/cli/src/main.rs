// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use polyseg::segment_cost::Engine;
use polyseg::signal_model::LowerBoundKind;

mod commands;
mod error;
mod input;
mod scenario;

/// Change-point localization for piecewise-polynomial signals.
#[derive(Debug, Parser)]
#[command(name = "polyseg", version, about)]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Log level filter, e.g. `info` or `debug` (overrides RUST_LOG).
    #[arg(long, global = true)]
    log: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Detect change points in a series read from a file.
    Detect(DetectArgs),
    /// Run Monte Carlo trials for a scenario and write one CSV row per trial.
    Simulate(RunArgs),
    /// Run a rate sweep: trial CSV plus a JSON summary with the fitted slope.
    Sweep(SweepArgs),
    /// Build a two-point lower-bound instance and report its KL divergence.
    Lowerbound(LowerBoundArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EngineArg {
    Moment,
    Exact,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Moment => Engine::Moment,
            EngineArg::Exact => Engine::Exact,
        }
    }
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("penalty").required(true).args(["lambda", "lambda_c"]))]
struct DetectArgs {
    /// One value per line, or a single-column CSV with an optional header.
    input: PathBuf,

    /// Polynomial degree `r` of each segment.
    #[arg(short = 'r', long, default_value_t = 0)]
    degree: usize,

    /// Penalty per segment.
    #[arg(long)]
    lambda: Option<f64>,

    /// Estimate the noise variance from differences and use
    /// `lambda = c * sigma_hat^2 * ln n`.
    #[arg(long = "lambda-c", value_name = "C")]
    lambda_c: Option<f64>,

    /// Shortest admissible segment.
    #[arg(long, default_value_t = 1)]
    min_seg_len: usize,

    #[arg(long, value_enum, default_value = "moment")]
    engine: EngineArg,

    /// Shorthand for `--engine exact`.
    #[arg(long, conflicts_with = "engine")]
    exact: bool,

    /// Output file (default: stdout).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Scenario file (TOML, or JSON with a `.json` extension).
    scenario: PathBuf,

    /// Override the scenario's master seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Trial CSV (default: stdout).
    #[arg(short, long)]
    output: Option<PathBuf>,

    /// Leave the runtime column empty so output is reproducible byte for byte.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,

    /// JSON summary (default: stderr).
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LowerBoundArgs {
    /// Parameter file with a `[lowerbound]` table; replaces the flags below.
    #[arg(long, conflicts_with_all = ["kind", "kappa", "sigma", "degree", "n", "spacing", "shift", "xi"])]
    params: Option<PathBuf>,

    #[arg(long, value_enum, required_unless_present = "params")]
    kind: Option<KindArg>,

    #[arg(long, required_unless_present = "params")]
    kappa: Option<f64>,

    #[arg(long, default_value_t = 1.0)]
    sigma: f64,

    #[arg(short = 'r', long, default_value_t = 0)]
    degree: usize,

    #[arg(short = 'n', long, required_unless_present = "params")]
    n: Option<usize>,

    /// Spacing `Delta` (default: n/4).
    #[arg(long)]
    spacing: Option<usize>,

    /// Shift `delta`.
    #[arg(long, default_value_t = 0)]
    shift: usize,

    /// Signal-strength target `xi` of the mirror construction.
    #[arg(long)]
    xi: Option<f64>,

    /// CSV of both mean sequences (default: not written).
    #[arg(short, long)]
    output: Option<PathBuf>,

    /// JSON summary (default: stdout).
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Lemma1,
    Lemma2,
    Lemma3,
}

impl From<KindArg> for LowerBoundKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Lemma1 => LowerBoundKind::Shift,
            KindArg::Lemma2 => LowerBoundKind::Mirror,
            KindArg::Lemma3 => LowerBoundKind::SmoothShift,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut logger =
        env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"));
    if let Some(filter) = &cli.log {
        logger.parse_filters(filter);
    }
    logger.init();

    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!("error: cannot configure {t} threads: {e}");
            return ExitCode::from(2);
        }
    }

    let result = match cli.command {
        Command::Detect(a) => commands::detect(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Lowerbound(a) => commands::lowerbound(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
