//! Pipeline driver: outcome scoring, risk-set matching, cross-screening, and
//! the Monte-Carlo power study, with a reproducibility manifest per run.
//!
//! Exit codes: 0 success; 2 usage or configuration error; 3 input schema
//! error; 4 computation error (degenerate statistic, singular design,
//! nonconvergence, mismatched inputs); 5 I/O error.

mod manifest;
mod matching;
mod score;
mod screen;
mod simulate;

use clap::{Args, Parser, Subcommand};
use crossmatch_core::outcome_scoring::{CesdItemMap, PwbItemMap};
use crossmatch_core::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "crossmatch",
    version,
    about = "Risk-set matching, sensitivity-adjusted randomization tests, \
             cross-screening, and power simulation"
)]
struct Cli {
    /// Worker threads (default: all cores). Outputs are identical for any
    /// thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive outcome scores from raw survey item columns.
    Score(ScoreArgs),
    /// Build matched treated-control pairs from a longitudinal cohort.
    #[command(name = "match")]
    Match(MatchArgs),
    /// Run a two-subgroup screening analysis on paired differences.
    Screen(ScreenArgs),
    /// Run the Monte-Carlo power study from a key=value config file.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct ScoreArgs {
    /// Raw item CSV (see docs/formats.md for the column list).
    #[arg(long)]
    input: PathBuf,
    /// Output directory for outcomes.csv and manifest.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Alternative CES-D item map (versioned TOML).
    #[arg(long)]
    cesd_map: Option<PathBuf>,
    /// Alternative well-being item map (versioned TOML).
    #[arg(long)]
    pwb_map: Option<PathBuf>,
}

#[derive(Args)]
struct MatchArgs {
    /// Woman-year covariate CSV.
    #[arg(long)]
    cohort: PathBuf,
    /// Birth history CSV.
    #[arg(long)]
    births: PathBuf,
    /// Which subgroup to match: catholic, non_catholic, or both.
    #[arg(long, default_value = "both")]
    religion: String,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ScreenArgs {
    /// Paired differences CSV with exactly two subgroups.
    #[arg(long)]
    differences: PathBuf,
    /// Target familywise error level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Comma-separated sensitivity parameters.
    #[arg(long, default_value = "1,1.2,2.0", value_delimiter = ',')]
    gamma: Vec<f64>,
    /// automated | weighted-rep | weighted-global | holm-global |
    /// holm-max-p | holm-twosided
    #[arg(long, default_value = "automated")]
    method: String,
    /// Screening weight parameter for the weighted methods.
    #[arg(long, default_value_t = 0.0)]
    c: f64,
    /// Test statistic: wilcoxon or ttest.
    #[arg(long, default_value = "wilcoxon")]
    statistic: String,
    /// Tail evaluation: exact, normal, or auto.
    #[arg(long, default_value = "auto")]
    mode: String,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// key=value study configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidParameter(_) | Error::Config(_) => 2,
        Error::Schema { .. } => 3,
        Error::EmptyInput(_)
        | Error::DegenerateStatistic
        | Error::MismatchedInput(_)
        | Error::SingularInformation(_)
        | Error::NonConvergence { .. }
        | Error::Validation(_) => 4,
        Error::Csv(_) | Error::Io(_) => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot configure {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let threads = cli.threads;

    let result = match cli.command {
        Command::Score(args) => run_score(args, threads),
        Command::Match(args) => matching::run(
            &args.cohort,
            &args.births,
            &args.religion,
            &args.out_dir,
            threads,
        ),
        Command::Screen(args) => screen::run(screen::Request {
            differences: args.differences,
            alpha: args.alpha,
            gammas: args.gamma,
            method: args.method,
            c: args.c,
            statistic: args.statistic,
            mode: args.mode,
            out_dir: args.out_dir,
            threads,
        }),
        Command::Simulate(args) => simulate::run(&args.config, &args.out_dir, threads),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn run_score(args: ScoreArgs, threads: Option<usize>) -> crossmatch_core::Result<()> {
    let cesd_map = match &args.cesd_map {
        Some(path) => CesdItemMap::load(path)?,
        None => CesdItemMap::default(),
    };
    let pwb_map = match &args.pwb_map {
        Some(path) => PwbItemMap::load(path)?,
        None => PwbItemMap::default(),
    };
    std::fs::create_dir_all(&args.out_dir)?;
    let output = args.out_dir.join("outcomes.csv");
    let rows = score::run(&args.input, &output, &cesd_map, &pwb_map)?;

    let mut manifest = manifest::RunManifest::new("score");
    manifest.input(&args.input)?;
    if let Some(path) = &args.cesd_map {
        manifest.input(path)?;
    }
    if let Some(path) = &args.pwb_map {
        manifest.input(path)?;
    }
    manifest
        .parameter("cesd_map_version", &cesd_map.version)
        .parameter("pwb_map_version", &pwb_map.version)
        .parameter("rows", rows)
        .parameter("threads", format_threads(threads))
        .output(&output);
    manifest.write(&args.out_dir)?;
    eprintln!("scored {rows} rows -> {}", output.display());
    Ok(())
}

pub(crate) fn format_threads(threads: Option<usize>) -> String {
    threads
        .map(|t| t.to_string())
        .unwrap_or_else(|| "auto".to_string())
}
