mod commands;
mod diagnose;
mod error;
mod evaluate;
mod manifest;
mod svg;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nowcast::estimator::{Method, Smoothing};
use nowcast::ingest::{CaseMode, Question, DEFAULT_DENOISE_WIDTH};

use crate::error::{CliError, CliResult};
use crate::manifest::{strip_out_dir, Outputs, RunManifest};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  file could not be read or written
  2  invalid configuration or arguments
  3  malformed input data or missing columns
  4  series share no common range
  5  value outside a formula's domain (e.g. a zero in a ratio)

Every run writes manifest.json to the output directory; `nowcast replay`
re-runs it from the same working directory.";

/// Nowcasting hidden-population trends from indirect survey responses.
#[derive(Debug, Parser)]
#[command(name = "nowcast", version, after_help = EXIT_CODES)]
struct Cli {
    /// Seed overriding the one in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory receiving every output file and the manifest.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// TOML file with the command's configuration (simulate, survey, sweep).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a multi-wave epidemic; writes trajectory.csv.
    Simulate(SimulateArgs),
    /// Simulate daily indirect/direct survey responses on a trajectory.
    Survey(SurveyArgs),
    /// Turn response batches into a (smoothed) estimate series.
    Estimate(EstimateArgs),
    /// Range-normalized MAE of estimate series against a reference.
    Evaluate(EvaluateArgs),
    /// Run a parameter grid of simulated experiments (resumable).
    Sweep(SweepArgs),
    /// Smoothness diagnostics of a positive series.
    Diagnose(DiagnoseArgs),
    /// Filter survey microdata and prepare batches and a reference curve.
    Ingest(IngestArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Reject trajectories with fewer incidence peaks, trying later seeds.
    #[arg(long)]
    multiwave: Option<usize>,
    #[arg(long, default_value_t = 200)]
    max_attempts: usize,
}

#[derive(Debug, Args)]
pub struct SurveyArgs {
    /// Trajectory CSV written by `simulate`.
    #[arg(long)]
    trajectory: PathBuf,
    /// Mean degree of the latent graph.
    #[arg(long)]
    d: Option<f64>,
    /// Daily respondent cap.
    #[arg(long)]
    n: Option<usize>,
    /// Nodes potentially covered by respondents.
    #[arg(long)]
    n_d: Option<u64>,
    /// Look-back days of the survey question.
    #[arg(long)]
    period: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Response batches CSV.
    #[arg(long)]
    batches: PathBuf,
    /// Ind, NSUM or Dir.
    #[arg(long, default_value = "Ind")]
    method: Method,
    /// NoS, WA or UA.
    #[arg(long, default_value = "NoS", conflicts_with = "auto_window")]
    smoothing: Smoothing,
    /// Days pooled per bin.
    #[arg(long, default_value_t = 1)]
    accum: u32,
    /// Moving-average half-width.
    #[arg(long, default_value_t = 0, conflicts_with = "auto_window")]
    w: usize,
    /// Choose the window adaptively for this tolerated fractional error.
    #[arg(long)]
    auto_window: Option<f64>,
    #[arg(long, default_value_t = 10)]
    w_init: usize,
    /// Smoothness bounds; estimated from the data when omitted.
    #[arg(long)]
    eps_f1: Option<f64>,
    #[arg(long)]
    eps_f2: Option<f64>,
    #[arg(long)]
    eps_s1: Option<f64>,
    /// Output file stem (default `<method>-<smoothing>`).
    #[arg(long)]
    name: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Estimate CSVs; the file stem labels each row.
    #[arg(required = true)]
    estimates: Vec<PathBuf>,
    /// Daily reference series (`day,value`).
    #[arg(long)]
    reference: PathBuf,
    #[arg(long, default_value = "mae.csv")]
    name: String,
    /// Wide table: one row per (accum, w), one column per series.
    #[arg(long, default_value = "mae_table.csv")]
    wide_name: String,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = "sweep.csv")]
    name: String,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// A `day,value` series or an estimate CSV (whose counts are then used).
    series: PathBuf,
    /// Response-variance series for the variance bounds.
    #[arg(long)]
    variance: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    w_max: usize,
    /// Count dispersion sigma_n / mu_n.
    #[arg(long)]
    sigma_ratio: Option<f64>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Survey microdata CSV.
    #[arg(long)]
    survey: PathBuf,
    /// Official case counts (`date,cases`).
    #[arg(long)]
    reference: Option<PathBuf>,
    /// cumulative or daily.
    #[arg(long, default_value = "cumulative")]
    mode: CaseMode,
    #[arg(long, default_value_t = DEFAULT_DENOISE_WIDTH)]
    denoise_width: usize,
    /// household, community or direct; repeatable (default: all).
    #[arg(long)]
    question: Vec<Question>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    manifest: PathBuf,
}

pub struct Ctx {
    pub seed: Option<u64>,
    pub config: Option<PathBuf>,
}

/// What a command resolved its inputs to, for the manifest.
pub struct Resolved {
    pub config: serde_json::Value,
    pub seed: Option<u64>,
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Simulate(_) => "simulate",
        Command::Survey(_) => "survey",
        Command::Estimate(_) => "estimate",
        Command::Evaluate(_) => "evaluate",
        Command::Sweep(_) => "sweep",
        Command::Diagnose(_) => "diagnose",
        Command::Ingest(_) => "ingest",
        Command::Replay(_) => "replay",
    }
}

fn run(cli: Cli, args: Vec<String>) -> CliResult<()> {
    if let Command::Replay(r) = &cli.command {
        let manifest = RunManifest::read(&r.manifest)?;
        if manifest.command == "replay" {
            return Err(CliError::Manifest("cannot replay a replay".into()));
        }
        let mut argv = vec!["nowcast".to_string(), "--out-dir".to_string()];
        argv.push(cli.out_dir.display().to_string());
        argv.extend(manifest.args.iter().cloned());
        let replayed = Cli::try_parse_from(&argv)
            .map_err(|e| CliError::Manifest(format!("recorded arguments: {e}")))?;
        return run(replayed, manifest.args);
    }
    let ctx = Ctx {
        seed: cli.seed,
        config: cli.config.clone(),
    };
    let mut out = Outputs::new(&cli.out_dir)?;
    let resolved = match &cli.command {
        Command::Simulate(a) => commands::simulate_cmd(a, &ctx, &mut out)?,
        Command::Survey(a) => commands::survey_cmd(a, &ctx, &mut out)?,
        Command::Estimate(a) => commands::estimate_cmd(a, &ctx, &mut out)?,
        Command::Evaluate(a) => evaluate::evaluate_cmd(a, &ctx, &mut out)?,
        Command::Sweep(a) => sweep::sweep_cmd(a, &ctx, &mut out)?,
        Command::Diagnose(a) => diagnose::diagnose_cmd(a, &ctx, &mut out)?,
        Command::Ingest(a) => commands::ingest_cmd(a, &ctx, &mut out)?,
        Command::Replay(_) => unreachable!("handled above"),
    };
    out.finish(
        command_name(&cli.command),
        args,
        resolved.config,
        resolved.seed,
    )?;
    Ok(())
}

fn main() -> ExitCode {
    let raw: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    match run(cli, strip_out_dir(&raw)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
