//! `v2g`: synthetic scenarios, behavior prediction, scheduling and reports.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use v2g_core::Norm;

#[derive(Debug, Parser)]
#[command(name = "v2g", version, about = "Distributed bi-directional EV charging scheduler")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded synthetic baseload, session history, fleet and config.
    Synth(SynthArgs),
    /// Forecast each user's plug-in window and energy demand.
    Predict(PredictArgs),
    /// Run the coordinator and write schedule, trace and report.
    Schedule(ScheduleArgs),
    /// Summarize a schedule run and print plot-ready series.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 30)]
    n_users: usize,
    #[arg(long, default_value_t = 60)]
    t_slots: usize,
    #[arg(long, default_value_t = 12)]
    slot_minutes: u32,
    #[arg(long)]
    base_kw: Option<f64>,
    #[arg(long)]
    peak_kw: Option<f64>,
    #[arg(long)]
    valley_kw: Option<f64>,
    /// First slot of the peak (0-based).
    #[arg(long)]
    peak_start: Option<usize>,
    /// Last slot of the peak, inclusive.
    #[arg(long)]
    peak_end: Option<usize>,
    #[arg(long)]
    valley_start: Option<usize>,
    #[arg(long)]
    valley_end: Option<usize>,
    #[arg(long)]
    noise_kw: Option<f64>,
    #[arg(long)]
    sessions_per_user: Option<usize>,
    #[arg(long)]
    p_max_kw: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    d_max_kw: Option<f64>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    sessions: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Ignore sessions that start on Saturday or Sunday.
    #[arg(long)]
    weekdays_only: bool,
}

#[derive(Debug, Args)]
struct ScheduleArgs {
    #[arg(long)]
    baseload: PathBuf,
    #[arg(long)]
    forecasts: PathBuf,
    #[arg(long)]
    fleet: PathBuf,
    /// File with `[grid]` and optional `[run]` sections; may be the fleet file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    u: Option<u32>,
    #[arg(long)]
    v: Option<u32>,
    #[arg(long)]
    max_iters: Option<u32>,
    #[arg(long, value_parser = parse_norm)]
    norm: Option<Norm>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    out_dir: PathBuf,
    /// Also write `total_load.dat` and `convergence.dat` here.
    #[arg(long)]
    plot_dir: Option<PathBuf>,
}

fn parse_norm(s: &str) -> Result<Norm, String> {
    match s {
        "l2" => Ok(Norm::L2),
        "linf" => Ok(Norm::Linf),
        other => Err(format!("unknown norm {other:?}, expected l2 or linf")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Synth(args) => commands::synth(args),
        Command::Predict(args) => commands::predict(args),
        Command::Schedule(args) => commands::schedule(args),
        Command::Report(args) => commands::report(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            if !matches!(failure, commands::Failure::NotConverged) {
                eprintln!("error: {failure:#}");
            }
            ExitCode::from(failure.exit_code())
        }
    }
}
