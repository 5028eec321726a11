use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use anyhow::Context;

use v2g_core::coordinator::FleetWarning;
use v2g_core::io::{self, DataError, REPORT_FILE, TRACE_FILE};
use v2g_core::synth::SynthError;
use v2g_core::{forecast_all, generate, prepare_agents, run, RunError, SynthParams};

use crate::{PredictArgs, ReportArgs, ScheduleArgs, SynthArgs};

pub const EXIT_INTERNAL: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NOT_CONVERGED: u8 = 4;

/// Command failure, mapped onto a distinct exit code per kind.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Internal(anyhow::Error),
    NotConverged,
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(e) | Failure::Data(e) | Failure::Internal(e) => {
                if f.alternate() {
                    write!(f, "{e:#}")
                } else {
                    write!(f, "{e}")
                }
            }
            Failure::NotConverged => f.write_str("did not converge"),
        }
    }
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Data(_) => EXIT_DATA,
            Failure::Internal(_) => EXIT_INTERNAL,
            Failure::NotConverged => EXIT_NOT_CONVERGED,
        }
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        Failure::Data(e.into())
    }
}

impl From<SynthError> for Failure {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidParams(_) => Failure::Usage(e.into()),
            SynthError::Data(d) => d.into(),
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Solve { .. } => Failure::Internal(e.into()),
            RunError::InvalidConfig(_) => Failure::Usage(e.into()),
            _ => Failure::Data(e.into()),
        }
    }
}

pub fn synth(args: SynthArgs) -> Result<(), Failure> {
    let mut p = SynthParams::with_shape(args.seed, args.n_users, args.t_slots);
    p.slot_minutes = args.slot_minutes;
    if let Some(v) = args.base_kw {
        p.base_kw = v;
    }
    if let Some(v) = args.peak_kw {
        p.peak_kw = v;
    }
    if let Some(v) = args.valley_kw {
        p.valley_kw = v;
    }
    p.peak_slots = (args.peak_start.unwrap_or(p.peak_slots.0), args.peak_end.unwrap_or(p.peak_slots.1));
    p.valley_slots = (
        args.valley_start.unwrap_or(p.valley_slots.0),
        args.valley_end.unwrap_or(p.valley_slots.1),
    );
    if let Some(v) = args.noise_kw {
        p.noise_kw = v;
    }
    if let Some(v) = args.sessions_per_user {
        p.sessions_per_user = v;
    }
    if let Some(v) = args.p_max_kw {
        p.p_max_kw = v;
    }
    if let Some(v) = args.d_max_kw {
        p.d_max_kw = v;
    }
    let instance = generate(&p)?;
    instance.write_to(&args.out_dir)?;
    eprintln!(
        "wrote {} slots, {} sessions for {} users to {}",
        instance.baseload.len(),
        instance.sessions.len(),
        instance.fleet.len(),
        args.out_dir.display()
    );
    Ok(())
}

pub fn predict(args: PredictArgs) -> Result<(), Failure> {
    let ingest = io::read_sessions(&args.sessions, args.weekdays_only)?;
    if ingest.dropped_midnight > 0 {
        eprintln!("warning: dropped {} session(s) spanning midnight", ingest.dropped_midnight);
    }
    if ingest.dropped_weekend > 0 {
        eprintln!("note: skipped {} weekend session(s)", ingest.dropped_weekend);
    }
    let mut outcomes = Vec::new();
    for result in forecast_all(&ingest.sessions) {
        match result {
            Ok(outcome) => outcomes.push(outcome),
            Err(e) => eprintln!("warning: {e}"),
        }
    }
    io::write_forecasts(&args.out, &outcomes)?;
    let invalid: Vec<&str> = outcomes
        .iter()
        .filter(|o| o.valid().is_none())
        .map(|o| o.forecast().user_id.as_str())
        .collect();
    if outcomes.is_empty() {
        eprintln!("note: no usable sessions; wrote 0 forecasts to {}", args.out.display());
    } else {
        eprintln!(
            "wrote {} forecast(s) to {} ({} invalid)",
            outcomes.len(),
            args.out.display(),
            invalid.len()
        );
    }
    for user in invalid {
        eprintln!("warning: forecast for {user} has a non-positive window and will not be scheduled");
    }
    Ok(())
}

pub fn schedule(args: ScheduleArgs) -> Result<(), Failure> {
    let (grid, mut config) = io::read_config(&args.config)?;
    if let Some(v) = args.lambda {
        config.lambda = v;
    }
    if let Some(v) = args.epsilon {
        config.epsilon = v;
    }
    if let Some(v) = args.u {
        config.u = v;
    }
    if let Some(v) = args.v {
        config.v = v;
    }
    if let Some(v) = args.max_iters {
        config.max_iters = v;
    }
    if let Some(v) = args.norm {
        config.norm = v;
    }
    config.validate()?;

    let baseload = io::read_baseload(&args.baseload, grid.slot_count())?;
    let forecasts = io::read_forecasts(&args.forecasts)?;
    let fleet = io::read_fleet(&args.fleet)?;

    let (agents, mut warnings) = prepare_agents(&grid, &fleet, &forecasts.forecasts)?;
    for w in warnings.iter_mut().filter(|w| w.excluded) {
        if let Some(spec) = fleet.iter().find(|s| s.evse_id == w.evse_id) {
            if forecasts.invalid_users.contains(&spec.user_id) {
                w.message = format!("forecast for user {} is marked invalid", spec.user_id);
            }
        }
    }
    report_warnings(&warnings);

    let result = run(baseload.as_slice(), agents, &grid, &config)?;
    io::write_artifacts(&result, &warnings, &args.out_dir)?;
    eprintln!(
        "{} after {} iteration(s); peak {:.3} -> {:.3} kW; artifacts in {}",
        if result.converged { "converged" } else { "not converged" },
        result.iterations,
        result.metrics.peak_before_kw,
        result.metrics.peak_after_kw,
        args.out_dir.display()
    );
    if result.converged {
        Ok(())
    } else {
        eprintln!(
            "error: no convergence within {} iterations (epsilon = {})",
            config.max_iters, config.epsilon
        );
        Err(Failure::NotConverged)
    }
}

fn report_warnings(warnings: &[FleetWarning]) {
    for w in warnings {
        let tag = if w.excluded { "excluded" } else { "clamped" };
        eprintln!("warning: {} {tag}: {}", w.evse_id, w.message);
    }
}

pub fn report(args: ReportArgs) -> Result<(), Failure> {
    let report_path = args.out_dir.join(REPORT_FILE);
    let trace_path = args.out_dir.join(TRACE_FILE);
    for path in [&report_path, &trace_path] {
        if !path.exists() {
            return Err(Failure::Data(anyhow::anyhow!(
                "{} not found; run `v2g schedule --out-dir {}` first",
                path.display(),
                args.out_dir.display()
            )));
        }
    }
    let report = io::read_report(&report_path)?;
    let trace = io::read_trace(&trace_path)?;
    let m = &report.metrics;
    let reduction = if m.peak_before_kw != 0.0 {
        (m.peak_before_kw - m.peak_after_kw) / m.peak_before_kw
    } else {
        0.0
    };

    let total_series: String = report
        .total_load_kw
        .iter()
        .enumerate()
        .fold(String::new(), |mut s, (t, kw)| {
            let _ = writeln!(s, "{t} {kw}");
            s
        });
    let delta_series: String = trace
        .iter()
        .filter_map(|t| t.control_delta.map(|d| (t.iteration, d)))
        .fold(String::new(), |mut s, (i, d)| {
            let _ = writeln!(s, "{i} {d}");
            s
        });

    let mut out = String::new();
    let _ = writeln!(out, "converged        {}", report.converged);
    let _ = writeln!(out, "iterations       {}", report.iterations);
    let _ = writeln!(out, "EVSEs scheduled  {}", report.evse_count);
    let _ = writeln!(out, "peak before      {:.3} kW", m.peak_before_kw);
    let _ = writeln!(out, "peak after       {:.3} kW", m.peak_after_kw);
    let _ = writeln!(out, "peak reduction   {:.1}%", 100.0 * reduction);
    let _ = writeln!(out, "variance before  {:.3} kW^2", m.variance_before);
    let _ = writeln!(out, "variance after   {:.3} kW^2", m.variance_after);
    for w in &report.warnings {
        let _ = writeln!(out, "warning          {w}");
    }
    let _ = writeln!(out, "\n# total load: slot total_kw\n{total_series}");
    let _ = write!(out, "# convergence: iteration control_delta\n{delta_series}");
    let mut stdout = std::io::stdout().lock();
    match stdout.write_all(out.as_bytes()).and_then(|_| stdout.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
            return Err(Failure::Data(anyhow::Error::new(e).context("writing to stdout")))
        }
        _ => {}
    }

    if let Some(dir) = args.plot_dir {
        write_series(&dir, "total_load.dat", "# slot total_kw\n", &total_series)?;
        write_series(&dir, "convergence.dat", "# iteration control_delta\n", &delta_series)?;
    }
    Ok(())
}

fn write_series(dir: &Path, name: &str, header: &str, body: &str) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .and_then(|_| fs::write(dir.join(name), format!("{header}{body}")))
        .with_context(|| format!("writing {}", dir.join(name).display()))
        .map_err(Failure::Data)
}
