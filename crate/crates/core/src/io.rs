//! File formats.
//!
//! | file            | format                                                         |
//! |-----------------|----------------------------------------------------------------|
//! | baseload        | CSV `slot,baseload_kw`, exactly T rows in slot order            |
//! | sessions        | CSV `user_id,start,end,energy_kwh`, ISO-8601 local timestamps  |
//! | forecasts       | CSV, see [`FORECAST_HEADER`]                                    |
//! | fleet / config  | TOML with `[grid]`, `[run]` and `[[evse]]` sections             |
//! | schedule        | CSV `slot,<evse_id>...`, kW                                     |
//! | trace           | CSV, see [`TRACE_HEADER`]                                       |
//! | report          | TOML record, see [`Report`]                                     |
//!
//! Row numbers in errors count data rows from 1, header excluded. Floats are
//! written with Rust's shortest round-trip formatting.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Datelike, NaiveDateTime, Weekday};
use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coordinator::{FleetWarning, IterationTrace, Metrics, RunConfig, ScheduleResult};
use crate::predict::{BehaviorForecast, ForecastOutcome, SessionRecord};
use crate::time::{SlotVector, TimeError, TimeGrid};

pub const BASELOAD_HEADER: [&str; 2] = ["slot", "baseload_kw"];
pub const SESSIONS_HEADER: [&str; 4] = ["user_id", "start", "end", "energy_kwh"];
pub const FORECAST_HEADER: [&str; 8] = [
    "user_id",
    "t_start_min",
    "t_end_min",
    "theta_kwh_per_h",
    "energy_pred_kwh",
    "sample_count",
    "valid",
    "note",
];
pub const TRACE_HEADER: [&str; 6] = [
    "iteration",
    "control_delta",
    "objective",
    "peak_kw",
    "signal_updated",
    "profiles_updated",
];

pub const SCHEDULE_FILE: &str = "schedule.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const REPORT_FILE: &str = "report.toml";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: row {row}: {message}", path.display())]
    Row {
        path: PathBuf,
        row: usize,
        message: String,
    },
    #[error("{}: expected {expected} data rows, found {actual}", path.display())]
    RowCount {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },
    #[error("{}: expected header {expected:?}, found {found:?}", path.display())]
    Header {
        path: PathBuf,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("{}: {message}", path.display())]
    Invalid { path: PathBuf, message: String },
}

impl DataError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn row(path: &Path, row: usize, message: impl Into<String>) -> Self {
        DataError::Row {
            path: path.to_path_buf(),
            row,
            message: message.into(),
        }
    }

    fn invalid(path: &Path, message: impl Into<String>) -> Self {
        DataError::Invalid {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    fn csv(path: &Path, row: usize, err: csv::Error) -> Self {
        match err.into_kind() {
            csv::ErrorKind::Io(source) => Self::io(path, source),
            other => Self::row(path, row, format!("{other:?}")),
        }
    }
}

fn read_text(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|e| DataError::io(path, e))
}

fn write_text(path: &Path, contents: &str) -> Result<(), DataError> {
    fs::write(path, contents).map_err(|e| DataError::io(path, e))
}

/// Parses CSV text into data rows after checking the header.
///
/// An empty file yields no rows.
fn csv_rows(path: &Path, text: &str, header: &[&str]) -> Result<Vec<csv::StringRecord>, DataError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let found = reader.headers().map_err(|e| DataError::csv(path, 0, e))?.clone();
    check_header(path, &found, header)?;
    reader
        .records()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| DataError::csv(path, i + 1, e)))
        .collect()
}

fn check_header(path: &Path, found: &csv::StringRecord, expected: &[&str]) -> Result<(), DataError> {
    if found.iter().ne(expected.iter().copied()) {
        return Err(DataError::Header {
            path: path.to_path_buf(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: found.iter().map(str::to_string).collect(),
        });
    }
    Ok(())
}

fn parse_field<T: FromStr>(path: &Path, row: usize, record: &csv::StringRecord, idx: usize, name: &str) -> Result<T, DataError>
where
    T::Err: std::fmt::Display,
{
    let raw = record
        .get(idx)
        .ok_or_else(|| DataError::row(path, row, format!("missing column {name}")))?;
    raw.parse()
        .map_err(|e| DataError::row(path, row, format!("bad {name} {raw:?}: {e}")))
}

fn finite(path: &Path, row: usize, name: &str, value: f64) -> Result<f64, DataError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(DataError::row(path, row, format!("{name} is not finite ({value})")))
    }
}

/// Reads a baseload profile of exactly `slot_count` rows.
pub fn read_baseload(path: &Path, slot_count: usize) -> Result<SlotVector, DataError> {
    let text = read_text(path)?;
    let rows = csv_rows(path, &text, &BASELOAD_HEADER)?;
    if rows.len() != slot_count {
        return Err(DataError::RowCount {
            path: path.to_path_buf(),
            expected: slot_count,
            actual: rows.len(),
        });
    }
    let mut values = Vec::with_capacity(rows.len());
    for (i, record) in rows.iter().enumerate() {
        let row = i + 1;
        let slot: usize = parse_field(path, row, record, 0, "slot")?;
        if slot != i {
            return Err(DataError::row(path, row, format!("slot {slot} out of order, expected {i}")));
        }
        let kw: f64 = parse_field(path, row, record, 1, "baseload_kw")?;
        values.push(finite(path, row, "baseload_kw", kw)?);
    }
    Ok(SlotVector::new(values).expect("entries checked finite"))
}

pub fn write_baseload(path: &Path, baseload: &[f64]) -> Result<(), DataError> {
    let mut out = BASELOAD_HEADER.join(",");
    out.push('\n');
    for (slot, kw) in baseload.iter().enumerate() {
        out.push_str(&format!("{slot},{kw}\n"));
    }
    write_text(path, &out)
}

/// Result of reading a session history.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionIngest {
    pub sessions: Vec<SessionRecord>,
    pub dropped_midnight: usize,
    pub dropped_weekend: usize,
}

fn parse_timestamp(path: &Path, row: usize, raw: &str, name: &str) -> Result<NaiveDateTime, DataError> {
    NaiveDateTime::from_str(raw)
        .or_else(|_| NaiveDateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S%.f"))
        .or_else(|_| NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M"))
        .map_err(|e| DataError::row(path, row, format!("malformed {name} timestamp {raw:?}: {e}")))
}

/// Reads a session history. Sessions crossing midnight are dropped; with
/// `weekdays_only`, sessions starting on Saturday or Sunday are dropped too.
pub fn read_sessions(path: &Path, weekdays_only: bool) -> Result<SessionIngest, DataError> {
    let text = read_text(path)?;
    let rows = csv_rows(path, &text, &SESSIONS_HEADER)?;
    let mut ingest = SessionIngest::default();
    for (i, record) in rows.iter().enumerate() {
        let row = i + 1;
        let user_id = record.get(0).unwrap_or_default();
        if user_id.is_empty() {
            return Err(DataError::row(path, row, "empty user_id"));
        }
        let start = parse_timestamp(path, row, record.get(1).unwrap_or_default(), "start")?;
        let end = parse_timestamp(path, row, record.get(2).unwrap_or_default(), "end")?;
        let energy: f64 = parse_field(path, row, record, 3, "energy_kwh")?;
        let session = SessionRecord::new(user_id, start, end, energy)
            .map_err(|e| DataError::row(path, row, e.to_string()))?;
        if session.spans_midnight() {
            ingest.dropped_midnight += 1;
            continue;
        }
        if weekdays_only && matches!(start.weekday(), Weekday::Sat | Weekday::Sun) {
            ingest.dropped_weekend += 1;
            continue;
        }
        ingest.sessions.push(session);
    }
    if ingest.dropped_midnight > 0 {
        warn!(
            "{}: dropped {} session(s) spanning midnight",
            path.display(),
            ingest.dropped_midnight
        );
    }
    Ok(ingest)
}

pub fn write_sessions(path: &Path, sessions: &[SessionRecord]) -> Result<(), DataError> {
    let mut out = SESSIONS_HEADER.join(",");
    out.push('\n');
    for s in sessions {
        out.push_str(&format!(
            "{},{},{},{}\n",
            s.user_id,
            s.start.format("%Y-%m-%dT%H:%M:%S"),
            s.end.format("%Y-%m-%dT%H:%M:%S"),
            s.energy_kwh
        ));
    }
    write_text(path, &out)
}

/// Writes one row per forecast; invalid ones carry `valid = false` and a note.
pub fn write_forecasts(path: &Path, outcomes: &[ForecastOutcome]) -> Result<(), DataError> {
    let mut out = FORECAST_HEADER.join(",");
    out.push('\n');
    for outcome in outcomes {
        let f = outcome.forecast();
        let (valid, note) = match outcome {
            ForecastOutcome::Valid(_) => (true, String::new()),
            ForecastOutcome::Invalid { reason, .. } => (false, reason.to_string().replace(',', ";")),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            f.user_id, f.t_start_pred, f.t_end_pred, f.theta, f.energy_pred_kwh, f.sample_count, valid, note
        ));
    }
    write_text(path, &out)
}

/// Forecasts usable for scheduling, plus user ids of rows marked invalid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForecastIngest {
    pub forecasts: Vec<BehaviorForecast>,
    pub invalid_users: Vec<String>,
}

pub fn read_forecasts(path: &Path) -> Result<ForecastIngest, DataError> {
    let text = read_text(path)?;
    let rows = csv_rows(path, &text, &FORECAST_HEADER)?;
    let mut ingest = ForecastIngest::default();
    let mut seen = HashSet::new();
    for (i, record) in rows.iter().enumerate() {
        let row = i + 1;
        let user_id = record.get(0).unwrap_or_default().to_string();
        if !seen.insert(user_id.clone()) {
            return Err(DataError::row(path, row, format!("duplicate user {user_id}")));
        }
        let valid: bool = parse_field(path, row, record, 6, "valid")?;
        let forecast = BehaviorForecast {
            user_id,
            t_start_pred: finite(path, row, "t_start_min", parse_field(path, row, record, 1, "t_start_min")?)?,
            t_end_pred: finite(path, row, "t_end_min", parse_field(path, row, record, 2, "t_end_min")?)?,
            theta: finite(path, row, "theta_kwh_per_h", parse_field(path, row, record, 3, "theta_kwh_per_h")?)?,
            energy_pred_kwh: finite(path, row, "energy_pred_kwh", parse_field(path, row, record, 4, "energy_pred_kwh")?)?,
            sample_count: parse_field(path, row, record, 5, "sample_count")?,
        };
        if valid && forecast.is_valid() {
            ingest.forecasts.push(forecast);
        } else {
            ingest.invalid_users.push(forecast.user_id);
        }
    }
    Ok(ingest)
}

/// One EVSE of the fleet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvseSpec {
    pub evse_id: String,
    pub user_id: String,
    pub p_max_kw: f64,
    pub d_max_kw: f64,
    #[serde(default)]
    pub lag: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub horizon_start: NaiveDateTime,
    pub slot_count: usize,
    pub slot_minutes: u32,
}

impl GridSpec {
    pub fn to_grid(&self) -> Result<TimeGrid, TimeError> {
        TimeGrid::new(self.horizon_start, self.slot_count, self.slot_minutes)
    }
}

impl From<&TimeGrid> for GridSpec {
    fn from(grid: &TimeGrid) -> Self {
        Self {
            horizon_start: grid.horizon_start(),
            slot_count: grid.slot_count(),
            slot_minutes: grid.slot_minutes(),
        }
    }
}

/// Keyed scenario file. Fleet and run configuration may live in one file or
/// in two; each reader only looks at its own sections.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub evse: Vec<EvseSpec>,
}

fn read_scenario(path: &Path) -> Result<ScenarioFile, DataError> {
    let text = read_text(path)?;
    toml::from_str(&text).map_err(|e| DataError::invalid(path, e.to_string()))
}

pub fn write_scenario(path: &Path, scenario: &ScenarioFile) -> Result<(), DataError> {
    let text = toml::to_string(scenario).map_err(|e| DataError::invalid(path, e.to_string()))?;
    write_text(path, &text)
}

/// Reads and validates the `[[evse]]` entries.
pub fn read_fleet(path: &Path) -> Result<Vec<EvseSpec>, DataError> {
    let fleet = read_scenario(path)?.evse;
    if fleet.is_empty() {
        return Err(DataError::invalid(path, "fleet has no [[evse]] entries"));
    }
    let mut ids = HashSet::new();
    for (i, spec) in fleet.iter().enumerate() {
        if !ids.insert(spec.evse_id.as_str()) {
            return Err(DataError::invalid(path, format!("duplicate evse_id {}", spec.evse_id)));
        }
        if !(spec.p_max_kw.is_finite() && spec.p_max_kw >= 0.0) {
            return Err(DataError::invalid(path, format!("evse #{}: p_max_kw must be >= 0", i + 1)));
        }
        if !(spec.d_max_kw.is_finite() && spec.d_max_kw <= 0.0) {
            return Err(DataError::invalid(path, format!("evse #{}: d_max_kw must be <= 0", i + 1)));
        }
    }
    Ok(fleet)
}

/// Reads `[grid]` (required) and `[run]` (defaults when absent).
pub fn read_config(path: &Path) -> Result<(TimeGrid, RunConfig), DataError> {
    let scenario = read_scenario(path)?;
    let grid = scenario
        .grid
        .ok_or_else(|| DataError::invalid(path, "missing [grid] section"))?
        .to_grid()
        .map_err(|e| DataError::invalid(path, e.to_string()))?;
    let run = scenario.run.unwrap_or_default();
    run.validate().map_err(|e| DataError::invalid(path, e.to_string()))?;
    Ok((grid, run))
}

/// Machine-readable run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub converged: bool,
    pub iterations: u32,
    pub slot_count: usize,
    pub dt_hours: f64,
    pub evse_count: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub baseload_kw: Vec<f64>,
    #[serde(default)]
    pub total_load_kw: Vec<f64>,
    pub metrics: Metrics,
    pub config: RunConfig,
}

impl Report {
    pub fn new(result: &ScheduleResult, warnings: &[FleetWarning]) -> Self {
        Self {
            converged: result.converged,
            iterations: result.iterations,
            slot_count: result.baseload.len(),
            dt_hours: result.dt_hours,
            evse_count: result.evse_ids.len(),
            warnings: warnings
                .iter()
                .map(|w| {
                    let tag = if w.excluded { "excluded" } else { "clamped" };
                    format!("{} {tag}: {}", w.evse_id, w.message)
                })
                .collect(),
            baseload_kw: result.baseload.clone(),
            total_load_kw: result.total_load.clone(),
            metrics: result.metrics,
            config: result.config,
        }
    }
}

pub fn read_report(path: &Path) -> Result<Report, DataError> {
    let text = read_text(path)?;
    toml::from_str(&text).map_err(|e| DataError::invalid(path, e.to_string()))
}

pub fn write_report(path: &Path, report: &Report) -> Result<(), DataError> {
    let text = toml::to_string(report).map_err(|e| DataError::invalid(path, e.to_string()))?;
    write_text(path, &text)
}

/// Paths of the three files written for a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub schedule: PathBuf,
    pub trace: PathBuf,
    pub report: PathBuf,
}

/// Writes schedule, trace and report into `out_dir`, creating it if needed.
pub fn write_artifacts(
    result: &ScheduleResult,
    warnings: &[FleetWarning],
    out_dir: &Path,
) -> Result<RunArtifacts, DataError> {
    fs::create_dir_all(out_dir).map_err(|e| DataError::io(out_dir, e))?;
    let artifacts = RunArtifacts {
        schedule: out_dir.join(SCHEDULE_FILE),
        trace: out_dir.join(TRACE_FILE),
        report: out_dir.join(REPORT_FILE),
    };
    write_schedule(&artifacts.schedule, &result.evse_ids, &result.profiles)?;
    write_trace(&artifacts.trace, &result.trace)?;
    write_report(&artifacts.report, &Report::new(result, warnings))?;
    Ok(artifacts)
}

pub fn write_schedule(path: &Path, evse_ids: &[String], profiles: &[Vec<f64>]) -> Result<(), DataError> {
    let slots = profiles.first().map_or(0, Vec::len);
    let mut out = String::from("slot");
    for id in evse_ids {
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    for t in 0..slots {
        out.push_str(&t.to_string());
        for p in profiles {
            out.push_str(&format!(",{}", p[t]));
        }
        out.push('\n');
    }
    write_text(path, &out)
}

/// Reads a schedule back as `(evse_ids, per-EVSE profiles)`.
pub fn read_schedule(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), DataError> {
    let text = read_text(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| DataError::csv(path, 0, e))?.clone();
    if header.get(0) != Some("slot") {
        return Err(DataError::invalid(path, "schedule header must start with `slot`"));
    }
    let ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut profiles = vec![Vec::new(); ids.len()];
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| DataError::csv(path, row, e))?;
        let slot: usize = parse_field(path, row, &record, 0, "slot")?;
        if slot != i {
            return Err(DataError::row(path, row, format!("slot {slot} out of order")));
        }
        for (n, profile) in profiles.iter_mut().enumerate() {
            profile.push(parse_field(path, row, &record, n + 1, &ids[n])?);
        }
    }
    Ok((ids, profiles))
}

pub fn write_trace(path: &Path, trace: &[IterationTrace]) -> Result<(), DataError> {
    let mut out = TRACE_HEADER.join(",");
    out.push('\n');
    for t in trace {
        let delta = t.control_delta.map(|d| d.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            t.iteration, delta, t.objective, t.peak_kw, t.signal_updated, t.profiles_updated
        ));
    }
    write_text(path, &out)
}

pub fn read_trace(path: &Path) -> Result<Vec<IterationTrace>, DataError> {
    let text = read_text(path)?;
    let rows = csv_rows(path, &text, &TRACE_HEADER)?;
    rows.iter()
        .enumerate()
        .map(|(i, record)| {
            let row = i + 1;
            let raw_delta = record.get(1).unwrap_or_default();
            let control_delta = if raw_delta.is_empty() {
                None
            } else {
                Some(parse_field(path, row, record, 1, "control_delta")?)
            };
            Ok(IterationTrace {
                iteration: parse_field(path, row, record, 0, "iteration")?,
                control_delta,
                objective: parse_field(path, row, record, 2, "objective")?,
                peak_kw: parse_field(path, row, record, 3, "peak_kw")?,
                signal_updated: parse_field(path, row, record, 4, "signal_updated")?,
                profiles_updated: parse_field(path, row, record, 5, "profiles_updated")?,
            })
        })
        .collect()
}
