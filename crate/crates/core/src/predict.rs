//! Per-user charging behavior forecasts.
//!
//! The plug-in window is the arithmetic mean of historical start and end
//! times (minutes since midnight). Energy demand comes from a least-squares
//! fit of energy against stay duration with no intercept, so the predicted
//! demand is `θ · (t_end − t_start)`.
//!
//! Every operation sorts its input first so that the result does not depend
//! on session order, including floating-point summation order.

use std::collections::BTreeMap;

use chrono::{NaiveDateTime, Timelike};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error("no sessions to predict from")]
    NoData,
    #[error("energy model is singular: every session has zero duration")]
    SingularModel,
    #[error("predicted window is not positive ({start_min} min -> {end_min} min)")]
    InvalidForecast { start_min: f64, end_min: f64 },
    #[error("invalid session: {0}")]
    InvalidSession(String),
    #[error("sessions belong to more than one user ({0:?} and {1:?})")]
    MixedUsers(String, String),
}

/// One historical charging session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub user_id: String,
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
    pub energy_kwh: f64,
}

impl SessionRecord {
    pub fn new(
        user_id: impl Into<String>,
        start: NaiveDateTime,
        end: NaiveDateTime,
        energy_kwh: f64,
    ) -> Result<Self, PredictError> {
        if end <= start {
            return Err(PredictError::InvalidSession(format!(
                "end {end} is not after start {start}"
            )));
        }
        if !(energy_kwh.is_finite() && energy_kwh >= 0.0) {
            return Err(PredictError::InvalidSession(format!(
                "energy {energy_kwh} kWh must be finite and non-negative"
            )));
        }
        Ok(Self {
            user_id: user_id.into(),
            start,
            end,
            energy_kwh,
        })
    }

    /// Stay duration in hours.
    pub fn stay_hours(&self) -> f64 {
        (self.end - self.start).num_milliseconds() as f64 / 3_600_000.0
    }

    pub fn start_minutes(&self) -> f64 {
        minutes_of_day(self.start)
    }

    pub fn end_minutes(&self) -> f64 {
        minutes_of_day(self.end)
    }

    pub fn spans_midnight(&self) -> bool {
        self.start.date() != self.end.date()
    }
}

pub fn minutes_of_day(t: NaiveDateTime) -> f64 {
    let time = t.time();
    f64::from(time.num_seconds_from_midnight()) / 60.0 + f64::from(time.nanosecond()) / 6.0e10
}

/// Predicted plug-in window and energy demand for one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorForecast {
    pub user_id: String,
    pub t_start_pred: f64,
    pub t_end_pred: f64,
    /// kWh per hour of stay.
    pub theta: f64,
    pub energy_pred_kwh: f64,
    pub sample_count: usize,
}

impl BehaviorForecast {
    /// Window in hours; non-positive for an invalid forecast.
    pub fn window_hours(&self) -> f64 {
        (self.t_end_pred - self.t_start_pred) / 60.0
    }

    pub fn is_valid(&self) -> bool {
        self.t_end_pred > self.t_start_pred && self.theta >= 0.0
    }
}

/// Outcome of [`forecast_user`]: invalid forecasts are kept so callers can
/// report them, but are never handed to the scheduler.
#[derive(Debug, Clone, PartialEq)]
pub enum ForecastOutcome {
    Valid(BehaviorForecast),
    Invalid {
        forecast: BehaviorForecast,
        reason: PredictError,
    },
}

impl ForecastOutcome {
    pub fn forecast(&self) -> &BehaviorForecast {
        match self {
            ForecastOutcome::Valid(f) => f,
            ForecastOutcome::Invalid { forecast, .. } => forecast,
        }
    }

    pub fn valid(&self) -> Option<&BehaviorForecast> {
        match self {
            ForecastOutcome::Valid(f) => Some(f),
            ForecastOutcome::Invalid { .. } => None,
        }
    }
}

fn sorted_sum(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs.iter().sum()
}

/// Mean start and end time in minutes since midnight.
pub fn predict_window(sessions: &[SessionRecord]) -> Result<(f64, f64), PredictError> {
    if sessions.is_empty() {
        return Err(PredictError::NoData);
    }
    let m = sessions.len() as f64;
    let start = sorted_sum(sessions.iter().map(SessionRecord::start_minutes).collect()) / m;
    let end = sorted_sum(sessions.iter().map(SessionRecord::end_minutes).collect()) / m;
    Ok((start, end))
}

/// Least-squares slope through the origin of energy (kWh) on stay duration (h).
///
/// Solved from the normal equations `(XᵀX) θ = Xᵀy` with `X` the column of
/// durations.
pub fn fit_energy_model(sessions: &[SessionRecord]) -> Result<f64, PredictError> {
    if sessions.is_empty() {
        return Err(PredictError::NoData);
    }
    let mut samples: Vec<(f64, f64)> = sessions
        .iter()
        .map(|s| (s.stay_hours(), s.energy_kwh))
        .collect();
    samples.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let durations: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let energies: Vec<f64> = samples.iter().map(|s| s.1).collect();
    fit_through_origin(&durations, &energies)
}

/// Normal-equation fit on raw `(duration, energy)` columns.
pub fn fit_through_origin(durations_h: &[f64], energies_kwh: &[f64]) -> Result<f64, PredictError> {
    if durations_h.is_empty() || durations_h.len() != energies_kwh.len() {
        return Err(PredictError::NoData);
    }
    let x = DMatrix::from_column_slice(durations_h.len(), 1, durations_h);
    let y = DMatrix::from_column_slice(energies_kwh.len(), 1, energies_kwh);
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * y;
    if xtx[(0, 0)] == 0.0 {
        return Err(PredictError::SingularModel);
    }
    let theta = xtx.lu().solve(&xty).ok_or(PredictError::SingularModel)?;
    Ok(theta[(0, 0)])
}

/// `θ · (t_end − t_start)` with the window converted to hours.
pub fn predict_energy(theta: f64, t_start_pred: f64, t_end_pred: f64) -> Result<f64, PredictError> {
    if t_end_pred <= t_start_pred {
        return Err(PredictError::InvalidForecast {
            start_min: t_start_pred,
            end_min: t_end_pred,
        });
    }
    Ok(theta * (t_end_pred - t_start_pred) / 60.0)
}

/// Full forecast for one user's sessions.
pub fn forecast_user(sessions: &[SessionRecord]) -> Result<ForecastOutcome, PredictError> {
    let first = sessions.first().ok_or(PredictError::NoData)?;
    if let Some(other) = sessions.iter().find(|s| s.user_id != first.user_id) {
        return Err(PredictError::MixedUsers(
            first.user_id.clone(),
            other.user_id.clone(),
        ));
    }
    let (t_start_pred, t_end_pred) = predict_window(sessions)?;
    let theta = fit_energy_model(sessions)?;
    let mut forecast = BehaviorForecast {
        user_id: first.user_id.clone(),
        t_start_pred,
        t_end_pred,
        theta,
        energy_pred_kwh: 0.0,
        sample_count: sessions.len(),
    };
    match predict_energy(theta, t_start_pred, t_end_pred) {
        Ok(energy) => {
            forecast.energy_pred_kwh = energy;
            Ok(ForecastOutcome::Valid(forecast))
        }
        Err(reason) => Ok(ForecastOutcome::Invalid { forecast, reason }),
    }
}

/// Groups sessions by user (sorted by id) and forecasts each group.
pub fn forecast_all(sessions: &[SessionRecord]) -> Vec<Result<ForecastOutcome, PredictError>> {
    let mut by_user: BTreeMap<&str, Vec<SessionRecord>> = BTreeMap::new();
    for s in sessions {
        by_user.entry(&s.user_id).or_default().push(s.clone());
    }
    by_user.values().map(|group| forecast_user(group)).collect()
}
