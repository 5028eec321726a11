//! Coordinator loop: broadcast the load-derived control signal, collect local
//! solutions, and iterate until the signal stops moving.
//!
//! Each iteration `i`:
//!
//! 1. every agent solves its local problem against the signal generation it
//!    can see (the latest one, delayed by its `lag`) and its published profile;
//! 2. when `i mod v == 0` every agent publishes its candidate;
//! 3. when `i mod u == 0` the center recomputes `c = (B + Σ p) / (λN)` from the
//!    published profiles and records `‖c_new − c_old‖`.
//!
//! The run converges on a signal update that follows at least one publication
//! since the previous signal update and moves the signal by at most `ε`. On
//! iterations without fresh publications the signal cannot move, so a zero
//! delta there says nothing about convergence.

use std::collections::VecDeque;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::EvseSpec;
use crate::predict::BehaviorForecast;
use crate::solver::{local_solve, LocalProblem, SolveError};
use crate::time::{build_bounds, RateBounds, SlotVector, TimeError, TimeGrid, Window};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("no agents left to schedule")]
    NoAgents,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error("local solve failed for EVSE {evse_id}: {source}")]
    Solve {
        evse_id: String,
        #[source]
        source: SolveError,
    },
    #[error(transparent)]
    Time(#[from] TimeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    L2,
    Linf,
}

impl Norm {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
        match self {
            Norm::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
            Norm::Linf => diffs.fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "defaults::lambda")]
    pub lambda: f64,
    #[serde(default = "defaults::epsilon")]
    pub epsilon: f64,
    /// Control signal is recomputed on iterations divisible by `u`.
    #[serde(default = "defaults::one")]
    pub u: u32,
    /// Profiles are published on iterations divisible by `v`.
    #[serde(default = "defaults::one")]
    pub v: u32,
    #[serde(default = "defaults::max_iters")]
    pub max_iters: u32,
    #[serde(default)]
    pub norm: Norm,
}

mod defaults {
    pub fn lambda() -> f64 {
        2.0
    }
    pub fn epsilon() -> f64 {
        1e-3
    }
    pub fn one() -> u32 {
        1
    }
    pub fn max_iters() -> u32 {
        1000
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            lambda: defaults::lambda(),
            epsilon: defaults::epsilon(),
            u: 1,
            v: 1,
            max_iters: defaults::max_iters(),
            norm: Norm::L2,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(RunError::InvalidConfig(format!("lambda = {} must be > 0", self.lambda)));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(RunError::InvalidConfig(format!("epsilon = {} must be > 0", self.epsilon)));
        }
        if self.u == 0 || self.v == 0 || self.max_iters == 0 {
            return Err(RunError::InvalidConfig("u, v and max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// One EVSE as the coordinator sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct EvseAgentState {
    pub evse_id: String,
    pub user_id: String,
    pub bounds: RateBounds,
    /// Demand after clamping to the window's capacity.
    pub energy_kwh: f64,
    pub published_profile: Vec<f64>,
    pub candidate_profile: Vec<f64>,
    /// Staleness in control-signal generations.
    pub lag: u32,
}

impl EvseAgentState {
    pub fn new(
        evse_id: impl Into<String>,
        user_id: impl Into<String>,
        bounds: RateBounds,
        energy_kwh: f64,
        lag: u32,
    ) -> Self {
        let n = bounds.len();
        Self {
            evse_id: evse_id.into(),
            user_id: user_id.into(),
            bounds,
            energy_kwh,
            published_profile: vec![0.0; n],
            candidate_profile: vec![0.0; n],
            lag,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration: u32,
    /// Present only on iterations where the signal was recomputed.
    pub control_delta: Option<f64>,
    pub objective: f64,
    pub peak_kw: f64,
    pub signal_updated: bool,
    pub profiles_updated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub peak_before_kw: f64,
    pub peak_after_kw: f64,
    pub variance_before: f64,
    pub variance_after: f64,
    /// `(peak_before − peak_after) / peak_before`.
    pub peak_reduction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleResult {
    pub evse_ids: Vec<String>,
    pub profiles: Vec<Vec<f64>>,
    pub baseload: Vec<f64>,
    pub total_load: Vec<f64>,
    pub converged: bool,
    pub iterations: u32,
    pub trace: Vec<IterationTrace>,
    pub metrics: Metrics,
    pub config: RunConfig,
    pub dt_hours: f64,
}

/// Snapshot handed to a run observer right after profiles are published.
#[derive(Debug, Clone, Copy)]
pub struct Publication<'a> {
    pub iteration: u32,
    pub agents: &'a [EvseAgentState],
    pub dt_hours: f64,
}

/// Demand accepted for scheduling, possibly after clamping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClampedDemand {
    Accepted(f64),
    Clamped { requested: f64, energy_kwh: f64 },
    /// The window covers no slot.
    Excluded,
}

impl ClampedDemand {
    pub fn energy(&self) -> Option<f64> {
        match *self {
            ClampedDemand::Accepted(e) => Some(e),
            ClampedDemand::Clamped { energy_kwh, .. } => Some(energy_kwh),
            ClampedDemand::Excluded => None,
        }
    }
}

/// Clamps predicted demand into `[max(0, Σ lower·ΔT), Σ upper·ΔT]`.
pub fn clamp_demand(forecast: &BehaviorForecast, bounds: &RateBounds, dt_hours: f64) -> ClampedDemand {
    if bounds.available_count() == 0 {
        return ClampedDemand::Excluded;
    }
    let (min_kwh, max_kwh) = bounds.energy_capacity(dt_hours);
    let requested = forecast.energy_pred_kwh;
    let energy = requested.clamp(min_kwh.max(0.0), max_kwh);
    if energy == requested {
        ClampedDemand::Accepted(energy)
    } else {
        ClampedDemand::Clamped {
            requested,
            energy_kwh: energy,
        }
    }
}

/// `c(t) = (B(t) + Σ_n p_n(t)) / (λN)`.
pub fn update_control_signal<'a, I>(
    baseload: &[f64],
    published_profiles: I,
    lambda: f64,
    n_total: usize,
) -> Result<SlotVector, RunError>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    if n_total == 0 {
        return Err(RunError::NoAgents);
    }
    let total = total_load(baseload, published_profiles)?;
    let scale = 1.0 / (lambda * n_total as f64);
    Ok(SlotVector::new(total.into_iter().map(|x| x * scale).collect())?)
}

/// `B(t) + Σ_n p_n(t)`, summed in profile order.
pub fn total_load<'a, I>(baseload: &[f64], profiles: I) -> Result<Vec<f64>, RunError>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut total = baseload.to_vec();
    for (n, p) in profiles.into_iter().enumerate() {
        if p.len() != total.len() {
            return Err(RunError::Dimension(format!(
                "profile {n} has {} slots, baseload has {}",
                p.len(),
                total.len()
            )));
        }
        for (acc, x) in total.iter_mut().zip(p) {
            *acc += x;
        }
    }
    Ok(total)
}

/// `Σ_t (B(t) + Σ_n p_n(t))²`.
pub fn flatness_objective<'a, I>(baseload: &[f64], profiles: I) -> Result<f64, RunError>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    Ok(total_load(baseload, profiles)?.iter().map(|x| x * x).sum())
}

fn variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Peak and population variance of the baseload and of the total load.
pub fn metrics_from_total(baseload: &[f64], total: &[f64]) -> Metrics {
    let peak = |xs: &[f64]| xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let peak_before_kw = peak(baseload);
    let peak_after_kw = peak(total);
    let peak_reduction = if peak_before_kw != 0.0 {
        (peak_before_kw - peak_after_kw) / peak_before_kw
    } else {
        0.0
    };
    Metrics {
        peak_before_kw,
        peak_after_kw,
        variance_before: variance(baseload),
        variance_after: variance(total),
        peak_reduction,
    }
}

pub fn compute_metrics<'a, I>(baseload: &[f64], profiles: I) -> Result<Metrics, RunError>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let total = total_load(baseload, profiles)?;
    Ok(metrics_from_total(baseload, &total))
}

/// Why an EVSE was left out of the run, or why its demand changed.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetWarning {
    pub evse_id: String,
    pub message: String,
    pub excluded: bool,
}

/// Turns fleet entries and forecasts into agents, excluding EVSEs that have
/// no usable forecast or whose window covers no slot.
pub fn prepare_agents(
    grid: &TimeGrid,
    fleet: &[EvseSpec],
    forecasts: &[BehaviorForecast],
) -> Result<(Vec<EvseAgentState>, Vec<FleetWarning>), RunError> {
    let dt = grid.dt_hours();
    let mut agents = Vec::new();
    let mut warnings = Vec::new();
    let mut exclude = |spec: &EvseSpec, message: String| {
        warn!("excluding EVSE {}: {message}", spec.evse_id);
        warnings.push(FleetWarning {
            evse_id: spec.evse_id.clone(),
            message,
            excluded: true,
        });
    };
    let mut clamp_notes = Vec::new();
    for spec in fleet {
        let Some(forecast) = forecasts.iter().find(|f| f.user_id == spec.user_id) else {
            exclude(spec, format!("no forecast for user {}", spec.user_id));
            continue;
        };
        if !forecast.is_valid() {
            exclude(spec, format!("forecast for user {} is invalid", spec.user_id));
            continue;
        }
        let window = Window::new(
            grid.at_minutes_of_day(forecast.t_start_pred),
            grid.at_minutes_of_day(forecast.t_end_pred),
        );
        let bounds = build_bounds(grid, window, spec.p_max_kw, spec.d_max_kw)?;
        let energy = match clamp_demand(forecast, &bounds, dt) {
            ClampedDemand::Excluded => {
                exclude(spec, "plug-in window covers no slot of the horizon".into());
                continue;
            }
            ClampedDemand::Accepted(e) => e,
            ClampedDemand::Clamped { requested, energy_kwh } => {
                let message = format!("demand {requested} kWh clamped to {energy_kwh} kWh");
                warn!("EVSE {}: {message}", spec.evse_id);
                clamp_notes.push(FleetWarning {
                    evse_id: spec.evse_id.clone(),
                    message,
                    excluded: false,
                });
                energy_kwh
            }
        };
        agents.push(EvseAgentState::new(
            spec.evse_id.clone(),
            spec.user_id.clone(),
            bounds,
            energy,
            spec.lag,
        ));
    }
    warnings.extend(clamp_notes);
    Ok((agents, warnings))
}

/// Runs the coordinator loop to convergence or `max_iters`.
pub fn run(
    baseload: &[f64],
    agents: Vec<EvseAgentState>,
    grid: &TimeGrid,
    config: &RunConfig,
) -> Result<ScheduleResult, RunError> {
    run_observed(baseload, agents, grid, config, |_| {})
}

/// [`run`] with a callback invoked after every profile publication.
pub fn run_observed<F>(
    baseload: &[f64],
    mut agents: Vec<EvseAgentState>,
    grid: &TimeGrid,
    config: &RunConfig,
    mut observer: F,
) -> Result<ScheduleResult, RunError>
where
    F: FnMut(&Publication<'_>),
{
    config.validate()?;
    if agents.is_empty() {
        return Err(RunError::NoAgents);
    }
    let slots = grid.slot_count();
    if baseload.len() != slots {
        return Err(RunError::Dimension(format!(
            "baseload has {} slots, grid has {slots}",
            baseload.len()
        )));
    }
    if let Some(a) = agents.iter().find(|a| a.bounds.len() != slots || a.published_profile.len() != slots) {
        return Err(RunError::Dimension(format!(
            "EVSE {} has {} slots, grid has {slots}",
            a.evse_id,
            a.bounds.len()
        )));
    }
    agents.sort_by(|a, b| a.evse_id.cmp(&b.evse_id));

    let dt = grid.dt_hours();
    let n_total = agents.len();
    let max_lag = agents.iter().map(|a| a.lag as usize).max().unwrap_or(0);

    let signal = |agents: &[EvseAgentState]| {
        update_control_signal(
            baseload,
            agents.iter().map(|a| a.published_profile.as_slice()),
            config.lambda,
            n_total,
        )
        .map(SlotVector::into_inner)
    };
    // Most recent generation at the back.
    let mut generations: VecDeque<Vec<f64>> = VecDeque::with_capacity(max_lag + 1);
    generations.push_back(signal(&agents)?);

    let mut trace = Vec::new();
    let mut converged = false;
    let mut published_since_update = false;
    let mut iterations = 0;

    for i in 0..config.max_iters {
        iterations = i + 1;

        let gens = &generations;
        let candidates: Vec<Result<Vec<f64>, RunError>> = agents
            .par_iter()
            .map(|agent| {
                let latest = gens.len() - 1;
                let visible = &gens[latest - (agent.lag as usize).min(latest)];
                local_solve(&LocalProblem {
                    control: visible,
                    prev_profile: &agent.published_profile,
                    bounds: &agent.bounds,
                    energy_kwh: agent.energy_kwh,
                    dt_hours: dt,
                })
                .map(|s| s.profile)
                .map_err(|source| RunError::Solve {
                    evse_id: agent.evse_id.clone(),
                    source,
                })
            })
            .collect();
        for (agent, candidate) in agents.iter_mut().zip(candidates) {
            agent.candidate_profile = candidate?;
        }

        let profiles_updated = i % config.v == 0;
        if profiles_updated {
            for agent in agents.iter_mut() {
                agent.published_profile.clone_from(&agent.candidate_profile);
            }
            published_since_update = true;
            observer(&Publication {
                iteration: i,
                agents: &agents,
                dt_hours: dt,
            });
        }

        let signal_updated = i % config.u == 0;
        let mut control_delta = None;
        if signal_updated {
            let next = signal(&agents)?;
            let delta = config.norm.distance(&next, generations.back().expect("non-empty"));
            control_delta = Some(delta);
            if published_since_update && delta <= config.epsilon {
                converged = true;
            }
            published_since_update = false;
            generations.push_back(next);
            while generations.len() > max_lag + 1 {
                generations.pop_front();
            }
        }

        let total = total_load(baseload, agents.iter().map(|a| a.published_profile.as_slice()))?;
        trace.push(IterationTrace {
            iteration: i,
            control_delta,
            objective: total.iter().map(|x| x * x).sum(),
            peak_kw: total.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            signal_updated,
            profiles_updated,
        });

        if converged {
            break;
        }
    }

    let total = total_load(baseload, agents.iter().map(|a| a.published_profile.as_slice()))?;
    let metrics = metrics_from_total(baseload, &total);
    Ok(ScheduleResult {
        evse_ids: agents.iter().map(|a| a.evse_id.clone()).collect(),
        profiles: agents.into_iter().map(|a| a.published_profile).collect(),
        baseload: baseload.to_vec(),
        total_load: total,
        converged,
        iterations,
        trace,
        metrics,
        config: *config,
        dt_hours: dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn grid(t: usize, minutes: u32) -> TimeGrid {
        let start = NaiveDate::from_ymd_opt(2016, 9, 20).unwrap().and_hms_opt(7, 0, 0).unwrap();
        TimeGrid::new(start, t, minutes).unwrap()
    }

    fn forecast(energy: f64) -> BehaviorForecast {
        BehaviorForecast {
            user_id: "u".into(),
            t_start_pred: 420.0,
            t_end_pred: 1140.0,
            theta: energy / 12.0,
            energy_pred_kwh: energy,
            sample_count: 1,
        }
    }

    fn slices(ps: &[Vec<f64>]) -> impl Iterator<Item = &[f64]> {
        ps.iter().map(Vec::as_slice)
    }

    #[test]
    fn control_signal_examples() {
        let c = update_control_signal(&[100.0; 3], slices(&[vec![0.0; 3]]), 2.0, 10).unwrap();
        assert_eq!(c.as_slice(), &[5.0; 3]);
        let c = update_control_signal(&[0.0; 2], slices(&[vec![7.0; 2]]), 1.0, 1).unwrap();
        assert_eq!(c.as_slice(), &[7.0; 2]);
        let c = update_control_signal(&[100.0, 120.0], slices(&[vec![20.0, -20.0]]), 2.0, 10).unwrap();
        assert_eq!(c.as_slice(), &[6.0, 5.0]);
        assert!(matches!(
            update_control_signal(&[1.0], slices(&[]), 2.0, 0),
            Err(RunError::NoAgents)
        ));
        assert!(matches!(
            update_control_signal(&[1.0], slices(&[vec![1.0, 2.0]]), 2.0, 1),
            Err(RunError::Dimension(_))
        ));
    }

    #[test]
    fn flatness_examples() {
        assert_eq!(flatness_objective(&[1.0, 2.0], slices(&[vec![1.0, 0.0]])).unwrap(), 8.0);
        assert_eq!(flatness_objective(&[0.0, 0.0], slices(&[vec![0.0, 0.0]])).unwrap(), 0.0);
        assert_eq!(flatness_objective(&[3.0; 5], slices(&[])).unwrap(), 45.0);
        // Mean-preserving deviation from flat strictly increases it.
        assert!(flatness_objective(&[3.5, 2.5, 3.0, 3.0, 3.0], slices(&[])).unwrap() > 45.0);
        assert!(flatness_objective(&[1.0], slices(&[vec![1.0, 0.0]])).is_err());
    }

    #[test]
    fn metrics_examples() {
        let m = compute_metrics(&[140.0, 60.0], slices(&[vec![0.0, 0.0]])).unwrap();
        assert_eq!(m.peak_reduction, 0.0);
        assert_eq!(m.variance_before, m.variance_after);
        let m = compute_metrics(&[140.0, 60.0], slices(&[vec![-50.0, 50.0]])).unwrap();
        assert_eq!(m.peak_after_kw, 110.0);
        let m = metrics_from_total(&[140.0, 60.0], &[90.0, 85.0]);
        assert_eq!(m.peak_reduction, 50.0 / 140.0);
        // Peak after is the maximum of the total load, wherever it falls.
        let m = metrics_from_total(&[140.0, 60.0], &[90.0, 110.0]);
        assert_eq!(m.peak_after_kw, 110.0);
        let m = metrics_from_total(&[140.0, 60.0], &[100.0, 100.0]);
        assert_eq!(m.variance_after, 0.0);
        assert_eq!(m.variance_before, 1600.0);
    }

    #[test]
    fn clamp_examples() {
        let g = grid(60, 12);
        // 15 slots at [-40, 33] kW over 0.2 h gives [-120, 99] kWh.
        let b = RateBounds::from_mask((0..60).map(|k| (10..25).contains(&k)).collect(), 33.0, -40.0).unwrap();
        assert_eq!(b.energy_capacity(g.dt_hours()), (-120.0, 99.0));
        assert_eq!(clamp_demand(&forecast(16.0), &b, g.dt_hours()), ClampedDemand::Accepted(16.0));
        assert_eq!(
            clamp_demand(&forecast(120.0), &b, g.dt_hours()),
            ClampedDemand::Clamped {
                requested: 120.0,
                energy_kwh: 99.0
            }
        );
        let empty = RateBounds::from_mask(vec![false; 60], 33.0, -40.0).unwrap();
        assert_eq!(clamp_demand(&forecast(16.0), &empty, g.dt_hours()), ClampedDemand::Excluded);
    }

    #[test]
    fn single_ev_fills_uniformly() {
        let g = grid(60, 12);
        let b = RateBounds::from_mask(vec![true; 60], 6.6, -6.6).unwrap();
        let agent = EvseAgentState::new("e1", "u", b, 12.0, 0);
        let r = run(&[0.0; 60], vec![agent], &g, &RunConfig::default()).unwrap();
        assert!(r.converged);
        for &p in &r.profiles[0] {
            assert!((p - 1.0).abs() < 1e-9, "{p}");
        }
    }

    #[test]
    fn trace_semantics_under_delays() {
        let g = grid(8, 60);
        let mask = vec![true; 8];
        let agents = vec![
            EvseAgentState::new("a", "u1", RateBounds::from_mask(mask.clone(), 5.0, -5.0).unwrap(), 10.0, 1),
            EvseAgentState::new("b", "u2", RateBounds::from_mask(mask, 5.0, -5.0).unwrap(), 6.0, 2),
        ];
        let base = [10.0, 14.0, 20.0, 18.0, 9.0, 4.0, 6.0, 8.0];
        let cfg = RunConfig { u: 3, v: 2, ..RunConfig::default() };
        let r = run(&base, agents, &g, &cfg).unwrap();
        assert!(r.converged);
        for t in &r.trace {
            assert_eq!(t.control_delta.is_some(), t.signal_updated);
            assert_eq!(t.signal_updated, t.iteration % 3 == 0);
            assert_eq!(t.profiles_updated, t.iteration % 2 == 0);
        }
        let last = r.trace.last().unwrap();
        assert!(last.signal_updated && last.control_delta.unwrap() <= cfg.epsilon);
    }

    #[test]
    fn stale_zero_delta_is_not_convergence() {
        // Publications every fourth iteration, signal every iteration: the
        // intermediate updates see identical profiles and a zero delta.
        let g = grid(4, 60);
        let agents = vec![EvseAgentState::new(
            "a",
            "u",
            RateBounds::from_mask(vec![true; 4], 10.0, -10.0).unwrap(),
            8.0,
            0,
        )];
        let cfg = RunConfig { u: 1, v: 4, ..RunConfig::default() };
        let r = run(&[30.0, 10.0, 20.0, 5.0], agents, &g, &cfg).unwrap();
        assert!(r.converged);
        assert!(r.trace.iter().any(|t| t.control_delta == Some(0.0)));
        assert!(r.trace.last().unwrap().profiles_updated || r.trace.len() > 1);
        let idx = r.trace.iter().position(|t| t.control_delta == Some(0.0)).unwrap();
        assert!(idx + 1 < r.trace.len(), "stopped on a stale zero delta");
    }

    #[test]
    fn max_iters_exhaustion() {
        let g = grid(4, 60);
        let agents = vec![EvseAgentState::new(
            "a",
            "u",
            RateBounds::from_mask(vec![true; 4], 10.0, -10.0).unwrap(),
            8.0,
            0,
        )];
        let cfg = RunConfig { epsilon: 1e-12, max_iters: 2, ..RunConfig::default() };
        let r = run(&[30.0, 10.0, 20.0, 5.0], agents, &g, &cfg).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 2);
    }

    #[test]
    fn run_rejects_bad_inputs() {
        let g = grid(4, 60);
        let agent = EvseAgentState::new("a", "u", RateBounds::from_mask(vec![true; 4], 10.0, -10.0).unwrap(), 8.0, 0);
        assert!(matches!(run(&[1.0; 3], vec![agent.clone()], &g, &RunConfig::default()), Err(RunError::Dimension(_))));
        assert!(matches!(run(&[1.0; 4], vec![], &g, &RunConfig::default()), Err(RunError::NoAgents)));
        let cfg = RunConfig { lambda: 0.0, ..RunConfig::default() };
        assert!(matches!(run(&[1.0; 4], vec![agent.clone()], &g, &cfg), Err(RunError::InvalidConfig(_))));
        let mut greedy = agent;
        greedy.energy_kwh = 100.0;
        assert!(matches!(
            run(&[1.0; 4], vec![greedy], &g, &RunConfig::default()),
            Err(RunError::Solve { source: SolveError::InfeasibleDemand { .. }, .. })
        ));
    }

    #[test]
    fn prepare_excludes_and_clamps() {
        let g = grid(60, 12);
        let fleet = vec![
            EvseSpec { evse_id: "e1".into(), user_id: "u".into(), p_max_kw: 6.6, d_max_kw: -6.6, lag: 0 },
            EvseSpec { evse_id: "e2".into(), user_id: "ghost".into(), p_max_kw: 6.6, d_max_kw: -6.6, lag: 0 },
            EvseSpec { evse_id: "e3".into(), user_id: "night".into(), p_max_kw: 6.6, d_max_kw: -6.6, lag: 0 },
            EvseSpec { evse_id: "e4".into(), user_id: "big".into(), p_max_kw: 1.0, d_max_kw: 0.0, lag: 1 },
        ];
        let mut night = forecast(5.0);
        night.user_id = "night".into();
        night.t_start_pred = 60.0;
        night.t_end_pred = 300.0;
        let mut big = forecast(50.0);
        big.user_id = "big".into();
        let (agents, warnings) = prepare_agents(&g, &fleet, &[forecast(10.0), night, big]).unwrap();
        assert_eq!(agents.iter().map(|a| a.evse_id.as_str()).collect::<Vec<_>>(), ["e1", "e4"]);
        assert_eq!(agents[1].energy_kwh, 12.0);
        assert_eq!(agents[1].lag, 1);
        assert_eq!(warnings.iter().filter(|w| w.excluded).count(), 2);
        assert_eq!(warnings.iter().filter(|w| !w.excluded).count(), 1);
    }
}
