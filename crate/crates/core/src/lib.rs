//! Distributed bi-directional EV charging scheduler.
//!
//! A coordinator broadcasts a control signal proportional to the total load
//! (baseload plus every EV's charging profile). Each EVSE answers with a
//! proximal step onto its own feasible set: rate limits inside the predicted
//! plug-in window, zero outside, and a fixed energy delivery. Iterating the
//! two flattens the total load, charging in valleys and discharging (V2G)
//! into peaks.
//!
//! Modules:
//! - [`time`]: horizon grid, per-slot vectors, rate bounds from a window
//! - [`predict`]: per-user window and energy forecasts from session history
//! - [`solver`]: the per-EVSE local problem
//! - [`coordinator`]: the iterative loop, delayed updates, metrics
//! - [`io`]: file formats
//! - [`synth`]: seeded synthetic scenarios

pub mod coordinator;
pub mod io;
pub mod predict;
pub mod solver;
pub mod synth;
pub mod time;

pub use coordinator::{
    clamp_demand, compute_metrics, flatness_objective, prepare_agents, run, run_observed,
    update_control_signal, ClampedDemand, EvseAgentState, FleetWarning, IterationTrace, Metrics,
    Norm, Publication, RunConfig, RunError, ScheduleResult,
};
pub use io::{DataError, EvseSpec, GridSpec, Report, RunArtifacts};
pub use predict::{
    fit_energy_model, forecast_all, forecast_user, predict_energy, predict_window,
    BehaviorForecast, ForecastOutcome, PredictError, SessionRecord,
};
pub use solver::{local_objective, local_solve, LocalProblem, LocalSolution, SolveError};
pub use synth::{generate, SynthInstance, SynthParams};
pub use time::{build_bounds, slot_midpoint, RateBounds, SlotVector, TimeError, TimeGrid, Window};
