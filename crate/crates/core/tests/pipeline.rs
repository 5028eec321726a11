//! End to end through the library: synthetic data, forecasts, schedule, files.

use v2g_core::io::{self, read_schedule, read_trace, write_artifacts};
use v2g_core::{forecast_all, generate, prepare_agents, run, BehaviorForecast, SynthParams};

fn forecasts(params: &SynthParams) -> (v2g_core::SynthInstance, Vec<BehaviorForecast>) {
    let inst = generate(params).unwrap();
    let fc = forecast_all(&inst.sessions)
        .into_iter()
        .map(|r| r.unwrap().forecast().clone())
        .collect();
    (inst, fc)
}

#[test]
fn synthetic_forecasts_are_consistent() {
    let (inst, fc) = forecasts(&SynthParams::new(7));
    assert_eq!(fc.len(), 30);
    for f in &fc {
        assert!(f.is_valid(), "{f:?}");
        assert!(f.theta > 0.0);
        assert_eq!(f.sample_count, 20);
        let expect = f.theta * (f.t_end_pred - f.t_start_pred) / 60.0;
        assert!((f.energy_pred_kwh - expect).abs() <= 1e-9 * expect.max(1.0));
        // Mean start/end lie inside the observed range for that user.
        let own: Vec<_> = inst.sessions.iter().filter(|s| s.user_id == f.user_id).collect();
        let lo = own.iter().map(|s| s.start_minutes()).fold(f64::MAX, f64::min);
        let hi = own.iter().map(|s| s.start_minutes()).fold(f64::MIN, f64::max);
        assert!(lo <= f.t_start_pred && f.t_start_pred <= hi);
    }
}

#[test]
fn full_run_writes_consistent_artifacts() {
    let (inst, fc) = forecasts(&SynthParams::new(1));
    let (agents, warnings) = prepare_agents(&inst.grid, &inst.fleet, &fc).unwrap();
    assert!(warnings.iter().all(|w| !w.excluded));
    let result = run(&inst.baseload, agents, &inst.grid, &inst.run).unwrap();
    assert!(result.converged);

    let dir = tempfile::tempdir().unwrap();
    let files = write_artifacts(&result, &warnings, dir.path()).unwrap();
    let (ids, profiles) = read_schedule(&files.schedule).unwrap();
    assert_eq!(ids.len(), 30);
    assert_eq!(profiles.len(), 30);
    assert!(profiles.iter().all(|p| p.len() == 60));
    let text = std::fs::read_to_string(&files.schedule).unwrap();
    assert_eq!(text.lines().count(), 61);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 31);

    let trace = read_trace(&files.trace).unwrap();
    assert_eq!(trace.len(), result.trace.len());
    let report = io::read_report(&files.report).unwrap();
    assert!(report.converged);
    assert_eq!(report.iterations, result.iterations);
    assert_eq!(report.total_load_kw.len(), 60);
}

#[test]
fn lags_and_sparse_updates_still_reach_the_same_load() {
    let (inst, fc) = forecasts(&SynthParams::new(3));
    let (agents, _) = prepare_agents(&inst.grid, &inst.fleet, &fc).unwrap();
    let sync = run(&inst.baseload, agents.clone(), &inst.grid, &inst.run).unwrap();

    let mut lagged = agents;
    for (i, a) in lagged.iter_mut().enumerate() {
        a.lag = (i % 3) as u32;
    }
    let cfg = v2g_core::RunConfig { u: 3, v: 2, ..inst.run };
    let slow = run(&inst.baseload, lagged, &inst.grid, &cfg).unwrap();
    assert!(sync.converged && slow.converged);
    let (a, b) = (sync.trace.last().unwrap().objective, slow.trace.last().unwrap().objective);
    assert!((a - b).abs() <= 5e-3 * a, "{a} vs {b}");
}
