//! Seeded random scheduling instances for integration tests.

#![allow(dead_code)]

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use v2g_core::{EvseAgentState, RateBounds, TimeGrid};

use super::oracle::OracleEv;

pub struct Instance {
    pub grid: TimeGrid,
    pub baseload: Vec<f64>,
    pub agents: Vec<EvseAgentState>,
}

impl Instance {
    pub fn oracle_evs(&self) -> Vec<OracleEv> {
        self.agents
            .iter()
            .map(|a| OracleEv {
                lower: a.bounds.lower().as_slice().to_vec(),
                upper: a.bounds.upper().as_slice().to_vec(),
                energy_kwh: a.energy_kwh,
            })
            .collect()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Up to `max_n` EVs over `2..=max_t` slots, each with a contiguous
/// availability window and a feasible, non-negative demand.
pub fn random_instance(rng: &mut ChaCha8Rng, max_n: usize, max_t: usize) -> Instance {
    let n = rng.random_range(1..=max_n);
    let t = rng.random_range(2..=max_t);
    let slot_minutes = if rng.random_bool(0.5) { 60 } else { 30 };
    let start = NaiveDate::from_ymd_opt(2024, 3, 4).unwrap().and_hms_opt(8, 0, 0).unwrap();
    let grid = TimeGrid::new(start, t, slot_minutes).unwrap();
    let dt = grid.dt_hours();
    let baseload: Vec<f64> = (0..t).map(|_| rng.random_range(20.0..60.0)).collect();
    let agents = (0..n)
        .map(|i| {
            let a = rng.random_range(0..t);
            let b = rng.random_range(a..t);
            let mask: Vec<bool> = (0..t).map(|k| k >= a && k <= b).collect();
            let p_max = rng.random_range(1.0..8.0);
            let d_max = if rng.random_bool(0.3) { 0.0 } else { -rng.random_range(0.5..8.0) };
            let bounds = RateBounds::from_mask(mask, p_max, d_max).unwrap();
            let (lo, hi) = bounds.energy_capacity(dt);
            let energy = lo.max(0.0) + rng.random_range(0.0..=1.0) * (hi - lo.max(0.0));
            EvseAgentState::new(format!("evse-{i}"), format!("user-{i}"), bounds, energy, 0)
        })
        .collect();
    Instance { grid, baseload, agents }
}
