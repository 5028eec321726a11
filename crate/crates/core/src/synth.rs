//! Seeded synthetic scenarios: a baseload with one peak and one valley, a
//! daytime session history per user, and a matching fleet.
//!
//! Output is a pure function of [`SynthParams`]; the RNG is ChaCha8 so the
//! stream is stable across platforms.

use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::coordinator::RunConfig;
use crate::io::{self, DataError, EvseSpec, GridSpec, ScenarioFile};
use crate::predict::SessionRecord;
use crate::time::TimeGrid;

pub const BASELOAD_FILE: &str = "baseload.csv";
pub const SESSIONS_FILE: &str = "sessions.csv";
pub const FLEET_FILE: &str = "fleet.toml";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub seed: u64,
    pub n_users: usize,
    pub t_slots: usize,
    pub slot_minutes: u32,
    pub horizon_start: NaiveDateTime,
    pub base_kw: f64,
    pub peak_kw: f64,
    pub valley_kw: f64,
    /// Inclusive slot range of the peak.
    pub peak_slots: (usize, usize),
    /// Inclusive slot range of the valley.
    pub valley_slots: (usize, usize),
    /// Half-width of the uniform noise added to every baseload slot.
    pub noise_kw: f64,
    pub sessions_per_user: usize,
    pub p_max_kw: f64,
    pub d_max_kw: f64,
}

impl SynthParams {
    /// Default scale: 60 twelve-minute slots from 07:00, 30 users.
    pub fn new(seed: u64) -> Self {
        Self::with_shape(seed, 30, 60)
    }

    /// Defaults with peak and valley positions scaled to `t_slots`.
    pub fn with_shape(seed: u64, n_users: usize, t_slots: usize) -> Self {
        let scale = |k: usize| (k * t_slots) / 60;
        Self {
            seed,
            n_users,
            t_slots,
            slot_minutes: 12,
            horizon_start: NaiveDate::from_ymd_opt(2016, 9, 20)
                .expect("valid date")
                .and_hms_opt(7, 0, 0)
                .expect("valid time"),
            base_kw: 100.0,
            peak_kw: 140.0,
            valley_kw: 60.0,
            peak_slots: (scale(16), scale(26)),
            valley_slots: (scale(32), scale(49)),
            noise_kw: 2.0,
            sessions_per_user: 20,
            p_max_kw: 6.6,
            d_max_kw: -6.6,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidParams(m.to_string()));
        if self.n_users == 0 {
            return bad("n_users must be >= 1");
        }
        if self.t_slots == 0 || self.slot_minutes == 0 {
            return bad("t_slots and slot_minutes must be >= 1");
        }
        if self.sessions_per_user == 0 {
            return bad("sessions_per_user must be >= 1");
        }
        let horizon_min = self.t_slots as i64 * i64::from(self.slot_minutes);
        let start_of_day = self.horizon_start - self.horizon_start.date().and_time(NaiveTime::MIN);
        if start_of_day.num_minutes() + horizon_min > 24 * 60 {
            return bad("horizon must end on the day it starts");
        }
        for (name, (a, b)) in [("peak", self.peak_slots), ("valley", self.valley_slots)] {
            if a > b || b >= self.t_slots {
                return Err(SynthError::InvalidParams(format!(
                    "{name} slots {a}..={b} must lie within 0..{}",
                    self.t_slots
                )));
            }
        }
        let finite = [self.base_kw, self.peak_kw, self.valley_kw, self.noise_kw, self.p_max_kw, self.d_max_kw];
        if finite.iter().any(|v| !v.is_finite()) || self.noise_kw < 0.0 {
            return bad("load levels must be finite and noise non-negative");
        }
        if self.p_max_kw < 0.0 || self.d_max_kw > 0.0 {
            return bad("p_max_kw must be >= 0 and d_max_kw <= 0");
        }
        Ok(())
    }
}

/// A generated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthInstance {
    pub grid: TimeGrid,
    pub baseload: Vec<f64>,
    pub sessions: Vec<SessionRecord>,
    pub fleet: Vec<EvseSpec>,
    pub run: RunConfig,
}

/// `sin²` bump over the inclusive range, zero outside.
fn bump(t: usize, (a, b): (usize, usize)) -> f64 {
    if t < a || t > b {
        return 0.0;
    }
    let x = (t - a + 1) as f64 / (b - a + 2) as f64;
    (std::f64::consts::PI * x).sin().powi(2)
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let s = 10f64.powi(decimals);
    (x * s).round() / s
}

pub fn generate(params: &SynthParams) -> Result<SynthInstance, SynthError> {
    params.validate()?;
    let grid = TimeGrid::new(params.horizon_start, params.t_slots, params.slot_minutes)
        .map_err(|e| SynthError::InvalidParams(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let baseload = (0..params.t_slots)
        .map(|t| {
            let shape = params.base_kw
                + (params.peak_kw - params.base_kw) * bump(t, params.peak_slots)
                + (params.valley_kw - params.base_kw) * bump(t, params.valley_slots);
            let noise = if params.noise_kw > 0.0 {
                rng.random_range(-params.noise_kw..=params.noise_kw)
            } else {
                0.0
            };
            round_to(shape + noise, 3)
        })
        .collect();

    let width = params.n_users.to_string().len().max(2);
    let horizon_min = (params.t_slots as f64) * f64::from(params.slot_minutes);
    let day_start_min = (params.horizon_start - params.horizon_start.date().and_time(NaiveTime::MIN)).num_minutes() as f64;
    let start_jitter = Normal::new(0.0, 15.0).expect("valid sigma");
    let end_jitter = Normal::new(0.0, 20.0).expect("valid sigma");
    let energy_noise = Normal::new(0.0, 0.4).expect("valid sigma");

    let mut sessions = Vec::new();
    let mut fleet = Vec::new();
    for u in 0..params.n_users {
        let user_id = format!("user-{:0width$}", u + 1);
        let mean_start = day_start_min + horizon_min * rng.random_range(0.02..0.17);
        let mean_end = day_start_min + horizon_min * rng.random_range(0.78..0.98);
        let theta = rng.random_range(0.4..1.2);

        let mut day = params.horizon_start.date();
        let mut made = 0;
        while made < params.sessions_per_user {
            day = day.pred_opt().expect("date in range");
            if rng.random_range(0.0..1.0) > 0.6 {
                continue;
            }
            let start_min = (mean_start + start_jitter.sample(&mut rng)).round().clamp(1.0, 1400.0);
            let end_min = (mean_end + end_jitter.sample(&mut rng))
                .round()
                .clamp(start_min + 30.0, 1439.0);
            let midnight = day.and_time(NaiveTime::MIN);
            let start = midnight + Duration::minutes(start_min as i64);
            let end = midnight + Duration::minutes(end_min as i64);
            let hours = (end_min - start_min) / 60.0;
            let energy = round_to((theta * hours + energy_noise.sample(&mut rng)).max(0.0), 3);
            sessions.push(SessionRecord::new(user_id.clone(), start, end, energy).expect("generated session is valid"));
            made += 1;
        }

        fleet.push(EvseSpec {
            evse_id: format!("evse-{:0width$}", u + 1),
            user_id,
            p_max_kw: params.p_max_kw,
            d_max_kw: params.d_max_kw,
            lag: 0,
        });
    }

    Ok(SynthInstance {
        grid,
        baseload,
        sessions,
        fleet,
        run: RunConfig::default(),
    })
}

impl SynthInstance {
    /// Writes baseload, sessions, fleet and config files into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), SynthError> {
        std::fs::create_dir_all(dir).map_err(|source| DataError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        io::write_baseload(&dir.join(BASELOAD_FILE), &self.baseload)?;
        io::write_sessions(&dir.join(SESSIONS_FILE), &self.sessions)?;
        io::write_scenario(
            &dir.join(FLEET_FILE),
            &ScenarioFile {
                evse: self.fleet.clone(),
                ..ScenarioFile::default()
            },
        )?;
        io::write_scenario(
            &dir.join(CONFIG_FILE),
            &ScenarioFile {
                grid: Some(GridSpec::from(&self.grid)),
                run: Some(self.run),
                evse: Vec::new(),
            },
        )?;
        Ok(())
    }
}
