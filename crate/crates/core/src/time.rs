//! Discretized scheduling horizon and per-EV rate bounds.
//!
//! A [`TimeGrid`] splits a single horizon into `slot_count` contiguous slots of
//! `slot_minutes` each. Slot `k` covers `[start + k·ΔT, start + (k+1)·ΔT)`.
//! A plug-in window maps onto slots by midpoint membership: slot `k` is
//! available when its midpoint lies in `[window.start, window.end)`.

use chrono::{Duration, NaiveDateTime, NaiveTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TimeError {
    #[error("slot index {index} out of range for a grid of {slot_count} slots")]
    SlotOutOfRange { index: usize, slot_count: usize },
    #[error("time grid needs at least one slot of at least one minute (got {slot_count} x {slot_minutes} min)")]
    EmptyGrid { slot_count: usize, slot_minutes: u32 },
    #[error("invalid rate limits: p_max = {p_max} kW must be >= 0 and d_max = {d_max} kW must be <= 0")]
    InvalidRateLimits { p_max: f64, d_max: f64 },
    #[error("slot vector has {actual} entries, expected {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("slot vector entry {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
}

/// The discretized horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon_start: NaiveDateTime,
    slot_count: usize,
    slot_minutes: u32,
}

impl TimeGrid {
    pub fn new(
        horizon_start: NaiveDateTime,
        slot_count: usize,
        slot_minutes: u32,
    ) -> Result<Self, TimeError> {
        if slot_count == 0 || slot_minutes == 0 {
            return Err(TimeError::EmptyGrid {
                slot_count,
                slot_minutes,
            });
        }
        Ok(Self {
            horizon_start,
            slot_count,
            slot_minutes,
        })
    }

    pub fn horizon_start(&self) -> NaiveDateTime {
        self.horizon_start
    }

    pub fn slot_count(&self) -> usize {
        self.slot_count
    }

    pub fn slot_minutes(&self) -> u32 {
        self.slot_minutes
    }

    /// Slot duration in hours; all energy arithmetic uses this (kW·h = kWh).
    pub fn dt_hours(&self) -> f64 {
        f64::from(self.slot_minutes) / 60.0
    }

    pub fn horizon_end(&self) -> NaiveDateTime {
        self.horizon_start + Duration::minutes(i64::from(self.slot_minutes) * self.slot_count as i64)
    }

    pub fn slot_start(&self, k: usize) -> Result<NaiveDateTime, TimeError> {
        self.check_index(k)?;
        Ok(self.horizon_start + Duration::minutes(i64::from(self.slot_minutes) * k as i64))
    }

    /// `horizon_start + (k + ½)·ΔT`.
    pub fn slot_midpoint(&self, k: usize) -> Result<NaiveDateTime, TimeError> {
        self.check_index(k)?;
        // Half-slots expressed in seconds keep odd slot lengths exact.
        let half_slots = 2 * k as i64 + 1;
        Ok(self.horizon_start + Duration::seconds(half_slots * i64::from(self.slot_minutes) * 30))
    }

    /// Wall-clock instant on the horizon's calendar day at `minutes` past midnight.
    ///
    /// Fractional minutes are rounded to the millisecond.
    pub fn at_minutes_of_day(&self, minutes: f64) -> NaiveDateTime {
        let midnight = self.horizon_start.date().and_time(NaiveTime::MIN);
        midnight + Duration::milliseconds((minutes * 60_000.0).round() as i64)
    }

    fn check_index(&self, k: usize) -> Result<(), TimeError> {
        if k < self.slot_count {
            Ok(())
        } else {
            Err(TimeError::SlotOutOfRange {
                index: k,
                slot_count: self.slot_count,
            })
        }
    }
}

/// Free-function form of [`TimeGrid::slot_midpoint`].
pub fn slot_midpoint(grid: &TimeGrid, k: usize) -> Result<NaiveDateTime, TimeError> {
    grid.slot_midpoint(k)
}

/// Per-slot real values (kW for loads and bounds, scaled kW for the control signal).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SlotVector(Vec<f64>);

impl SlotVector {
    /// Validates that every entry is finite.
    pub fn new(values: Vec<f64>) -> Result<Self, TimeError> {
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(TimeError::NonFinite { index, value });
        }
        Ok(Self(values))
    }

    /// Like [`SlotVector::new`] but also checks the length against `len`.
    pub fn with_len(values: Vec<f64>, len: usize) -> Result<Self, TimeError> {
        if values.len() != len {
            return Err(TimeError::LengthMismatch {
                expected: len,
                actual: values.len(),
            });
        }
        Self::new(values)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn filled(len: usize, value: f64) -> Self {
        Self(vec![value; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl std::ops::Index<usize> for SlotVector {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.0[index]
    }
}

impl AsRef<[f64]> for SlotVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// A half-open plug-in window `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
}

impl Window {
    pub fn new(start: NaiveDateTime, end: NaiveDateTime) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, instant: NaiveDateTime) -> bool {
        self.start <= instant && instant < self.end
    }
}

/// Per-slot charging limits for one EV.
///
/// `lower(t) ≤ 0 ≤ upper(t)` everywhere, and both are zero exactly on
/// unavailable slots.
#[derive(Debug, Clone, PartialEq)]
pub struct RateBounds {
    lower: SlotVector,
    upper: SlotVector,
    available: Vec<bool>,
}

impl RateBounds {
    /// Builds bounds from an availability mask and the EV's rate limits.
    pub fn from_mask(available: Vec<bool>, p_max: f64, d_max: f64) -> Result<Self, TimeError> {
        if !(p_max >= 0.0 && p_max.is_finite() && d_max <= 0.0 && d_max.is_finite()) {
            return Err(TimeError::InvalidRateLimits { p_max, d_max });
        }
        // A zero-width box on an available slot would break the mask/zero
        // correspondence, so such a slot counts as unavailable.
        let available: Vec<bool> = if p_max == 0.0 && d_max == 0.0 {
            vec![false; available.len()]
        } else {
            available
        };
        let upper = available.iter().map(|&a| if a { p_max } else { 0.0 }).collect();
        let lower = available.iter().map(|&a| if a { d_max } else { 0.0 }).collect();
        Ok(Self {
            lower: SlotVector(lower),
            upper: SlotVector(upper),
            available,
        })
    }

    pub fn lower(&self) -> &SlotVector {
        &self.lower
    }

    pub fn upper(&self) -> &SlotVector {
        &self.upper
    }

    pub fn available(&self) -> &[bool] {
        &self.available
    }

    pub fn len(&self) -> usize {
        self.available.len()
    }

    pub fn is_empty(&self) -> bool {
        self.available.is_empty()
    }

    pub fn available_count(&self) -> usize {
        self.available.iter().filter(|&&a| a).count()
    }

    /// `(Σ lower·ΔT, Σ upper·ΔT)` in kWh.
    pub fn energy_capacity(&self, dt_hours: f64) -> (f64, f64) {
        (self.lower.sum() * dt_hours, self.upper.sum() * dt_hours)
    }

    /// True when `profile` lies inside the box entry-wise.
    pub fn admits(&self, profile: &[f64]) -> bool {
        profile.len() == self.len()
            && profile
                .iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(p, (lo, hi))| lo <= p && p <= hi)
    }
}

/// Rate bounds for an EV plugged in over `window`.
pub fn build_bounds(
    grid: &TimeGrid,
    window: Window,
    p_max: f64,
    d_max: f64,
) -> Result<RateBounds, TimeError> {
    let mask = (0..grid.slot_count())
        .map(|k| grid.slot_midpoint(k).map(|mid| window.contains(mid)))
        .collect::<Result<Vec<_>, _>>()?;
    RateBounds::from_mask(mask, p_max, d_max)
}
