//! Local EVSE problem: one proximal step onto the EV's feasible set.
//!
//! ```text
//!   minimize    Σ_t c(t)·p(t) + ½ Σ_t (p(t) − prev(t))²
//!   subject to  lower(t) ≤ p(t) ≤ upper(t)
//!               Σ_t p(t)·ΔT = E′
//! ```
//!
//! The minimizer is `p(t; μ) = clip(prev(t) − c(t) + μ·ΔT, lower(t), upper(t))`
//! where the scalar multiplier `μ` is the root of the nondecreasing
//! piecewise-linear `g(μ) = Σ_t p(t; μ)·ΔT − E′`. The root is bracketed,
//! bisected, then polished with one exact step on the final linear piece.

use thiserror::Error;

use crate::time::RateBounds;

/// Bisection stops once `|g(μ)|` is within this fraction of `max(1, |E′|)`.
pub const ENERGY_REL_TOL: f64 = 1e-9;
/// Bisection also stops once the bracket is this narrow.
pub const BRACKET_TOL: f64 = 1e-12;
pub const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("energy demand {energy_kwh} kWh outside window capacity [{min_kwh}, {max_kwh}] kWh")]
    InfeasibleDemand {
        energy_kwh: f64,
        min_kwh: f64,
        max_kwh: f64,
    },
    #[error("invalid local problem: {0}")]
    InvalidInput(String),
}

/// Borrowed inputs of one local solve.
#[derive(Debug, Clone, Copy)]
pub struct LocalProblem<'a> {
    pub control: &'a [f64],
    pub prev_profile: &'a [f64],
    pub bounds: &'a RateBounds,
    pub energy_kwh: f64,
    pub dt_hours: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalSolution {
    pub profile: Vec<f64>,
    /// Multiplier of the energy constraint.
    pub multiplier: f64,
    pub objective: f64,
}

/// `Σ c·p + ½‖p − prev‖²`.
pub fn local_objective(profile: &[f64], control: &[f64], prev_profile: &[f64]) -> Result<f64, SolveError> {
    if profile.len() != control.len() || profile.len() != prev_profile.len() {
        return Err(SolveError::InvalidInput(format!(
            "length mismatch: profile {}, control {}, prev {}",
            profile.len(),
            control.len(),
            prev_profile.len()
        )));
    }
    Ok(profile
        .iter()
        .zip(control)
        .zip(prev_profile)
        .map(|((p, c), q)| c * p + 0.5 * (p - q) * (p - q))
        .sum())
}

/// Energy tolerance used for feasibility and publication checks.
pub fn energy_tolerance(energy_kwh: f64) -> f64 {
    ENERGY_REL_TOL * energy_kwh.abs().max(1.0)
}

impl LocalProblem<'_> {
    fn validate(&self) -> Result<(f64, f64), SolveError> {
        let n = self.bounds.len();
        if self.control.len() != n || self.prev_profile.len() != n {
            return Err(SolveError::InvalidInput(format!(
                "length mismatch: bounds {n}, control {}, prev {}",
                self.control.len(),
                self.prev_profile.len()
            )));
        }
        if !(self.dt_hours.is_finite() && self.dt_hours > 0.0) {
            return Err(SolveError::InvalidInput(format!(
                "slot duration {} h must be positive",
                self.dt_hours
            )));
        }
        if !self.energy_kwh.is_finite() {
            return Err(SolveError::InvalidInput("energy demand is not finite".into()));
        }
        if let Some(t) = (0..n).find(|&t| !(self.control[t].is_finite() && self.prev_profile[t].is_finite())) {
            return Err(SolveError::InvalidInput(format!("non-finite input at slot {t}")));
        }
        let (min_kwh, max_kwh) = self.bounds.energy_capacity(self.dt_hours);
        let tol = energy_tolerance(self.energy_kwh);
        if self.energy_kwh < min_kwh - tol || self.energy_kwh > max_kwh + tol {
            return Err(SolveError::InfeasibleDemand {
                energy_kwh: self.energy_kwh,
                min_kwh,
                max_kwh,
            });
        }
        Ok((min_kwh, max_kwh))
    }

    /// Unconstrained minimizer of slot `t` shifted by `μ·ΔT`, before clipping.
    fn anchor(&self, t: usize) -> f64 {
        self.prev_profile[t] - self.control[t]
    }

    fn profile_at(&self, mu: f64, out: &mut [f64]) {
        let lower = self.bounds.lower().as_slice();
        let upper = self.bounds.upper().as_slice();
        let avail = self.bounds.available();
        for t in 0..out.len() {
            out[t] = if avail[t] {
                (self.anchor(t) + mu * self.dt_hours).clamp(lower[t], upper[t])
            } else {
                0.0
            };
        }
    }

    fn residual(&self, mu: f64, scratch: &mut [f64]) -> f64 {
        self.profile_at(mu, scratch);
        scratch.iter().sum::<f64>() * self.dt_hours - self.energy_kwh
    }

    /// Exact root of `g` on the linear piece containing `mu`, if that piece has
    /// any free slots.
    fn polish(&self, mu: f64) -> Option<f64> {
        let lower = self.bounds.lower().as_slice();
        let upper = self.bounds.upper().as_slice();
        let dt = self.dt_hours;
        let mut clipped = 0.0;
        let mut free_anchor = 0.0;
        let mut free = 0usize;
        for t in (0..self.bounds.len()).filter(|&t| self.bounds.available()[t]) {
            let x = self.anchor(t) + mu * dt;
            if x <= lower[t] {
                clipped += lower[t];
            } else if x >= upper[t] {
                clipped += upper[t];
            } else {
                free_anchor += self.anchor(t);
                free += 1;
            }
        }
        if free == 0 {
            return None;
        }
        Some((self.energy_kwh / dt - clipped - free_anchor) / (free as f64 * dt))
    }
}

/// Solves one EVSE's local problem.
pub fn local_solve(problem: &LocalProblem<'_>) -> Result<LocalSolution, SolveError> {
    problem.validate()?;
    let n = problem.bounds.len();
    let lower = problem.bounds.lower().as_slice();
    let upper = problem.bounds.upper().as_slice();
    let avail = problem.bounds.available();
    let dt = problem.dt_hours;

    let mut profile = vec![0.0; n];
    if !avail.iter().any(|&a| a) {
        // Nothing to schedule; feasibility already forced E′ ≈ 0.
        let objective = local_objective(&profile, problem.control, problem.prev_profile)?;
        return Ok(LocalSolution {
            profile,
            multiplier: 0.0,
            objective,
        });
    }

    // At mu_lo every available slot sits on its lower bound, at mu_hi on its upper.
    let (mut mu_lo, mut mu_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in (0..n).filter(|&t| avail[t]) {
        mu_lo = mu_lo.min((lower[t] - problem.anchor(t)) / dt);
        mu_hi = mu_hi.max((upper[t] - problem.anchor(t)) / dt);
    }

    let tol = energy_tolerance(problem.energy_kwh);
    let mut mu = 0.5 * (mu_lo + mu_hi);
    let mut g = problem.residual(mu, &mut profile);
    for _ in 0..MAX_BISECTIONS {
        if g.abs() <= tol || mu_hi - mu_lo <= BRACKET_TOL {
            break;
        }
        if g < 0.0 {
            mu_lo = mu;
        } else {
            mu_hi = mu;
        }
        mu = 0.5 * (mu_lo + mu_hi);
        g = problem.residual(mu, &mut profile);
    }

    if let Some(exact) = problem.polish(mu) {
        let mut candidate = vec![0.0; n];
        let g_exact = problem.residual(exact, &mut candidate);
        if g_exact.abs() <= g.abs() {
            mu = exact;
            profile = candidate;
        }
    }
    let objective = local_objective(&profile, problem.control, problem.prev_profile)?;
    Ok(LocalSolution {
        profile,
        multiplier: mu,
        objective,
    })
}
