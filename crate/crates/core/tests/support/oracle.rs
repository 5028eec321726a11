//! Independent reference solvers used only by tests.
//!
//! Nothing here calls into the scheduler's solver: the projection is computed
//! by sorting breakpoints rather than bisecting a multiplier, the fleet optimum
//! by accelerated projected gradient on the joint problem, and the local
//! optimum by exhaustive enumeration.

#![allow(dead_code)]

/// One EV as the oracles see it: per-slot box and required energy.
#[derive(Debug, Clone)]
pub struct OracleEv {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub energy_kwh: f64,
}

/// Euclidean projection of `y` onto `{x : lower ≤ x ≤ upper, Σ x·dt = energy}`.
///
/// The projection is `clip(y + ν)` for a scalar shift `ν`; the total
/// `h(ν) = Σ clip(y + ν)` is piecewise linear with kinks at `lower − y` and
/// `upper − y`, so sorting the kinks and interpolating pins `ν` exactly.
pub fn project(y: &[f64], lower: &[f64], upper: &[f64], energy: f64, dt: f64) -> Vec<f64> {
    let target = energy / dt;
    let free: Vec<usize> = (0..y.len()).filter(|&t| lower[t] < upper[t]).collect();
    let mut x: Vec<f64> = (0..y.len()).map(|t| lower[t]).collect();
    if free.is_empty() {
        return x;
    }
    let total = |nu: f64| -> f64 {
        free.iter().map(|&t| (y[t] + nu).clamp(lower[t], upper[t])).sum::<f64>()
    };
    let mut kinks: Vec<f64> = free
        .iter()
        .flat_map(|&t| [lower[t] - y[t], upper[t] - y[t]])
        .collect();
    kinks.sort_by(f64::total_cmp);
    let values: Vec<f64> = kinks.iter().map(|&k| total(k)).collect();
    let nu = if target <= values[0] {
        kinks[0]
    } else if target >= values[values.len() - 1] {
        kinks[kinks.len() - 1]
    } else {
        let j = values.iter().position(|&v| v >= target).unwrap();
        let (k0, k1, v0, v1) = (kinks[j - 1], kinks[j], values[j - 1], values[j]);
        if v1 == v0 {
            k0
        } else {
            k0 + (target - v0) * (k1 - k0) / (v1 - v0)
        }
    };
    for &t in &free {
        x[t] = (y[t] + nu).clamp(lower[t], upper[t]);
    }
    x
}

/// `Σ_t (B(t) + Σ_n p_n(t))²`.
pub fn fleet_objective(baseload: &[f64], profiles: &[Vec<f64>]) -> f64 {
    (0..baseload.len())
        .map(|t| {
            let total = baseload[t] + profiles.iter().map(|p| p[t]).sum::<f64>();
            total * total
        })
        .sum()
}

/// Minimum of the fleet flatness objective over every EV's feasible set,
/// by FISTA with step `1/L`, `L = 2N`.
pub fn centralized_optimum(baseload: &[f64], evs: &[OracleEv], dt: f64, iterations: usize) -> f64 {
    let n = evs.len();
    let slots = baseload.len();
    let step = 1.0 / (2.0 * n as f64);
    let proj = |i: usize, y: &[f64]| project(y, &evs[i].lower, &evs[i].upper, evs[i].energy_kwh, dt);

    let mut x: Vec<Vec<f64>> = (0..n).map(|i| proj(i, &vec![0.0; slots])).collect();
    let mut y = x.clone();
    let mut momentum = 1.0f64;
    let mut best = fleet_objective(baseload, &x);
    for _ in 0..iterations {
        let grad: Vec<f64> = (0..slots)
            .map(|t| 2.0 * (baseload[t] + y.iter().map(|p| p[t]).sum::<f64>()))
            .collect();
        let next: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let shifted: Vec<f64> = (0..slots).map(|t| y[i][t] - step * grad[t]).collect();
                proj(i, &shifted)
            })
            .collect();
        let m_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = (momentum - 1.0) / m_next;
        y = (0..n)
            .map(|i| (0..slots).map(|t| next[i][t] + beta * (next[i][t] - x[i][t])).collect())
            .collect();
        x = next;
        momentum = m_next;
        best = best.min(fleet_objective(baseload, &x));
    }
    best
}

/// Local objective `Σ c·p + ½‖p − prev‖²`, written out independently.
pub fn local_value(p: &[f64], c: &[f64], prev: &[f64]) -> f64 {
    let mut v = 0.0;
    for t in 0..p.len() {
        v += c[t] * p[t] + 0.5 * (p[t] - prev[t]).powi(2);
    }
    v
}

/// Minimum of the local objective over a 0.01-kW grid on the energy-equality
/// set: every available slot but the last ranges over grid points inside its
/// box, the last is fixed by the energy equality and must land in its box.
pub fn grid_search_local(
    c: &[f64],
    prev: &[f64],
    lower: &[f64],
    upper: &[f64],
    available: &[bool],
    energy: f64,
    dt: f64,
) -> Option<f64> {
    const STEP: f64 = 0.01;
    let slots: Vec<usize> = (0..c.len()).filter(|&t| available[t]).collect();
    let mut p = vec![0.0; c.len()];
    if slots.is_empty() {
        return Some(local_value(&p, c, prev));
    }
    let (last, enumerated) = slots.split_last().unwrap();
    let ranges: Vec<(i64, i64)> = enumerated
        .iter()
        .map(|&t| ((lower[t] / STEP).ceil() as i64, (upper[t] / STEP).floor() as i64))
        .collect();
    let mut idx: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    if ranges.iter().any(|r| r.0 > r.1) {
        return None;
    }
    let mut best: Option<f64> = None;
    loop {
        for (k, &t) in enumerated.iter().enumerate() {
            p[t] = idx[k] as f64 * STEP;
        }
        let partial: f64 = enumerated.iter().map(|&t| p[t]).sum();
        let rest = energy / dt - partial;
        let tol = 1e-12 * (1.0 + rest.abs());
        if rest >= lower[*last] - tol && rest <= upper[*last] + tol {
            p[*last] = rest.clamp(lower[*last], upper[*last]);
            let v = local_value(&p, c, prev);
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
        // Odometer increment over the enumerated slots.
        let mut k = 0;
        loop {
            if k == idx.len() {
                return best;
            }
            idx[k] += 1;
            if idx[k] <= ranges[k].1 {
                break;
            }
            idx[k] = ranges[k].0;
            k += 1;
        }
    }
}
