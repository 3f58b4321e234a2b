use serde::{Deserialize, Serialize};

use super::{knot_jumps, Solution};
use crate::kinematics::evaluate_profile;
use crate::scenario::Scenario;

/// Sampling step of the dense speed check.
pub const DENSE_SPEED_DT: f64 = 0.01;

/// Properties the optimum should show without being constrained to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralReport {
    /// Largest acceleration jump at an interior knot.
    pub max_knot_jump: f64,
    /// `|u(t_p)|`.
    pub terminal_accel: f64,
    /// Largest speed-bound excess on a `DENSE_SPEED_DT` grid after the first
    /// knot; zero when within bounds.
    pub max_speed_violation: f64,
    /// Largest acceleration-bound excess on the same grid.
    pub max_accel_violation: f64,
    /// Whether each crossing time lies in a green interval (within `1e-6` s).
    pub crossings_green: Vec<bool>,
    /// `|x(t_i) − Σ_{j≤i} l_j|` per crossing.
    pub crossing_position_errors: Vec<f64>,
}

impl StructuralReport {
    pub fn all_green(&self) -> bool {
        self.crossings_green.iter().all(|&g| g)
    }
}

fn in_green(light: &crate::scenario::TrafficLight, t: f64, tol: f64) -> bool {
    let k = (t / light.period).round().max(0.0);
    let near = [k - 1.0, k, k + 1.0];
    near.iter().any(|&k| {
        k >= 0.0 && t >= k * light.period - tol && t <= k * light.period + light.green_duration() + tol
    })
}

/// Dense-grid and structural checks of a solution against its scenario.
pub fn verify_solution(sol: &Solution, sc: &Scenario) -> StructuralReport {
    let prof = &sol.profile;
    let s0 = sc.initial;
    let (max_knot_jump, terminal_accel) = knot_jumps(prof);
    let lim = sc.limits;
    let knots = prof.knots();
    let t1 = knots[1.min(knots.len() - 1)];
    let t_end = prof.end_time();
    let cum = sc.cumulative_lengths();
    let leg_of = |x: f64| cum.iter().position(|&c| x < c - 1e-9).unwrap_or(cum.len() - 1);

    let mut max_speed_violation: f64 = 0.0;
    let mut max_accel_violation: f64 = 0.0;
    let steps = ((t_end - t1) / DENSE_SPEED_DT).ceil().max(0.0) as usize;
    for i in 0..=steps {
        let t = (t1 + i as f64 * DENSE_SPEED_DT).min(t_end);
        let Ok((x, v, u)) = evaluate_profile(prof, s0, t) else {
            continue;
        };
        let cap = sc.speed_cap(leg_of(x));
        max_speed_violation = max_speed_violation.max(lim.v_min - v).max(v - cap);
        max_accel_violation = max_accel_violation.max(lim.u_min - u).max(u - lim.u_max);
    }
    let crossings_green = sol
        .crossing_times
        .iter()
        .zip(&sc.segments)
        .map(|(&t, seg)| in_green(&seg.light, t, 1e-6))
        .collect();
    let crossing_position_errors = sol
        .crossing_times
        .iter()
        .zip(&cum)
        .map(|(&t, &c)| evaluate_profile(prof, s0, t).map_or(f64::INFINITY, |(x, _, _)| (x - c).abs()))
        .collect();
    StructuralReport {
        max_knot_jump,
        terminal_accel,
        max_speed_violation,
        max_accel_violation,
        crossings_green,
        crossing_position_errors,
    }
}
