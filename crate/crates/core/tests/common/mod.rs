#![allow(dead_code)]

use ecoand::scenario::{RoadSegment, Scenario, TrafficLight, VehicleLimits};
use ecoand::solver::{verify_solution, Solution};
use rand::Rng;

pub fn reference_limits() -> VehicleLimits {
    VehicleLimits {
        v_min: 2.78,
        v_max: 20.0,
        u_min: -2.9,
        u_max: 2.5,
    }
}

/// One to three segments of 100–400 m, periods 30–90 s, duty 0.3–0.7, and an
/// initial speed in [0, 20) m/s.
pub fn random_corridor<R: Rng>(rng: &mut R) -> Scenario {
    let n = rng.gen_range(1..=3);
    let segments = (0..n)
        .map(|_| {
            RoadSegment::new(
                rng.gen_range(100.0..400.0),
                TrafficLight::new(rng.gen_range(30.0..90.0), rng.gen_range(0.3..0.7)),
            )
        })
        .collect();
    Scenario::new(segments, reference_limits(), 0.0, rng.gen_range(0.0..20.0))
}

/// Residuals, crossing positions, green crossings, and dense speed and
/// acceleration bounds; `Err` names the first failure.
pub fn check_feasible(sol: &Solution, sc: &Scenario) -> Result<(), String> {
    let r = &sol.residuals;
    if !(r.max_violation <= 1e-6) {
        return Err(format!("constraint residual {:e}", r.max_violation));
    }
    let s = verify_solution(sol, sc);
    if let Some(e) = s.crossing_position_errors.iter().find(|e| !(**e <= 1e-6)) {
        return Err(format!("crossing position error {e:e}"));
    }
    if !s.all_green() {
        return Err(format!("crossing on red: {:?}", sol.crossing_times));
    }
    if !(s.max_speed_violation <= 1e-6) {
        return Err(format!("dense speed excess {:e}", s.max_speed_violation));
    }
    if !(s.max_accel_violation <= 1e-6) {
        return Err(format!("dense acceleration excess {:e}", s.max_accel_violation));
    }
    Ok(())
}
