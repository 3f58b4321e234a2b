//! Reachable crossing-time bounds and the stop-free window plans they admit.

use ecoand::planner::{enumerate_window_plans, reachable_time_bounds, DEFAULT_PLAN_CAP};
use ecoand::scenario::Scenario;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let sc = Scenario::reference_two_light_corridor();
    let b = reachable_time_bounds(&sc);
    for i in 0..sc.num_intersections() {
        println!("intersection {}: arrive in [{:.2}, {:.2}] s", i + 1, b.t_min[i], b.t_max[i]);
    }
    for plan in enumerate_window_plans(&sc, &b, DEFAULT_PLAN_CAP) {
        let w: Vec<String> = plan.windows.iter().map(|w| format!("[{:.1}, {:.1}]", w.start, w.end)).collect();
        println!("k = {:?}  windows {}  earliest finish {:.2}", plan.k, w.join(" "), plan.lower_bound);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
