//! A lead vehicle queued at the second light: rewrite the crossing window,
//! re-plan, and check the headway against its predicted departure.

use ecoand::kinematics::sample_profile;
use ecoand::scenario::Scenario;
use ecoand::solver::{solve_best, SolverOptions};
use ecoand::traffic::{adjust_scenario, check_safety, PrecedingInfo, SafetyParams};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let sc = Scenario::reference_two_light_corridor();
    let lead = PrecedingInfo::from_json_file(concat!(env!("CARGO_MANIFEST_DIR"), "/data/stopped_lead.json"))?;
    let sp = SafetyParams::default();
    let adjusted = adjust_scenario(&sc, &lead, &sp)?;
    let w = adjusted.crossing_window(1, 1);
    println!("second light now allows [{}, {}] s", w.start, w.end);

    let opts = SolverOptions::default();
    let free = solve_best(&sc, &opts)?;
    let sol = solve_best(&adjusted, &opts)?;
    println!("unobstructed crossings {:?}", free.crossing_times);
    println!("adjusted crossings     {:?}", sol.crossing_times);

    let ego = sample_profile(&sol.profile, adjusted.initial, 0.05);
    let bad = check_safety(&ego, &lead, &sp, 0.05);
    println!("headway violations: {}", bad.len());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
