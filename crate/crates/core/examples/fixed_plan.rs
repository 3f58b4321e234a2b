//! Building the parametric program for one window plan and solving it from
//! the default starts.

use ecoand::planner::{enumerate_window_plans, reachable_time_bounds, DEFAULT_PLAN_CAP};
use ecoand::scenario::Scenario;
use ecoand::solver::{build_problem, initial_guess, solve, SolverOptions};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let sc = Scenario::reference_two_light_corridor();
    let plans = enumerate_window_plans(&sc, &reachable_time_bounds(&sc), DEFAULT_PLAN_CAP);
    // Second light in its second green instead of the earliest plan.
    let plan = plans.iter().find(|p| p.k == [0, 2]).ok_or("plan (0, 2) not admissible")?;
    let pb = build_problem(&sc, plan)?;
    println!(
        "{} segments, {} equalities, {} inequalities",
        pb.num_segments(),
        pb.num_equalities(),
        pb.num_inequalities()
    );
    let start = initial_guess(&pb, 0, 0);
    println!("objective at the first start: {:.6}", pb.objective(&start));
    let sol = solve(&pb, &SolverOptions::default())?;
    println!("J = {:.6}, crossings {:?}", sol.costs.j, sol.crossing_times);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
