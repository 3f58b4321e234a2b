//! Grid dynamic programming as an independent upper bound on the continuous
//! optimum.

use ecoand::oracle::{compare, dp_solve, GridSpec};
use ecoand::scenario::Scenario;
use ecoand::solver::{solve_best, SolverOptions};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let sc = Scenario::reference_two_light_corridor();
    let grid = GridSpec::default();
    let dp = dp_solve(&sc, &grid)?;
    println!(
        "grid dt {} s, dv {} m/s, {} levels: J = {:.6}, crossings {:?}, {} states",
        grid.dt, grid.dv, grid.levels, dp.cost, dp.crossing_times, dp.expanded
    );
    let sol = solve_best(&sc, &SolverOptions::default())?;
    let cmp = compare(&sol, &dp);
    println!(
        "continuous J = {:.6}; difference {:+.2e}; sandwich {}",
        cmp.nlp_cost,
        cmp.cost_difference,
        if cmp.sandwich_holds { "holds" } else { "fails" }
    );
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
