//! Per-intersection chaining against the joint plan, as a cost table.

use ecoand::scenario::Scenario;
use ecoand::solver::{solve_best, solve_sequential, Solution, SolverOptions};

fn row(name: &str, s: &Solution) {
    let parts: Vec<String> = s.costs.per_segment.iter().map(|c| format!("{:.4}", c.j)).collect();
    println!("{name:<10} {}  {:.4}   t = {:?}", parts.join("  "), s.costs.j, s.crossing_times);
}

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let sc = Scenario::reference_two_light_corridor();
    let opts = SolverOptions::default();
    let seq = solve_sequential(&sc, &opts)?;
    let joint = solve_best(&sc, &opts)?;
    let w = joint.weights;
    println!("weights rho_t = {:.6e}, rho_u = {:.6e}", w.rho_t, w.rho_u);
    println!("method     J_1     J_2     J");
    row("sequential", &seq);
    row("joint", &joint);
    println!("improvement {:.2}%", 100.0 * (seq.costs.j - joint.costs.j) / seq.costs.j);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
