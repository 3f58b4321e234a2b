//! Joint optimum through both lights of the reference corridor, with the
//! structure checks the optimum shows without being asked to.

use ecoand::scenario::Scenario;
use ecoand::solver::{solve_best, verify_solution, SolverOptions};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let sc = Scenario::reference_two_light_corridor();
    let sol = solve_best(&sc, &SolverOptions::default())?;
    println!("window plan k = {:?}", sol.plan.k);
    println!("crossings at {:?} s", sol.crossing_times);
    println!(
        "J = {:.6} (time {:.3} s, energy {:.4})",
        sol.costs.j, sol.costs.j_t, sol.costs.j_u
    );
    for (i, t) in sol.decision.triplets.iter().enumerate() {
        println!("  segment {i}: u = {:+.4}·t {:+.4} until {:.3}", t.a, t.b, t.tau);
    }
    let rep = verify_solution(&sol, &sc);
    println!(
        "largest knot jump {:.2e}, |u(t_p)| = {:.2e}, speed excess {:.2e}",
        rep.max_knot_jump, rep.terminal_accel, rep.max_speed_violation
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
