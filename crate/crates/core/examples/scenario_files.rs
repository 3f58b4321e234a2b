//! Loading a corridor from JSON, validating it, and resolving cost weights.

use ecoand::scenario::{self, Scenario};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/two_light_corridor.json");
    let sc = Scenario::from_json_file(path)?;
    println!(
        "{} intersections, stop lines at {:?} m",
        sc.num_intersections(),
        sc.cumulative_lengths()
    );
    let w = sc.resolved_weights()?;
    println!("default weights: rho_t = {:.6e}, rho_u = {:.6e}", w.rho_t, w.rho_u);

    let mut broken = sc.clone();
    broken.segments[1].light.green_fraction = 1.2;
    broken.limits.u_min = 0.5;
    if let Err(violations) = scenario::validate(&broken) {
        for v in violations {
            println!("rejected: {v}");
        }
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
