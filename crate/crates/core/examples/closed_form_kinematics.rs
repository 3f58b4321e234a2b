//! Closed-form state propagation over a piecewise-linear acceleration profile,
//! checked against fine RK4 integration.

use ecoand::kinematics::{evaluate_profile, integrate_numeric, AccelProfile, LinearSegment, VehicleState};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    // Ramp down from 2 m/s² to 0 over 8 s, then brake gently.
    let profile = AccelProfile::new(vec![
        LinearSegment::from_start_accel(2.0, -0.25, 0.0, 8.0),
        LinearSegment::from_start_accel(0.0, -0.1, 8.0, 12.0),
    ])?;
    let s0 = VehicleState::new(0.0, 0.0, 3.0);

    let end = profile.knot_states(s0);
    let last = end.last().expect("knots");
    println!("closed form: x = {:.6} m, v = {:.6} m/s at t = {}", last.x, last.v, last.t);
    println!("energy ∫u² dt = {:.6}", profile.energy(s0));

    let rk4 = integrate_numeric(&profile, s0, 1e-3);
    let r = rk4.last().expect("samples");
    println!("rk4 (dt=1e-3): x = {:.6} m, v = {:.6} m/s, energy {:.6}", r.x, r.v, r.energy);

    let (x, v, u) = evaluate_profile(&profile, s0, 10.0)?;
    println!("t = 10: x = {x:.4}, v = {v:.4}, u = {u:.4}");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
