//! The general-purpose constrained solver on its own: a small problem with one
//! equality and one inequality.

use ecoand::nlp::{self, AlmSettings, Nlp};
use nalgebra::DMatrix;

/// min (x−2)² + (y−1)²  s.t.  x + y = 2,  x·y ≥ 0.5
struct Toy;

impl Nlp for Toy {
    fn dim(&self) -> usize {
        2
    }
    fn num_eq(&self) -> usize {
        1
    }
    fn num_ineq(&self) -> usize {
        1
    }
    fn objective(&self, x: &[f64]) -> f64 {
        (x[0] - 2.0).powi(2) + (x[1] - 1.0).powi(2)
    }
    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        g[0] = 2.0 * (x[0] - 2.0);
        g[1] = 2.0 * (x[1] - 1.0);
    }
    fn constraints(&self, x: &[f64], c: &mut [f64]) {
        c[0] = x[0] + x[1] - 2.0;
        c[1] = x[0] * x[1] - 0.5;
    }
    fn jacobian(&self, x: &[f64], j: &mut DMatrix<f64>) {
        j[(0, 0)] += 1.0;
        j[(0, 1)] += 1.0;
        j[(1, 0)] += x[1];
        j[(1, 1)] += x[0];
    }
    fn hessian(&self, _x: &[f64], w_f: f64, w_c: &[f64], h: &mut DMatrix<f64>) {
        h[(0, 0)] += 2.0 * w_f;
        h[(1, 1)] += 2.0 * w_f;
        h[(0, 1)] += w_c[1];
        h[(1, 0)] += w_c[1];
    }
}

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let r = nlp::solve(&Toy, &[0.0, 0.0], &AlmSettings::default());
    println!(
        "x = [{:.8}, {:.8}], f = {:.8}, multipliers {:?}",
        r.x[0], r.x[1], r.objective, r.lambda
    );
    println!(
        "violation {:.1e}, stationarity {:.1e}, {} outer / {} inner iterations",
        r.max_violation, r.stationarity, r.outer_iterations, r.inner_iterations
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
