//! Stop-free speed planning through a chain of fixed-time traffic lights.
//!
//! The vehicle's acceleration is piecewise linear in time. For every
//! admissible assignment of intersections to green windows the crate solves a
//! smooth nonlinear program over the segment slopes, intercepts and knot
//! times, and keeps the cheapest result under a weighted travel-time plus
//! `∫u²` cost.
//!
//! The examples are the intended entry points:
//!
//! | example | shows |
//! |---|---|
//! | `closed_form_kinematics` | exact state propagation vs RK4 |
//! | `scenario_files` | JSON corridors, validation, default weights |
//! | `window_plans` | reachable arrival times and window plans |
//! | `joint_solve` | the joint optimum and its structure |
//! | `sequential_vs_joint` | per-intersection chaining vs the joint plan |
//! | `fixed_plan` | building and solving one parametric program |
//! | `dp_oracle` | grid dynamic programming as an upper bound |
//! | `preceding_vehicle` | scenario rewrites and headway checks for a lead car |
//! | `augmented_lagrangian` | the constrained solver on its own |
//! | `batch_report` | the `ecoand` front end driven from code |
//!
//! Run one with `cargo run --release --example joint_solve`.

pub mod kinematics;
pub mod scenario;
pub mod planner;
pub mod nlp;
pub mod solver;
pub mod oracle;
pub mod traffic;
pub mod cli;
