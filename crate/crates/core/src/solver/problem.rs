//! The parametric program: constraint families, objective and their exact
//! derivatives.
//!
//! Internally each segment `r` is described by `(p_r, a_r, h_r)`: acceleration
//! at its start, jerk, and duration. The public [`DecisionVector`] uses the
//! `(a, b, τ)` triplet form. Both describe the same `u(t)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{AccelProfile, LinearSegment};
use crate::nlp::Nlp;
use crate::planner::WindowPlan;
use crate::scenario::{Scenario, ScenarioError, Weights, Window};

/// Segments per intersection leg (the last leg has three).
pub const DEFAULT_PER_LEG: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildOptions {
    pub per_leg: usize,
    /// With one intersection, drop the per-segment sign constraints and keep
    /// only speed, acceleration, ordering, window and position constraints.
    pub reduced_single: bool,
    pub jerk_limit: Option<f64>,
    pub initial_accel: Option<f64>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            per_leg: DEFAULT_PER_LEG,
            reduced_single: false,
            jerk_limit: None,
            initial_accel: None,
        }
    }
}

impl BuildOptions {
    pub fn from_scenario(sc: &Scenario) -> Self {
        Self {
            jerk_limit: sc.options.jerk_limit,
            initial_accel: sc.options.initial_accel,
            ..Self::default()
        }
    }
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("plan has {got} window indices for {expected} intersections")]
    PlanLength { expected: usize, got: usize },
    #[error("window {k} of intersection {intersection} is empty")]
    EmptyWindow { intersection: usize, k: u32 },
    #[error("at least 3 segments per leg are required, got {0}")]
    Layout(usize),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// One `(a_i, b_i, τ_i)` triplet: `u(t) = a_i·t + b_i` on `[τ_{i−1}, τ_i]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub a: f64,
    pub b: f64,
    pub tau: f64,
}

/// Decision vector of the parametric program; `τ_0` is the scenario's initial
/// time and is not stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionVector {
    pub t0: f64,
    pub triplets: Vec<Triplet>,
}

impl DecisionVector {
    /// From the internal `(p, a, h)` layout.
    pub(crate) fn from_internal(t0: f64, x: &[f64]) -> Self {
        let mut tau = t0;
        let triplets = x
            .chunks_exact(3)
            .map(|c| {
                let (p, a, h) = (c[0], c[1], c[2]);
                let b = p - a * tau;
                tau += h;
                Triplet { a, b, tau }
            })
            .collect();
        Self { t0, triplets }
    }

    pub(crate) fn to_internal(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * self.triplets.len());
        let mut start = self.t0;
        for t in &self.triplets {
            out.extend_from_slice(&[t.a * start + t.b, t.a, t.tau - start]);
            start = t.tau;
        }
        out
    }

    pub fn to_profile(&self) -> AccelProfile {
        profile_from_internal(self.t0, &self.to_internal())
    }
}

pub(crate) fn profile_from_internal(t0: f64, x: &[f64]) -> AccelProfile {
    let mut start = t0;
    let segs = x
        .chunks_exact(3)
        .map(|c| {
            // Clamp tiny negative durations left by the solver.
            let end = start + c[2].max(0.0);
            let s = LinearSegment::from_start_accel(c[0], c[1], start, end);
            start = end;
            s
        })
        .collect();
    AccelProfile::new(segs).expect("durations are non-negative")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Kind {
    /// `x(τ_knot) − target = 0`.
    Position { knot: usize, target: f64 },
    /// `p_0 − value = 0`.
    InitialAccel { value: f64 },
    /// `h_r ≥ 0`.
    Duration { seg: usize },
    SpeedMin { knot: usize, bound: f64 },
    SpeedMax { knot: usize, bound: f64 },
    /// `p_r · q_r ≥ 0`: acceleration keeps one sign over the segment.
    Sign { seg: usize },
    StartAccelMin { seg: usize, bound: f64 },
    StartAccelMax { seg: usize, bound: f64 },
    EndAccelMin { seg: usize, bound: f64 },
    EndAccelMax { seg: usize, bound: f64 },
    TimeMin { knot: usize, bound: f64 },
    TimeMax { knot: usize, bound: f64 },
    JerkMin { seg: usize, bound: f64 },
    JerkMax { seg: usize, bound: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Constraint {
    pub kind: Kind,
    /// Natural-unit value divided by this gives the solver's value.
    pub scale: f64,
}

/// Knot quantities of a decision vector, times relative to `t0`.
pub(crate) struct Knots {
    /// `T_i`, elapsed time at knot `i`.
    pub t: Vec<f64>,
    /// Speed at knot `i`.
    pub v: Vec<f64>,
    /// Position at knot `i`.
    pub x: Vec<f64>,
    /// End acceleration of each segment.
    pub q: Vec<f64>,
}

/// The nonlinear program for one scenario and one window plan.
#[derive(Debug, Clone)]
pub struct ParametricProblem {
    scenario: Scenario,
    plan: WindowPlan,
    weights: Weights,
    options: BuildOptions,
    num_segments: usize,
    crossing_knots: Vec<usize>,
    windows: Vec<Window>,
    pub(crate) constraints: Vec<Constraint>,
    pub(crate) num_eq: usize,
    /// Natural units per solver unit for `(p, a, h)`.
    pub(crate) var_scale: [f64; 3],
    pub(crate) obj_scale: f64,
}

/// Builds the program with the scenario's own optional constraints.
pub fn build_problem(sc: &Scenario, plan: &WindowPlan) -> Result<ParametricProblem, BuildError> {
    build_problem_with(sc, plan, &BuildOptions::from_scenario(sc))
}

pub fn build_problem_with(
    sc: &Scenario,
    plan: &WindowPlan,
    opts: &BuildOptions,
) -> Result<ParametricProblem, BuildError> {
    let n = sc.num_intersections();
    if plan.k.len() != n {
        return Err(BuildError::PlanLength {
            expected: n,
            got: plan.k.len(),
        });
    }
    if opts.per_leg < 3 {
        return Err(BuildError::Layout(opts.per_leg));
    }
    let weights = sc.resolved_weights()?;
    let windows: Vec<Window> = (0..n)
        .map(|i| {
            let w = sc.crossing_window(i, plan.k[i]);
            if w.is_empty() {
                Err(BuildError::EmptyWindow {
                    intersection: i,
                    k: plan.k[i],
                })
            } else {
                Ok(w)
            }
        })
        .collect::<Result<_, _>>()?;
    let m = opts.per_leg * (n - 1) + 3;
    let crossing_knots: Vec<usize> = (1..n).map(|i| opts.per_leg * i).chain([m]).collect();
    let lim = sc.limits;
    let t0 = sc.initial.t;
    let u_lim = lim.accel_magnitude();
    let horizon = (windows[n - 1].end - t0).max(1.0);
    let ts = horizon / m as f64;
    let v_scale = lim.v_max;
    let x_scale = v_scale * ts;

    let leg_of_seg = |r: usize| (r / opts.per_leg).min(n - 1);
    let mut cons = Vec::new();
    let cum = sc.cumulative_lengths();
    for (i, &knot) in crossing_knots.iter().enumerate() {
        cons.push(Constraint {
            kind: Kind::Position {
                knot,
                target: cum[i],
            },
            scale: x_scale,
        });
    }
    if let Some(u0) = opts.initial_accel {
        cons.push(Constraint {
            kind: Kind::InitialAccel { value: u0 },
            scale: u_lim,
        });
    }
    let num_eq = cons.len();
    let reduced = opts.reduced_single && n == 1;
    for r in 0..m {
        let mut push = |kind, scale| cons.push(Constraint { kind, scale });
        push(Kind::Duration { seg: r }, ts);
        let knot = r + 1;
        let mut cap = sc.speed_cap(leg_of_seg(r));
        if let Some(pos) = crossing_knots.iter().position(|&k| k == knot) {
            if pos + 1 < n {
                cap = cap.min(sc.speed_cap(pos + 1));
            }
        }
        push(Kind::SpeedMin { knot, bound: lim.v_min }, v_scale);
        push(Kind::SpeedMax { knot, bound: cap }, v_scale);
        if !reduced {
            push(Kind::Sign { seg: r }, u_lim * u_lim);
        }
        push(Kind::StartAccelMin { seg: r, bound: lim.u_min }, u_lim);
        push(Kind::StartAccelMax { seg: r, bound: lim.u_max }, u_lim);
        push(Kind::EndAccelMin { seg: r, bound: lim.u_min }, u_lim);
        push(Kind::EndAccelMax { seg: r, bound: lim.u_max }, u_lim);
        if let Some(aj) = opts.jerk_limit {
            push(Kind::JerkMin { seg: r, bound: aj }, u_lim / ts);
            push(Kind::JerkMax { seg: r, bound: aj }, u_lim / ts);
        }
    }
    for (i, &knot) in crossing_knots.iter().enumerate() {
        cons.push(Constraint {
            kind: Kind::TimeMin {
                knot,
                bound: windows[i].start,
            },
            scale: ts,
        });
        cons.push(Constraint {
            kind: Kind::TimeMax {
                knot,
                bound: windows[i].end,
            },
            scale: ts,
        });
    }
    let obj_ref = weights.rho_t * horizon + weights.rho_u * u_lim * u_lim * horizon;
    Ok(ParametricProblem {
        scenario: sc.clone(),
        plan: plan.clone(),
        weights,
        options: *opts,
        num_segments: m,
        crossing_knots,
        windows,
        constraints: cons,
        num_eq,
        var_scale: [u_lim, u_lim / ts, ts],
        obj_scale: if obj_ref > 0.0 { 1.0 / obj_ref } else { 1.0 },
    })
}

/// Accumulates `w · s_i · s_j · v` into a symmetric matrix for `i ≤ j`.
struct HessAcc<'a> {
    out: &'a mut DMatrix<f64>,
    scale: &'a [f64],
    w: f64,
}

impl HessAcc<'_> {
    fn add(&mut self, i: usize, j: usize, v: f64) {
        let val = self.w * v * self.scale[i] * self.scale[j];
        self.out[(i, j)] += val;
        if i != j {
            self.out[(j, i)] += val;
        }
    }
}

const P: usize = 0;
const A: usize = 1;
const H: usize = 2;

#[inline]
fn idx(r: usize, c: usize) -> usize {
    3 * r + c
}

impl ParametricProblem {
    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn plan(&self) -> &WindowPlan {
        &self.plan
    }

    pub fn weights(&self) -> Weights {
        self.weights
    }

    pub fn build_options(&self) -> &BuildOptions {
        &self.options
    }

    /// `M`, the number of linear segments.
    pub fn num_segments(&self) -> usize {
        self.num_segments
    }

    /// 1-based knot index of each intersection crossing.
    pub fn crossing_knots(&self) -> &[usize] {
        &self.crossing_knots
    }

    /// Crossing window of each intersection under the plan.
    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    pub fn num_equalities(&self) -> usize {
        self.num_eq
    }

    pub fn num_inequalities(&self) -> usize {
        self.constraints.len() - self.num_eq
    }

    pub(crate) fn t0(&self) -> f64 {
        self.scenario.initial.t
    }

    pub(crate) fn knots(&self, x: &[f64]) -> Knots {
        let m = self.num_segments;
        let v0 = self.scenario.initial.v;
        let mut t = Vec::with_capacity(m + 1);
        let mut v = Vec::with_capacity(m + 1);
        let mut pos = Vec::with_capacity(m + 1);
        let mut q = Vec::with_capacity(m);
        t.push(0.0);
        v.push(v0);
        pos.push(0.0);
        for r in 0..m {
            let (p, a, h) = (x[idx(r, P)], x[idx(r, A)], x[idx(r, H)]);
            let d = p * h + 0.5 * a * h * h;
            pos.push(pos[r] + v[r] * h + 0.5 * p * h * h + a * h * h * h / 6.0);
            t.push(t[r] + h);
            v.push(v[r] + d);
            q.push(p + a * h);
        }
        Knots { t, v, x: pos, q }
    }

    /// Weighted objective `ρ_t·τ_M + ρ_u·Σ ∫u²` in natural units.
    pub(crate) fn objective_natural(&self, x: &[f64]) -> f64 {
        let mut e = 0.0;
        let mut tm = self.t0();
        for r in 0..self.num_segments {
            let (p, a, h) = (x[idx(r, P)], x[idx(r, A)], x[idx(r, H)]);
            e += p * p * h + p * a * h * h + a * a * h * h * h / 3.0;
            tm += h;
        }
        self.weights.rho_t * tm + self.weights.rho_u * e
    }

    /// Objective of a decision vector.
    pub fn objective(&self, dv: &DecisionVector) -> f64 {
        self.objective_natural(&dv.to_internal())
    }

    pub(crate) fn constraint_natural(&self, kind: &Kind, x: &[f64], k: &Knots) -> f64 {
        let t0 = self.t0();
        match *kind {
            Kind::Position { knot, target } => k.x[knot] - target,
            Kind::InitialAccel { value } => x[idx(0, P)] - value,
            Kind::Duration { seg } => x[idx(seg, H)],
            Kind::SpeedMin { knot, bound } => k.v[knot] - bound,
            Kind::SpeedMax { knot, bound } => bound - k.v[knot],
            Kind::Sign { seg } => x[idx(seg, P)] * k.q[seg],
            Kind::StartAccelMin { seg, bound } => x[idx(seg, P)] - bound,
            Kind::StartAccelMax { seg, bound } => bound - x[idx(seg, P)],
            Kind::EndAccelMin { seg, bound } => k.q[seg] - bound,
            Kind::EndAccelMax { seg, bound } => bound - k.q[seg],
            Kind::TimeMin { knot, bound } => t0 + k.t[knot] - bound,
            Kind::TimeMax { knot, bound } => bound - t0 - k.t[knot],
            Kind::JerkMin { seg, bound } => x[idx(seg, A)] + bound,
            Kind::JerkMax { seg, bound } => bound - x[idx(seg, A)],
        }
    }

    /// Calls `add(i, ∂c/∂x_i)` for every nonzero entry (natural units).
    fn constraint_gradient(&self, kind: &Kind, x: &[f64], k: &Knots, mut add: impl FnMut(usize, f64)) {
        match *kind {
            Kind::Position { knot, .. } => {
                for r in 0..knot {
                    let h = x[idx(r, H)];
                    let d = k.t[knot] - k.t[r + 1];
                    add(idx(r, P), 0.5 * h * h + h * d);
                    add(idx(r, A), h * h * h / 6.0 + 0.5 * h * h * d);
                    add(idx(r, H), k.v[r + 1] + k.q[r] * d);
                }
            }
            Kind::InitialAccel { .. } => add(idx(0, P), 1.0),
            Kind::Duration { seg } => add(idx(seg, H), 1.0),
            Kind::SpeedMin { knot, .. } | Kind::SpeedMax { knot, .. } => {
                let s = if matches!(kind, Kind::SpeedMin { .. }) { 1.0 } else { -1.0 };
                for r in 0..knot {
                    let h = x[idx(r, H)];
                    add(idx(r, P), s * h);
                    add(idx(r, A), s * 0.5 * h * h);
                    add(idx(r, H), s * k.q[r]);
                }
            }
            Kind::Sign { seg } => {
                let (p, a, h) = (x[idx(seg, P)], x[idx(seg, A)], x[idx(seg, H)]);
                add(idx(seg, P), p + k.q[seg]);
                add(idx(seg, A), p * h);
                add(idx(seg, H), p * a);
            }
            Kind::StartAccelMin { seg, .. } => add(idx(seg, P), 1.0),
            Kind::StartAccelMax { seg, .. } => add(idx(seg, P), -1.0),
            Kind::EndAccelMin { seg, .. } | Kind::EndAccelMax { seg, .. } => {
                let s = if matches!(kind, Kind::EndAccelMin { .. }) { 1.0 } else { -1.0 };
                add(idx(seg, P), s);
                add(idx(seg, A), s * x[idx(seg, H)]);
                add(idx(seg, H), s * x[idx(seg, A)]);
            }
            Kind::TimeMin { knot, .. } | Kind::TimeMax { knot, .. } => {
                let s = if matches!(kind, Kind::TimeMin { .. }) { 1.0 } else { -1.0 };
                for r in 0..knot {
                    add(idx(r, H), s);
                }
            }
            Kind::JerkMin { seg, .. } => add(idx(seg, A), 1.0),
            Kind::JerkMax { seg, .. } => add(idx(seg, A), -1.0),
        }
    }

    /// Adds the constraint Hessian (natural units, upper triangle once).
    fn constraint_hessian(&self, kind: &Kind, x: &[f64], k: &Knots, acc: &mut HessAcc) {
        match *kind {
            Kind::Position { knot, .. } => {
                for r in 0..knot {
                    let (a, h) = (x[idx(r, A)], x[idx(r, H)]);
                    let d = k.t[knot] - k.t[r + 1];
                    acc.add(idx(r, P), idx(r, H), h + d);
                    acc.add(idx(r, A), idx(r, H), 0.5 * h * h + d * h);
                    acc.add(idx(r, H), idx(r, H), k.q[r] + a * d);
                    for rp in 0..r {
                        let hp = x[idx(rp, H)];
                        acc.add(idx(rp, P), idx(r, H), hp);
                        acc.add(idx(rp, A), idx(r, H), 0.5 * hp * hp);
                        acc.add(idx(rp, H), idx(r, H), k.q[rp]);
                    }
                }
            }
            Kind::SpeedMin { knot, .. } | Kind::SpeedMax { knot, .. } => {
                let s = if matches!(kind, Kind::SpeedMin { .. }) { 1.0 } else { -1.0 };
                for r in 0..knot {
                    acc.add(idx(r, P), idx(r, H), s);
                    acc.add(idx(r, A), idx(r, H), s * x[idx(r, H)]);
                    acc.add(idx(r, H), idx(r, H), s * x[idx(r, A)]);
                }
            }
            Kind::Sign { seg } => {
                let (p, a, h) = (x[idx(seg, P)], x[idx(seg, A)], x[idx(seg, H)]);
                acc.add(idx(seg, P), idx(seg, P), 2.0);
                acc.add(idx(seg, P), idx(seg, A), h);
                acc.add(idx(seg, P), idx(seg, H), a);
                acc.add(idx(seg, A), idx(seg, H), p);
            }
            Kind::EndAccelMin { seg, .. } => acc.add(idx(seg, A), idx(seg, H), 1.0),
            Kind::EndAccelMax { seg, .. } => acc.add(idx(seg, A), idx(seg, H), -1.0),
            _ => {}
        }
    }

    fn objective_gradient_natural(&self, x: &[f64], out: &mut [f64]) {
        let Weights { rho_t, rho_u } = self.weights;
        for r in 0..self.num_segments {
            let (p, a, h) = (x[idx(r, P)], x[idx(r, A)], x[idx(r, H)]);
            let q = p + a * h;
            out[idx(r, P)] = rho_u * (2.0 * p * h + a * h * h);
            out[idx(r, A)] = rho_u * (p * h * h + 2.0 * a * h * h * h / 3.0);
            out[idx(r, H)] = rho_t + rho_u * q * q;
        }
    }

    fn objective_hessian(&self, x: &[f64], acc: &mut HessAcc) {
        let rho_u = self.weights.rho_u;
        if rho_u == 0.0 {
            return;
        }
        for r in 0..self.num_segments {
            let (p, a, h) = (x[idx(r, P)], x[idx(r, A)], x[idx(r, H)]);
            let q = p + a * h;
            acc.add(idx(r, P), idx(r, P), rho_u * 2.0 * h);
            acc.add(idx(r, P), idx(r, A), rho_u * h * h);
            acc.add(idx(r, P), idx(r, H), rho_u * 2.0 * q);
            acc.add(idx(r, A), idx(r, A), rho_u * 2.0 * h * h * h / 3.0);
            acc.add(idx(r, A), idx(r, H), rho_u * 2.0 * q * h);
            acc.add(idx(r, H), idx(r, H), rho_u * 2.0 * a * q);
        }
    }

    /// Sign branch of every segment that carries a sign constraint, taken from
    /// the sign of `p + q` at `x`.
    pub(crate) fn sign_pattern(&self, x: &[f64]) -> Vec<(usize, bool)> {
        let k = self.knots(x);
        self.constraints
            .iter()
            .filter_map(|c| match c.kind {
                Kind::Sign { seg } => Some((seg, x[idx(seg, P)] + k.q[seg] >= 0.0)),
                _ => None,
            })
            .collect()
    }

    /// The same program with `p_r·q_r ≥ 0` replaced by the one-signed branch
    /// `p_r, q_r ≥ 0` (or `≤ 0`) for each listed segment.
    pub(crate) fn with_sign_branches(&self, branches: &[(usize, bool)]) -> ParametricProblem {
        let mut out = self.clone();
        let u_lim = self.scenario.limits.accel_magnitude();
        let eq: Vec<Constraint> = self.constraints[..self.num_eq].to_vec();
        let mut ineq = Vec::new();
        for c in &self.constraints[self.num_eq..] {
            match c.kind {
                Kind::Sign { seg } => {
                    if let Some(&(_, pos)) = branches.iter().find(|b| b.0 == seg) {
                        let (start, end) = if pos {
                            (
                                Kind::StartAccelMin { seg, bound: 0.0 },
                                Kind::EndAccelMin { seg, bound: 0.0 },
                            )
                        } else {
                            (
                                Kind::StartAccelMax { seg, bound: 0.0 },
                                Kind::EndAccelMax { seg, bound: 0.0 },
                            )
                        };
                        ineq.push(Constraint { kind: start, scale: u_lim });
                        ineq.push(Constraint { kind: end, scale: u_lim });
                    } else {
                        ineq.push(*c);
                    }
                }
                _ => ineq.push(*c),
            }
        }
        out.constraints = eq.into_iter().chain(ineq).collect();
        out
    }

    pub(crate) fn scale_vector(&self) -> Vec<f64> {
        (0..3 * self.num_segments)
            .map(|i| self.var_scale[i % 3])
            .collect()
    }

    pub(crate) fn to_scaled(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| v / self.var_scale[i % 3])
            .collect()
    }

    pub(crate) fn to_natural(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(i, v)| v * self.var_scale[i % 3])
            .collect()
    }
}

/// The program in solver units (scaled variables, constraints, objective).
pub(crate) struct Scaled<'a> {
    pub pb: &'a ParametricProblem,
    scale: Vec<f64>,
}

impl<'a> Scaled<'a> {
    pub fn new(pb: &'a ParametricProblem) -> Self {
        Self {
            pb,
            scale: pb.scale_vector(),
        }
    }
}

impl Nlp for Scaled<'_> {
    fn dim(&self) -> usize {
        3 * self.pb.num_segments
    }

    fn num_eq(&self) -> usize {
        self.pb.num_eq
    }

    fn num_ineq(&self) -> usize {
        self.pb.constraints.len() - self.pb.num_eq
    }

    fn objective(&self, z: &[f64]) -> f64 {
        self.pb.obj_scale * self.pb.objective_natural(&self.pb.to_natural(z))
    }

    fn gradient(&self, z: &[f64], out: &mut [f64]) {
        let x = self.pb.to_natural(z);
        self.pb.objective_gradient_natural(&x, out);
        for (o, s) in out.iter_mut().zip(&self.scale) {
            *o *= s * self.pb.obj_scale;
        }
    }

    fn constraints(&self, z: &[f64], out: &mut [f64]) {
        let x = self.pb.to_natural(z);
        let k = self.pb.knots(&x);
        for (o, c) in out.iter_mut().zip(&self.pb.constraints) {
            *o = self.pb.constraint_natural(&c.kind, &x, &k) / c.scale;
        }
    }

    fn jacobian(&self, z: &[f64], out: &mut DMatrix<f64>) {
        let x = self.pb.to_natural(z);
        let k = self.pb.knots(&x);
        for (row, c) in self.pb.constraints.iter().enumerate() {
            let inv = 1.0 / c.scale;
            self.pb.constraint_gradient(&c.kind, &x, &k, |i, v| {
                out[(row, i)] += v * self.scale[i] * inv;
            });
        }
    }

    fn hessian(&self, z: &[f64], w_f: f64, w_c: &[f64], out: &mut DMatrix<f64>) {
        let x = self.pb.to_natural(z);
        let k = self.pb.knots(&x);
        let mut acc = HessAcc {
            out,
            scale: &self.scale,
            w: w_f * self.pb.obj_scale,
        };
        if acc.w != 0.0 {
            self.pb.objective_hessian(&x, &mut acc);
        }
        for (c, &w) in self.pb.constraints.iter().zip(w_c) {
            if w != 0.0 {
                acc.w = w / c.scale;
                self.pb.constraint_hessian(&c.kind, &x, &k, &mut acc);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{enumerate_window_plans, reachable_time_bounds};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference_problem(jerk: Option<f64>) -> ParametricProblem {
        let mut sc = Scenario::reference_two_light_corridor();
        sc.options.jerk_limit = jerk;
        sc.options.initial_accel = Some(0.3);
        let b = reachable_time_bounds(&sc);
        let plan = enumerate_window_plans(&sc, &b, 64)[0].clone();
        build_problem(&sc, &plan).unwrap()
    }

    fn random_point(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect()
    }

    #[test]
    fn segment_counts_and_crossing_knots() {
        let mut sc = Scenario::reference_two_light_corridor();
        let pb = reference_problem(None);
        assert_eq!(pb.num_segments(), 7);
        assert_eq!(pb.crossing_knots(), &[4, 7]);

        sc.segments.truncate(1);
        let plan = WindowPlan {
            k: vec![0],
            windows: vec![Window::new(14.0, 20.0)],
            lower_bound: 14.0,
        };
        let pb = build_problem(&sc, &plan).unwrap();
        assert_eq!(pb.num_segments(), 3);
        assert_eq!(pb.crossing_knots(), &[3]);

        let seg = sc.segments[0];
        sc.segments = vec![seg; 3];
        let plan = WindowPlan {
            k: vec![0, 1, 1],
            windows: vec![Window::new(0.0, 20.0); 3],
            lower_bound: 0.0,
        };
        let pb = build_problem(&sc, &plan).unwrap();
        assert_eq!(pb.num_segments(), 11);
        assert_eq!(pb.crossing_knots(), &[4, 8, 11]);
    }

    #[test]
    fn malformed_plan_is_rejected() {
        let sc = Scenario::reference_two_light_corridor();
        let plan = WindowPlan {
            k: vec![0],
            windows: vec![],
            lower_bound: 0.0,
        };
        assert!(matches!(
            build_problem(&sc, &plan),
            Err(BuildError::PlanLength { .. })
        ));
    }

    #[test]
    fn reduced_single_form_drops_sign_constraints() {
        let mut sc = Scenario::reference_two_light_corridor();
        sc.segments.truncate(1);
        let plan = WindowPlan {
            k: vec![0],
            windows: vec![Window::new(14.0, 20.0)],
            lower_bound: 14.0,
        };
        let full = build_problem(&sc, &plan).unwrap();
        let opts = BuildOptions {
            reduced_single: true,
            ..BuildOptions::default()
        };
        let reduced = build_problem_with(&sc, &plan, &opts).unwrap();
        assert_eq!(full.num_inequalities() - reduced.num_inequalities(), 3);
    }

    #[test]
    fn triplet_round_trip() {
        let x = vec![0.5, -0.1, 3.0, 0.2, 0.0, 0.0, -0.3, 0.05, 7.0];
        let dv = DecisionVector::from_internal(12.0, &x);
        assert_eq!(dv.triplets[2].tau, 22.0);
        let back = dv.to_internal();
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn knot_states_match_profile_evaluation() {
        let pb = reference_problem(None);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut x = random_point(21, &mut rng);
        for r in 0..7 {
            x[3 * r + 2] = x[3 * r + 2].abs() * 6.0;
        }
        let k = pb.knots(&x);
        let prof = profile_from_internal(0.0, &x);
        let states = prof.knot_states(crate::kinematics::VehicleState::new(0.0, 0.0, 0.0));
        for (i, s) in states.iter().enumerate() {
            assert!((s.x - k.x[i]).abs() < 1e-9 * (1.0 + s.x.abs()));
            assert!((s.v - k.v[i]).abs() < 1e-9 * (1.0 + s.v.abs()));
        }
        let e = prof.energy(crate::kinematics::VehicleState::new(0.0, 0.0, 0.0));
        let w = pb.weights();
        let expect = w.rho_t * k.t[7] + w.rho_u * e;
        assert!((pb.objective_natural(&x) - expect).abs() < 1e-12 * expect.abs().max(1.0));
    }

    /// Central differences of the solver-unit functions against the analytic
    /// gradient, Jacobian and Hessians.
    #[test]
    fn derivatives_match_finite_differences() {
        let pb = reference_problem(Some(1.0));
        let nlp = Scaled::new(&pb);
        let n = nlp.dim();
        let m = nlp.num_constraints();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let z = random_point(n, &mut rng);
            let eps = 1e-6;

            let mut g = vec![0.0; n];
            nlp.gradient(&z, &mut g);
            let mut jac = DMatrix::zeros(m, n);
            nlp.jacobian(&z, &mut jac);
            let mut cp = vec![0.0; m];
            let mut cm = vec![0.0; m];
            for i in 0..n {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[i] += eps;
                zm[i] -= eps;
                let fd = (nlp.objective(&zp) - nlp.objective(&zm)) / (2.0 * eps);
                assert!((fd - g[i]).abs() < 1e-6 * (1.0 + fd.abs()), "grad {i}: {fd} vs {}", g[i]);
                nlp.constraints(&zp, &mut cp);
                nlp.constraints(&zm, &mut cm);
                for j in 0..m {
                    let fd = (cp[j] - cm[j]) / (2.0 * eps);
                    assert!(
                        (fd - jac[(j, i)]).abs() < 1e-6 * (1.0 + fd.abs()),
                        "jac ({j},{i}): {fd} vs {}",
                        jac[(j, i)]
                    );
                }
            }

            // Hessian of a random weighted Lagrangian against differences of
            // the matching gradient combination.
            let w_f = rng.gen_range(0.5..2.0);
            let w_c: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lag_grad = |z: &[f64]| -> Vec<f64> {
                let mut g = vec![0.0; n];
                nlp.gradient(z, &mut g);
                let mut jac = DMatrix::zeros(m, n);
                nlp.jacobian(z, &mut jac);
                (0..n)
                    .map(|i| w_f * g[i] + (0..m).map(|j| w_c[j] * jac[(j, i)]).sum::<f64>())
                    .collect()
            };
            let mut hess = DMatrix::zeros(n, n);
            nlp.hessian(&z, w_f, &w_c, &mut hess);
            for i in 0..n {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[i] += eps;
                zm[i] -= eps;
                let (gp, gm) = (lag_grad(&zp), lag_grad(&zm));
                for r in 0..n {
                    let fd = (gp[r] - gm[r]) / (2.0 * eps);
                    assert!(
                        (fd - hess[(r, i)]).abs() < 1e-5 * (1.0 + fd.abs()),
                        "hess ({r},{i}): {fd} vs {}",
                        hess[(r, i)]
                    );
                }
            }
        }
    }

    #[test]
    fn zero_duration_segment_is_neutral() {
        let pb = reference_problem(None);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = random_point(21, &mut rng);
        for r in 0..7 {
            x[3 * r + 2] = x[3 * r + 2].abs() * 6.0;
        }
        x[3 * 5 + 2] = 0.0;
        let k = pb.knots(&x);
        assert_eq!(k.x[5], k.x[6]);
        assert_eq!(k.v[5], k.v[6]);
        // Changing the degenerate segment's jerk touches nothing but its own
        // bounds.
        let mut y = x.clone();
        y[3 * 5 + 1] += 0.7;
        assert_eq!(pb.objective_natural(&x), pb.objective_natural(&y));
    }
}
