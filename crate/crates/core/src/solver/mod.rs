//! Parametric eco-driving programs: build, multistart solve, window-plan
//! search, the per-intersection sequential baseline, and verification.

mod guess;
mod problem;
mod verify;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::AccelProfile;
use crate::nlp::{self, AlmSettings};
use crate::planner::{self, WindowPlan};
use crate::scenario::{self, Scenario, ScenarioError, Violation, WeightSpec, Weights, Window};

pub use guess::initial_guess;
pub use problem::{
    build_problem, build_problem_with, BuildError, BuildOptions, DecisionVector, ParametricProblem, Triplet,
    DEFAULT_PER_LEG,
};
pub use verify::{verify_solution, StructuralReport, DENSE_SPEED_DT};

use problem::Scaled;

/// Segments shorter than this are ignored when measuring acceleration jumps.
pub const DEGENERATE_SEGMENT: f64 = 1e-6;

/// Largest natural violation after the first pass for which the sign-pinned
/// second pass is still attempted.
const NEAR_FEASIBLE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Largest accepted constraint violation in natural units.
    pub feas_tol: f64,
    /// Largest accepted Lagrangian-gradient norm in solver units.
    pub stat_tol: f64,
    pub multistart: usize,
    /// Outer augmented-Lagrangian iterations per start.
    pub max_iterations: usize,
    /// Overrides the scenario's jerk limit when set.
    pub jerk_limit: Option<f64>,
    /// Overrides the scenario's initial acceleration when set.
    pub initial_accel: Option<f64>,
    pub seed: u64,
    pub plans_cap: usize,
    pub per_leg: usize,
    pub reduced_single: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-6,
            stat_tol: 1e-4,
            multistart: 8,
            max_iterations: 30,
            jerk_limit: None,
            initial_accel: None,
            seed: 0,
            plans_cap: planner::DEFAULT_PLAN_CAP,
            per_leg: DEFAULT_PER_LEG,
            reduced_single: false,
        }
    }
}

impl SolverOptions {
    pub fn build_options(&self, sc: &Scenario) -> BuildOptions {
        BuildOptions {
            per_leg: self.per_leg,
            reduced_single: self.reduced_single,
            jerk_limit: self.jerk_limit.or(sc.options.jerk_limit),
            initial_accel: self.initial_accel.or(sc.options.initial_accel),
        }
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid scenario: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Validation(Vec<Violation>),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentCost {
    /// Travel time over the road segment.
    pub j_t: f64,
    /// `∫u² dt` over the road segment.
    pub j_u: f64,
    pub j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub j_t: f64,
    pub j_u: f64,
    pub j: f64,
    pub per_segment: Vec<SegmentCost>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// Largest violation over every constraint, natural units.
    pub max_violation: f64,
    pub max_position_error: f64,
    /// Largest `|u(τ⁺) − u(τ⁻)|` between consecutive non-degenerate segments.
    pub max_knot_jump: f64,
    pub terminal_accel: f64,
    /// Lagrangian-gradient norm in solver units; zero when not from a solve.
    pub stationarity: f64,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub profile: AccelProfile,
    pub decision: DecisionVector,
    pub crossing_times: Vec<f64>,
    pub plan: WindowPlan,
    pub weights: Weights,
    pub costs: CostBreakdown,
    pub residuals: ResidualReport,
    /// Multistart variant that produced the point.
    pub start: usize,
}

impl Solution {
    pub fn final_time(&self) -> f64 {
        self.profile.end_time()
    }
}

pub(crate) fn natural_violation(pb: &ParametricProblem, x: &[f64]) -> (f64, f64) {
    let k = pb.knots(x);
    let mut worst: f64 = 0.0;
    let mut pos: f64 = 0.0;
    for (j, c) in pb.constraints.iter().enumerate() {
        let v = pb.constraint_natural(&c.kind, x, &k);
        if j < pb.num_eq {
            worst = worst.max(v.abs());
            if matches!(c.kind, problem::Kind::Position { .. }) {
                pos = pos.max(v.abs());
            }
        } else if matches!(c.kind, problem::Kind::Sign { .. }) {
            // Report the size of the sign change in acceleration units.
            worst = worst.max((-v).max(0.0).sqrt());
        } else {
            worst = worst.max(-v);
        }
    }
    (worst, pos)
}

/// Largest sign change inside a segment, in acceleration units.
fn sign_violation(pb: &ParametricProblem, x: &[f64]) -> f64 {
    let k = pb.knots(x);
    pb.constraints
        .iter()
        .filter(|c| matches!(c.kind, problem::Kind::Sign { .. }))
        .map(|c| (-pb.constraint_natural(&c.kind, x, &k)).max(0.0).sqrt())
        .fold(0.0, f64::max)
}

/// Travel-time and energy split over the road segments.
pub fn cost_breakdown(profile: &AccelProfile, t0: f64, crossings: &[f64], w: Weights) -> CostBreakdown {
    let mut per_segment = Vec::with_capacity(crossings.len());
    let mut prev = t0;
    for &t in crossings {
        let j_t = t - prev;
        let j_u = profile.energy_between(prev, t);
        per_segment.push(SegmentCost {
            j_t,
            j_u,
            j: w.rho_t * j_t + w.rho_u * j_u,
        });
        prev = t;
    }
    let j_t = profile.end_time() - t0;
    let j_u = profile.energy_between(t0, profile.end_time());
    CostBreakdown {
        j_t,
        j_u,
        j: w.rho_t * j_t + w.rho_u * j_u,
        per_segment,
    }
}

/// Acceleration jumps and terminal acceleration, skipping degenerate segments.
pub fn knot_jumps(profile: &AccelProfile) -> (f64, f64) {
    let live: Vec<_> = profile
        .segments()
        .iter()
        .filter(|s| s.duration() > DEGENERATE_SEGMENT)
        .collect();
    let jump = live
        .windows(2)
        .map(|w| (w[1].start_accel() - w[0].end_accel()).abs())
        .fold(0.0, f64::max);
    let terminal = live.last().map_or(0.0, |s| s.end_accel().abs());
    (jump, terminal)
}

fn assemble(pb: &ParametricProblem, x: &[f64], start: usize, stationarity: f64, stat_tol: f64) -> Solution {
    let t0 = pb.scenario().initial.t;
    let k = pb.knots(x);
    let profile = problem::profile_from_internal(t0, x);
    let crossing_times: Vec<f64> = pb.crossing_knots().iter().map(|&j| t0 + k.t[j]).collect();
    let (max_violation, max_position_error) = natural_violation(pb, x);
    let (max_knot_jump, terminal_accel) = knot_jumps(&profile);
    let mut plan = pb.plan().clone();
    plan.windows = pb.windows().to_vec();
    Solution {
        costs: cost_breakdown(&profile, t0, &crossing_times, pb.weights()),
        decision: DecisionVector::from_internal(t0, x),
        profile,
        crossing_times,
        plan,
        weights: pb.weights(),
        residuals: ResidualReport {
            max_violation,
            max_position_error,
            max_knot_jump,
            terminal_accel,
            stationarity,
            certified: stationarity <= stat_tol,
        },
        start,
    }
}

/// Better by cost, then earlier finish, then lexicographically smaller plan.
fn better(a: &Solution, b: &Solution) -> bool {
    let tol = 1e-12 * a.costs.j.abs().max(b.costs.j.abs()).max(1e-300);
    if (a.costs.j - b.costs.j).abs() > tol {
        return a.costs.j < b.costs.j;
    }
    let (ta, tb) = (a.final_time(), b.final_time());
    if (ta - tb).abs() > 1e-9 {
        return ta < tb;
    }
    a.plan.k < b.plan.k
}

/// Multistart local solve of one program.
pub fn solve(pb: &ParametricProblem, opts: &SolverOptions) -> Result<Solution, SolveError> {
    let warm = if opts.multistart > 1 && pb.scenario().num_intersections() > 1 {
        sequential_legs(pb.scenario(), opts)
            .ok()
            .and_then(|legs| guess::embed_legs(pb, &legs))
    } else {
        None
    };
    solve_from(pb, opts, warm.as_deref())
}

fn solve_from(pb: &ParametricProblem, opts: &SolverOptions, warm: Option<&[f64]>) -> Result<Solution, SolveError> {
    let nlp = Scaled::new(pb);
    let settings = AlmSettings {
        max_outer: opts.max_iterations,
        max_inner: 150,
        ..AlmSettings::default()
    };
    let mut best: Option<Solution> = None;
    let mut numerical = 0;
    for variant in 0..opts.multistart.max(1) {
        let x0 = guess::guess_internal(pb, variant, opts.seed, warm);
        let r = nlp::solve(&nlp, &pb.to_scaled(&x0), &settings);
        if r.numerical_failure {
            numerical += 1;
            continue;
        }
        let mut x = pb.to_natural(&r.x);
        let mut stationarity = r.stationarity;
        let (viol, _) = natural_violation(pb, &x);
        let feasible = viol <= opts.feas_tol;
        // Zero-acceleration segments leave `p·q ≥ 0` without multipliers
        // and let tiny sign changes through. Re-solve with every segment
        // pinned to its current sign, where the constraints are linear.
        if viol <= NEAR_FEASIBLE && (stationarity > opts.stat_tol || sign_violation(pb, &x) > 1e-9) {
            let pb2 = pb.with_sign_branches(&pb.sign_pattern(&x));
            let r2 = nlp::solve(&Scaled::new(&pb2), &r.x, &settings);
            let x2 = pb.to_natural(&r2.x);
            let f1 = pb.objective_natural(&x);
            let f2 = pb.objective_natural(&x2);
            if !r2.numerical_failure
                && natural_violation(pb, &x2).0 <= opts.feas_tol
                && (!feasible || f2 <= f1 + 1e-6 * f1.abs().max(1e-12))
            {
                x = x2;
                stationarity = r2.stationarity;
            }
        }
        if !(natural_violation(pb, &x).0 <= opts.feas_tol) {
            continue;
        }
        let cand = assemble(pb, &x, variant, stationarity, opts.stat_tol);
        let replace = match &best {
            None => true,
            // A certified point always beats an uncertified one.
            Some(b) if cand.residuals.certified != b.residuals.certified => cand.residuals.certified,
            Some(b) => better(&cand, b),
        };
        if replace {
            best = Some(cand);
        }
    }
    match best {
        Some(s) => Ok(s),
        None if numerical == opts.multistart.max(1) => Err(SolveError::NumericalFailure(format!(
            "non-finite values from every start of plan {:?}",
            pb.plan().k
        ))),
        None => Err(SolveError::Infeasible(format!(
            "no start reached feasibility for plan {:?}",
            pb.plan().k
        ))),
    }
}

fn checked(sc: &Scenario) -> Result<(), SolveError> {
    scenario::validate(sc).map_err(SolveError::Validation)?;
    sc.resolved_weights()?;
    Ok(())
}

/// Joint optimum over all window plans.
///
/// Plans are tried earliest-finishing first and skipped once their time cost
/// alone exceeds the incumbent. The chained per-intersection solution seeds
/// every plan and is kept as a candidate itself, so the result never costs
/// more than [`solve_sequential`].
pub fn solve_best(sc: &Scenario, opts: &SolverOptions) -> Result<Solution, SolveError> {
    checked(sc)?;
    let seq = if sc.num_intersections() > 1 {
        sequential(sc, opts).ok()
    } else {
        None
    };
    best_over_plans(sc, opts, seq.as_ref())
}

fn best_over_plans(sc: &Scenario, opts: &SolverOptions, seq: Option<&Sequential>) -> Result<Solution, SolveError> {
    let weights = sc.resolved_weights()?;
    let bounds = planner::reachable_time_bounds(sc);
    let plans = planner::enumerate_window_plans(sc, &bounds, opts.plans_cap);
    let build = opts.build_options(sc);
    let t0 = sc.initial.t;
    let mut best: Option<Solution> = None;
    let mut last_err = None;
    for plan in &plans {
        if let Some(b) = &best {
            if weights.rho_t * (plan.lower_bound - t0) > b.costs.j {
                break;
            }
        }
        let pb = build_problem_with(sc, plan, &build)?;
        let warm = seq.and_then(|s| guess::embed_legs(&pb, &s.legs));
        match solve_from(&pb, opts, warm.as_deref()) {
            Ok(sol) => {
                if best.as_ref().is_none_or(|b| better(&sol, b)) {
                    best = Some(sol);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    if let Some(s) = seq {
        if let Some(fallback) = &s.embedded {
            if best.as_ref().is_none_or(|b| fallback.costs.j < b.costs.j) {
                best = Some(fallback.clone());
            }
        }
    }
    match best {
        Some(s) => Ok(s),
        None if plans.is_empty() => Err(SolveError::Infeasible("no stop-free window plan exists".into())),
        None => Err(last_err.unwrap_or_else(|| SolveError::Infeasible("all window plans failed".into()))),
    }
}

/// Chained per-intersection result in internal layout.
struct Sequential {
    legs: Vec<f64>,
    solution: Solution,
    /// The same trajectory as a point of the joint program.
    embedded: Option<Solution>,
}

/// Per-intersection chain as internal `(p, a, h)` values, three segments per
/// leg.
pub(crate) fn sequential_legs(sc: &Scenario, opts: &SolverOptions) -> Result<Vec<f64>, SolveError> {
    chain_legs(sc, opts).map(|(legs, _)| legs)
}

fn chain_legs(sc: &Scenario, opts: &SolverOptions) -> Result<(Vec<f64>, Vec<Solution>), SolveError> {
    let weights = sc.resolved_weights()?;
    let jerk = opts.jerk_limit.or(sc.options.jerk_limit);
    let mut legs = Vec::with_capacity(9 * sc.num_intersections());
    let mut sols = Vec::with_capacity(sc.num_intersections());
    let mut t = sc.initial.t;
    let mut v = sc.initial.v;
    for (i, seg) in sc.segments.iter().enumerate() {
        let mut leg = Scenario::new(vec![*seg], sc.limits, t, v);
        leg.weights = WeightSpec::explicit(weights);
        leg.options.jerk_limit = jerk;
        leg.options.initial_accel = if i == 0 {
            opts.initial_accel.or(sc.options.initial_accel)
        } else {
            None
        };
        let leg_opts = SolverOptions {
            jerk_limit: None,
            initial_accel: None,
            ..*opts
        };
        let sol = best_over_plans(&leg, &leg_opts, None).map_err(|e| match e {
            SolveError::Infeasible(m) => SolveError::Infeasible(format!("segment {}: {m}", i + 1)),
            other => other,
        })?;
        legs.extend(sol.decision.to_internal());
        let end = sol
            .profile
            .knot_states(leg.initial)
            .last()
            .copied()
            .expect("profile has knots");
        t = end.t;
        v = end.v;
        sols.push(sol);
    }
    Ok((legs, sols))
}

/// The plan whose windows contain the given crossing times.
pub fn plan_for_times(sc: &Scenario, times: &[f64], tol: f64) -> Option<WindowPlan> {
    let mut k = Vec::with_capacity(times.len());
    let mut windows = Vec::with_capacity(times.len());
    for (i, &t) in times.iter().enumerate() {
        let period = sc.segments[i].light.period;
        let guess = (t / period).floor().max(0.0) as u32;
        let found = [guess, guess.saturating_sub(1), guess + 1].into_iter().find_map(|kk| {
            let w = sc.crossing_window(i, kk);
            (!w.is_empty() && t >= w.start - tol && t <= w.end + tol).then_some((kk, w))
        })?;
        k.push(found.0);
        windows.push(found.1);
    }
    Some(WindowPlan {
        lower_bound: windows.last().map_or(0.0, |w: &Window| w.start),
        k,
        windows,
    })
}

fn sequential(sc: &Scenario, opts: &SolverOptions) -> Result<Sequential, SolveError> {
    let (legs, leg_sols) = chain_legs(sc, opts)?;
    let weights = sc.resolved_weights()?;
    let t0 = sc.initial.t;
    let segs: Vec<_> = leg_sols
        .iter()
        .flat_map(|s| s.profile.segments().iter().copied())
        .collect();
    let profile = AccelProfile::new(segs).map_err(|e| SolveError::NumericalFailure(e.to_string()))?;
    let crossing_times: Vec<f64> = leg_sols.iter().map(|s| s.final_time()).collect();
    let costs = cost_breakdown(&profile, t0, &crossing_times, weights);
    let (max_knot_jump, terminal_accel) = knot_jumps(&profile);
    let mut residuals = ResidualReport {
        max_violation: leg_sols.iter().map(|s| s.residuals.max_violation).fold(0.0, f64::max),
        max_position_error: 0.0,
        max_knot_jump,
        terminal_accel,
        stationarity: leg_sols.iter().map(|s| s.residuals.stationarity).fold(0.0, f64::max),
        certified: leg_sols.iter().all(|s| s.residuals.certified),
    };
    let plan = plan_for_times(sc, &crossing_times, opts.feas_tol);
    let mut embedded = None;
    if let Some(plan) = &plan {
        let pb = build_problem_with(sc, plan, &opts.build_options(sc))?;
        if let Some(x) = guess::embed_legs(&pb, &legs) {
            let (viol, pos) = natural_violation(&pb, &x);
            residuals.max_violation = residuals.max_violation.max(viol);
            residuals.max_position_error = pos;
            if viol <= opts.feas_tol {
                embedded = Some(assemble(&pb, &x, 1, residuals.stationarity, opts.stat_tol));
            }
        }
    }
    let solution = Solution {
        decision: DecisionVector {
            t0,
            triplets: leg_sols.iter().flat_map(|s| s.decision.triplets.clone()).collect(),
        },
        profile,
        crossing_times,
        plan: plan.unwrap_or_else(|| WindowPlan {
            k: leg_sols.iter().flat_map(|s| s.plan.k.clone()).collect(),
            windows: leg_sols.iter().flat_map(|s| s.plan.windows.clone()).collect(),
            lower_bound: 0.0,
        }),
        weights,
        costs,
        residuals,
        start: 0,
    };
    Ok(Sequential {
        legs,
        solution,
        embedded,
    })
}

/// Baseline that optimizes each road segment on its own, starting from the
/// state reached at the previous stop line (absolute time kept, crossing
/// speed free). Weights are the scenario's, shared by every leg.
pub fn solve_sequential(sc: &Scenario, opts: &SolverOptions) -> Result<Solution, SolveError> {
    checked(sc)?;
    sequential(sc, opts).map(|s| s.solution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{RoadSegment, TrafficLight, VehicleLimits};

    #[test]
    fn cruising_at_top_speed_is_optimal_for_pure_time() {
        let mut sc = Scenario::new(
            vec![RoadSegment::new(100.0, TrafficLight::new(100.0, 0.5))],
            VehicleLimits {
                v_min: 5.0,
                v_max: 20.0,
                u_min: -3.0,
                u_max: 2.0,
            },
            0.0,
            20.0,
        );
        sc.weights.time_share = 1.0;
        let sol = solve_best(&sc, &SolverOptions::default()).unwrap();
        assert!((sol.crossing_times[0] - 5.0).abs() < 1e-6);
        assert!(sol.costs.j_u < 1e-10, "{}", sol.costs.j_u);
        assert!(sol.residuals.max_violation <= 1e-6);
        let w = sc.resolved_weights().unwrap();
        assert!((sol.costs.j - w.rho_t * 5.0).abs() < 1e-8);
    }

    #[test]
    fn single_intersection_best_equals_sequential() {
        let mut sc = Scenario::reference_two_light_corridor();
        sc.segments.truncate(1);
        let opts = SolverOptions::default();
        let a = solve_best(&sc, &opts).unwrap();
        let b = solve_sequential(&sc, &opts).unwrap();
        assert_eq!(a.costs.j, b.costs.j);
        assert_eq!(a.crossing_times, b.crossing_times);
    }

    #[test]
    fn plan_lookup_tolerates_rounding() {
        let sc = Scenario::reference_two_light_corridor();
        let p = plan_for_times(&sc, &[20.0 + 1e-9, 40.0 - 1e-9], 1e-6).unwrap();
        assert_eq!(p.k, vec![0, 1]);
        assert!(plan_for_times(&sc, &[25.0, 40.0], 1e-6).is_none());
    }
}

