//! Starting points for the multistart solve.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::problem::{DecisionVector, ParametricProblem};

/// Per-leg ramp-then-cruise piece list as `(p, a, h)` and the leg's end speed.
fn ramp_cruise(v_s: f64, dist: f64, dur: f64, rate: f64, u_lim: f64) -> (Vec<[f64; 3]>, f64) {
    if dur <= 0.0 {
        return (vec![[0.0, 0.0, 0.0]], v_s);
    }
    let excess = dist - v_s * dur;
    let sign = if excess >= 0.0 { 1.0 } else { -1.0 };
    let c = excess.abs();
    let mut u = rate;
    if dur * dur < 2.0 * c / u {
        u = (2.0 * c / (dur * dur)).min(u_lim.max(rate));
    }
    let disc = (dur * dur - 2.0 * c / u).max(0.0);
    let mut d = u * (dur - disc.sqrt());
    if sign < 0.0 {
        d = d.min(v_s);
    }
    let t_r = if u > 0.0 { (d / u).min(dur) } else { 0.0 };
    let v_c = v_s + sign * d;
    (
        vec![[sign * u, 0.0, t_r], [0.0, 0.0, dur - t_r]],
        v_c,
    )
}

/// Crossing-time targets picked inside each window, respecting travel time at
/// `v_max` between consecutive stop lines.
fn targets(pb: &ParametricProblem, pick: &mut dyn FnMut(usize, f64, f64) -> f64) -> Vec<f64> {
    let sc = pb.scenario();
    let plan = pb.plan();
    let mut prev = sc.initial.t;
    let mut out = Vec::with_capacity(plan.windows.len());
    for (i, w) in plan.windows.iter().enumerate() {
        let lo = w.start.max(prev + sc.segments[i].length / sc.limits.v_max);
        let hi = w.end.min(pb.windows()[i].end);
        let t = if lo <= hi { pick(i, lo, hi) } else { lo };
        out.push(t);
        prev = t;
    }
    out
}

/// Builds legs toward the target times with ramp rate `rate(i, accelerating)`
/// and distributes each leg's pieces over its segment slots.
fn trapezoid(
    pb: &ParametricProblem,
    times: &[f64],
    rate: &mut dyn FnMut(usize, bool) -> f64,
    split: &mut dyn FnMut() -> f64,
) -> Vec<f64> {
    let sc = pb.scenario();
    let lim = sc.limits;
    let n = sc.num_intersections();
    let per_leg = pb.build_options().per_leg;
    let mut x = Vec::with_capacity(3 * pb.num_segments());
    let mut v = sc.initial.v;
    let mut t = sc.initial.t;
    for i in 0..n {
        let slots = if i + 1 == n { 3 } else { per_leg };
        let dist = sc.segments[i].length;
        let dur = times[i] - t;
        let accelerating = dist >= v * dur;
        let u_lim = if accelerating { lim.u_max } else { -lim.u_min };
        let r = rate(i, accelerating).min(u_lim);
        let (mut pieces, v_end) = ramp_cruise(v, dist, dur, r, u_lim);
        // Split the cruise piece so every slot is used.
        while pieces.len() < slots {
            let last = pieces.pop().expect("non-empty");
            let f = split();
            pieces.push([last[0], last[1], last[2] * f]);
            pieces.push([last[0], last[1], last[2] * (1.0 - f)]);
        }
        for pc in pieces {
            x.extend_from_slice(&pc);
        }
        v = v_end;
        t = times[i];
    }
    x
}

pub(crate) fn variant_zero(pb: &ParametricProblem) -> Vec<f64> {
    let times = targets(pb, &mut |_, lo, hi| 0.5 * (lo + hi));
    let lim = pb.scenario().limits;
    trapezoid(
        pb,
        &times,
        &mut |_, acc| 0.5 * if acc { lim.u_max } else { -lim.u_min },
        &mut || 0.5,
    )
}

fn earliest_targets(pb: &ParametricProblem) -> Vec<f64> {
    let times = targets(pb, &mut |_, lo, _| lo);
    let lim = pb.scenario().limits;
    trapezoid(
        pb,
        &times,
        &mut |_, acc| if acc { lim.u_max } else { -lim.u_min },
        &mut || 0.5,
    )
}

fn randomized(pb: &ParametricProblem, variant: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (variant as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let lim = pb.scenario().limits;
    let times = targets(pb, &mut |_, lo, hi| lo + (hi - lo) * rng.gen::<f64>());
    let fracs: Vec<f64> = (0..64).map(|_| rng.gen_range(0.2..0.8)).collect();
    let rates: Vec<f64> = (0..64).map(|_| rng.gen_range(0.3..1.0)).collect();
    let mut fi = 0;
    let mut ri = 0;
    let mut x = trapezoid(
        pb,
        &times,
        &mut |_, acc| {
            ri += 1;
            rates[(ri - 1) % rates.len()] * if acc { lim.u_max } else { -lim.u_min }
        },
        &mut || {
            fi += 1;
            fracs[(fi - 1) % fracs.len()]
        },
    );
    let [su, sa, _] = pb.var_scale;
    for r in 0..pb.num_segments() {
        x[3 * r] += 0.1 * su * rng.gen_range(-1.0..1.0);
        x[3 * r + 1] += 0.05 * sa * rng.gen_range(-1.0..1.0);
    }
    x
}

/// Embeds a chained per-intersection solution (three segments per leg) into
/// the joint layout, padding each non-final leg with zero-duration segments
/// that hold the leg's end acceleration.
pub(crate) fn embed_legs(pb: &ParametricProblem, legs: &[f64]) -> Option<Vec<f64>> {
    let n = pb.scenario().num_intersections();
    if legs.len() != 9 * n {
        return None;
    }
    let per_leg = pb.build_options().per_leg;
    let mut x = Vec::with_capacity(3 * pb.num_segments());
    for i in 0..n {
        let leg = &legs[9 * i..9 * i + 9];
        x.extend_from_slice(leg);
        if i + 1 < n {
            let q = leg[6] + leg[7] * leg[8];
            for _ in 3..per_leg {
                x.extend_from_slice(&[q, 0.0, 0.0]);
            }
        }
    }
    Some(x)
}

/// Starting point in the internal layout. Variant 0 aims each leg at its
/// window midpoint; variant 1 uses `warm` (the chained per-intersection
/// solution) when given, or the earliest-window trapezoid otherwise; further
/// variants are seeded random perturbations.
pub(crate) fn guess_internal(
    pb: &ParametricProblem,
    variant: usize,
    seed: u64,
    warm: Option<&[f64]>,
) -> Vec<f64> {
    match variant {
        0 => variant_zero(pb),
        1 => warm
            .map(|w| w.to_vec())
            .unwrap_or_else(|| earliest_targets(pb)),
        _ => randomized(pb, variant, seed),
    }
}

/// Starting point for the multistart solve (see [`super::solve`]).
///
/// Variant 1 solves the per-intersection chain on the problem's scenario and
/// re-expresses it in the joint layout when there are several intersections.
pub fn initial_guess(pb: &ParametricProblem, variant: usize, seed: u64) -> DecisionVector {
    let warm = if variant == 1 && pb.scenario().num_intersections() > 1 {
        super::sequential_legs(pb.scenario(), &super::SolverOptions::default())
            .ok()
            .and_then(|legs| embed_legs(pb, &legs))
    } else {
        None
    };
    DecisionVector::from_internal(pb.scenario().initial.t, &guess_internal(pb, variant, seed, warm.as_deref()))
}
