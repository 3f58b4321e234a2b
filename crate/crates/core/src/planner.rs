//! Reachable arrival-time bounds and enumeration of green-window plans.

use serde::{Deserialize, Serialize};

use crate::scenario::{Scenario, Window};

pub const DEFAULT_PLAN_CAP: usize = 64;

/// Earliest and latest arrival at each stop line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeBounds {
    pub t_min: Vec<f64>,
    pub t_max: Vec<f64>,
}

/// One green interval per intersection.
///
/// `windows[i]` is the `k[i]`-th green window of light `i`, clipped to the
/// arrival times reachable given the earlier choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowPlan {
    pub k: Vec<u32>,
    pub windows: Vec<Window>,
    /// Earliest reachable crossing time of the last intersection.
    pub lower_bound: f64,
}

impl WindowPlan {
    /// Greedy earliest-selection pass: picks the earliest admissible time in
    /// each window and checks it never has to move backwards.
    pub fn admits_nondecreasing_selection(&self) -> bool {
        let mut t = f64::NEG_INFINITY;
        for w in &self.windows {
            if w.is_empty() {
                return false;
            }
            t = t.max(w.start);
            if t > w.end {
                return false;
            }
        }
        true
    }
}

/// Distance covered and time taken to move from `v0` to `v1` at constant `u`.
fn ramp(v0: f64, v1: f64, u: f64) -> (f64, f64) {
    let t = (v1 - v0) / u;
    (0.5 * (v0 + v1) * t, t)
}

/// Time to cover `dist` starting at `v0` with constant `u` until speed `v1`,
/// then cruising at `v1`.
pub(crate) fn ramp_then_cruise(v0: f64, v1: f64, u: f64, dist: f64) -> f64 {
    if v0 == v1 {
        return dist / v1;
    }
    let (d_ramp, t_ramp) = ramp(v0, v1, u);
    if dist >= d_ramp {
        return t_ramp + (dist - d_ramp) / v1;
    }
    // v0·t + u·t²/2 = dist, the root reached first.
    let disc = (v0 * v0 + 2.0 * u * dist).max(0.0);
    (disc.sqrt() - v0) / u
}

/// Bang-cruise bounds: earliest arrival accelerates at `u_max` to `v_max` and
/// cruises; latest arrival moves to `v_min` (accelerating at `u_max` from
/// below, braking at `u_min` from above) and cruises there.
pub fn reachable_time_bounds(sc: &Scenario) -> TimeBounds {
    let lim = &sc.limits;
    let t0 = sc.initial.t;
    let v0 = sc.initial.v;
    let cum = sc.cumulative_lengths();
    let t_min = cum
        .iter()
        .map(|&d| t0 + ramp_then_cruise(v0, lim.v_max, lim.u_max, d))
        .collect();
    let t_max = cum
        .iter()
        .map(|&d| {
            let u = if v0 < lim.v_min { lim.u_max } else { lim.u_min };
            t0 + ramp_then_cruise(v0, lim.v_min, u, d)
        })
        .collect();
    TimeBounds { t_min, t_max }
}

/// All window plans consistent with `bounds`, earliest-finishing first and
/// then lexicographic in `k`, truncated to `cap`.
///
/// Consecutive crossings are at least `l/v_max` and at most `l/v_min` apart.
pub fn enumerate_window_plans(sc: &Scenario, bounds: &TimeBounds, cap: usize) -> Vec<WindowPlan> {
    let mut plans = Vec::new();
    let mut k = Vec::with_capacity(sc.num_intersections());
    let mut windows = Vec::with_capacity(sc.num_intersections());
    let reach = Window::new(bounds.t_min[0], bounds.t_max[0]);
    dfs(sc, bounds, 0, reach, &mut k, &mut windows, &mut plans);
    plans.sort_by(|a, b| {
        a.lower_bound
            .total_cmp(&b.lower_bound)
            .then_with(|| a.k.cmp(&b.k))
    });
    plans.truncate(cap);
    plans
}

fn dfs(
    sc: &Scenario,
    bounds: &TimeBounds,
    i: usize,
    reach: Window,
    k: &mut Vec<u32>,
    windows: &mut Vec<Window>,
    out: &mut Vec<WindowPlan>,
) {
    let n = sc.num_intersections();
    let reach = reach.intersect(&Window::new(bounds.t_min[i], bounds.t_max[i]));
    if reach.is_empty() {
        return;
    }
    let period = sc.segments[i].light.period;
    let k_lo = (reach.start / period).floor().max(0.0) as u32;
    let k_hi = (reach.end / period).floor().max(0.0) as u32;
    for ki in k_lo..=k_hi {
        let w = sc.crossing_window(i, ki).intersect(&reach);
        if w.is_empty() {
            continue;
        }
        k.push(ki);
        windows.push(w);
        if i + 1 == n {
            out.push(WindowPlan {
                k: k.clone(),
                windows: windows.clone(),
                lower_bound: w.start,
            });
        } else {
            let l = sc.segments[i + 1].length;
            let next = Window::new(
                w.start + l / sc.limits.v_max,
                w.end + l / sc.limits.v_min,
            );
            dfs(sc, bounds, i + 1, next, k, windows, out);
        }
        k.pop();
        windows.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{RoadSegment, TrafficLight, VehicleLimits};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn reference_corridor_bounds() {
        let sc = Scenario::reference_two_light_corridor();
        let b = reachable_time_bounds(&sc);
        assert!(close(b.t_min[0], 14.0, 1e-12));
        assert!(close(b.t_min[1], 24.0, 1e-12));
        // 1.112 s ramp over 1.546 m then cruise at 2.78 m/s.
        let ramp_d = 2.78 * 2.78 / 5.0;
        assert!(close(b.t_max[0], 1.112 + (200.0 - ramp_d) / 2.78, 1e-9));
        assert!(close(b.t_max[0], 72.5, 0.05));
        assert!(close(b.t_max[1], 144.44, 0.01));
    }

    #[test]
    fn short_segment_never_reaches_cruise() {
        let mut sc = Scenario::reference_two_light_corridor();
        sc.segments[0].length = 20.0;
        let b = reachable_time_bounds(&sc);
        // 20 = 1.25·t²
        assert!(close(b.t_min[0], 4.0, 1e-12));
    }

    #[test]
    fn braking_toward_v_min_from_fast_start() {
        let mut sc = Scenario::reference_two_light_corridor();
        sc.initial.v = 10.0;
        let b = reachable_time_bounds(&sc);
        let t_brake = (10.0 - 2.78) / 2.9;
        let d_brake = (100.0 - 2.78 * 2.78) / 5.8;
        assert!(close(b.t_max[0], t_brake + (200.0 - d_brake) / 2.78, 1e-9));
    }

    #[test]
    fn reference_corridor_plans() {
        let sc = Scenario::reference_two_light_corridor();
        let b = reachable_time_bounds(&sc);
        let plans = enumerate_window_plans(&sc, &b, DEFAULT_PLAN_CAP);
        assert!(plans.iter().any(|p| p.k == vec![0, 1]));
        for p in &plans {
            assert!(p.k[0] <= 1);
            assert!((1..=3).contains(&p.k[1]));
            assert!(p.admits_nondecreasing_selection());
        }
        assert_eq!(plans[0].k, vec![0, 1]);
        assert_eq!(plans[0].lower_bound, 40.0);
        for w in plans.windows(2) {
            assert!(w[0].lower_bound <= w[1].lower_bound);
        }
    }

    #[test]
    fn wide_green_gives_single_plan() {
        let sc = Scenario::new(
            vec![RoadSegment::new(100.0, TrafficLight::new(1000.0, 0.9))],
            VehicleLimits {
                v_min: 5.0,
                v_max: 20.0,
                u_min: -3.0,
                u_max: 2.0,
            },
            0.0,
            10.0,
        );
        let b = reachable_time_bounds(&sc);
        let plans = enumerate_window_plans(&sc, &b, DEFAULT_PLAN_CAP);
        assert_eq!(plans.len(), 1);
        assert_eq!(plans[0].k, vec![0]);
    }

    #[test]
    fn red_over_the_whole_reachable_range_is_infeasible() {
        // Reachable arrival is about [5.3, 6.7] s while the light is red over [2, 10].
        let sc = Scenario::new(
            vec![RoadSegment::new(100.0, TrafficLight::new(10.0, 0.2))],
            VehicleLimits {
                v_min: 15.0,
                v_max: 20.0,
                u_min: -3.0,
                u_max: 2.0,
            },
            0.0,
            15.0,
        );
        let b = reachable_time_bounds(&sc);
        assert!(enumerate_window_plans(&sc, &b, DEFAULT_PLAN_CAP).is_empty());
    }

    #[test]
    fn cap_truncates_after_ordering() {
        let sc = Scenario::reference_two_light_corridor();
        let b = reachable_time_bounds(&sc);
        let all = enumerate_window_plans(&sc, &b, usize::MAX);
        let one = enumerate_window_plans(&sc, &b, 1);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0], all[0]);
    }
}
