//! Discretized dynamic-programming reference solver.
//!
//! The grid works in speed increments of `dv` around the initial speed, so
//! every state speed is `v0 + j·dv`. A control is held for one step of `dt`
//! and is snapped to a whole number of speed increments per step, which makes
//! the travelled distance an exact multiple of `dv·dt/2` on top of
//! `v0·t`. Positions are therefore kept exactly (as integers) and only the
//! accumulated `v0·t` term is floating point. Every grid policy is a
//! piecewise-constant acceleration within `[u_min, u_max]`, so its cost is an
//! upper bound on the continuous optimum when the continuous model has enough
//! segments to represent it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{AccelProfile, LinearSegment};
use crate::planner::{ramp_then_cruise, reachable_time_bounds};
use crate::scenario::{self, is_green, Scenario, Violation, Weights};
use crate::solver::Solution;

/// Default share of the DP cost allowed between the two solvers.
pub const DEFAULT_ALLOWANCE: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Time step (s).
    pub dt: f64,
    /// Speed step (m/s).
    pub dv: f64,
    /// Number of acceleration levels spanning `[u_min, u_max]`; always
    /// includes both ends and zero.
    pub levels: usize,
    /// Latest allowed final crossing; the planner's latest arrival when `None`.
    pub horizon: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            dt: 0.5,
            dv: 0.25,
            levels: 13,
            horizon: None,
        }
    }
}

impl GridSpec {
    /// Halves both steps.
    pub fn refined(&self) -> Self {
        Self {
            dt: 0.5 * self.dt,
            dv: 0.5 * self.dv,
            ..*self
        }
    }

    /// Acceleration levels before snapping: `u_min … 0 … u_max`, split as
    /// evenly as possible between the two signs.
    pub fn accelerations(&self, u_min: f64, u_max: f64) -> Vec<f64> {
        let neg = (self.levels - 1) / 2;
        let pos = self.levels - 1 - neg;
        let mut out: Vec<f64> = (0..neg).map(|i| u_min * (neg - i) as f64 / neg as f64).collect();
        out.push(0.0);
        out.extend((1..=pos).map(|i| u_max * i as f64 / pos as f64));
        out
    }

    /// Speed-index change per step for each level, snapped and clipped into
    /// the acceleration limits, deduplicated and sorted.
    pub fn speed_steps(&self, u_min: f64, u_max: f64) -> Vec<i32> {
        let per = self.dt / self.dv;
        let lo = (u_min * per - 1e-9).ceil() as i32;
        let hi = (u_max * per + 1e-9).floor() as i32;
        let mut steps: Vec<i32> = self
            .accelerations(u_min, u_max)
            .iter()
            .map(|u| ((u * per).round() as i32).clamp(lo, hi))
            .collect();
        steps.sort_unstable();
        steps.dedup();
        steps
    }

    fn check(&self) -> Result<(), OracleError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(OracleError::Grid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.dv > 0.0 && self.dv.is_finite()) {
            return Err(OracleError::Grid(format!("dv must be positive, got {}", self.dv)));
        }
        if self.levels < 3 {
            return Err(OracleError::Grid(format!("need at least 3 control levels, got {}", self.levels)));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid scenario: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Validation(Vec<Violation>),
    #[error(transparent)]
    Scenario(#[from] scenario::ScenarioError),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
}

/// Grid optimum with its control trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    /// `ρ_t·(t_p − t0) + ρ_u·Σ u²·Δt`.
    pub cost: f64,
    pub time_cost: f64,
    pub energy: f64,
    pub weights: Weights,
    /// Exact crossing instants of the grid trajectory.
    pub crossing_times: Vec<f64>,
    /// Acceleration held over each step; the last step ends at the final
    /// crossing and lasts `last_step`.
    pub controls: Vec<f64>,
    pub last_step: f64,
    pub start_time: f64,
    pub grid: GridSpec,
    /// Position resolution `dv·dt/2` of the grid (m).
    pub position_quantum: f64,
    /// Number of states expanded.
    pub expanded: u64,
}

impl OracleSolution {
    pub fn final_time(&self) -> f64 {
        self.crossing_times.last().copied().unwrap_or(self.start_time)
    }

    /// The control trace as a piecewise-linear profile with zero slopes.
    pub fn to_profile(&self) -> AccelProfile {
        let mut t = self.start_time;
        let n = self.controls.len();
        let segs = self
            .controls
            .iter()
            .enumerate()
            .map(|(i, &u)| {
                let h = if i + 1 == n { self.last_step } else { self.grid.dt };
                let s = LinearSegment::new(0.0, u, t, t + h);
                t += h;
                s
            })
            .collect();
        AccelProfile::new(segs).expect("contiguous by construction")
    }
}

/// Earliest time the remainder `dist` can be covered from speed `v`.
fn min_time_to_go(sc: &Scenario, v: f64, dist: f64) -> f64 {
    if dist <= 0.0 {
        return 0.0;
    }
    let v_top = sc.limits.v_max;
    if v >= v_top {
        return dist / v;
    }
    ramp_then_cruise(v, v_top, sc.limits.u_max, dist)
}

/// First `s ∈ (0, h]` with `x + v·s + u·s²/2 = target`.
fn crossing_offset(x: f64, v: f64, u: f64, target: f64, h: f64) -> f64 {
    let d = target - x;
    let s = if u.abs() < 1e-12 {
        d / v
    } else {
        let disc = (v * v + 2.0 * u * d).max(0.0);
        // Stable form of (−v + √disc)/u.
        2.0 * d / (v + disc.sqrt())
    };
    s.clamp(0.0, h)
}

fn crossing_allowed(sc: &Scenario, i: usize, t: f64) -> bool {
    let seg = &sc.segments[i];
    is_green(&seg.light, t) && seg.crossing.as_window().contains(t)
}

struct Layout {
    j_lo: i32,
    j_hi: i32,
    width: i64,
    quantum: f64,
    v0: f64,
    dt: f64,
    dv: f64,
}

impl Layout {
    fn rows(&self) -> usize {
        (self.j_hi - self.j_lo + 1) as usize
    }

    fn base(&self, n: usize) -> f64 {
        n as f64 * self.v0 * self.dt
    }

    /// Lowest position index stored at layer `n` (position zero or just below).
    fn m_lo(&self, n: usize) -> i64 {
        (-self.base(n) / self.quantum).floor() as i64 - 1
    }

    fn x(&self, n: usize, m: i64) -> f64 {
        self.base(n) + m as f64 * self.quantum
    }

    fn v(&self, j: i32) -> f64 {
        self.v0 + j as f64 * self.dv
    }

    fn cell(&self, n: usize, j: i32, m: i64) -> Option<usize> {
        let c = m - self.m_lo(n);
        (c >= 0 && c < self.width).then(|| (j - self.j_lo) as usize * self.width as usize + c as usize)
    }

    fn decode(&self, n: usize, cell: usize) -> (i32, i64) {
        let w = self.width as usize;
        ((cell / w) as i32 + self.j_lo, (cell % w) as i64 + self.m_lo(n))
    }
}

struct Terminal {
    cost: f64,
    layer: usize,
    cell: usize,
    step: i32,
    last: f64,
}

fn pack(cell: usize, step: i32) -> u64 {
    ((cell as u64) << 16) | (step as i16 as u16 as u64)
}

fn unpack(p: u64) -> (usize, i32) {
    ((p >> 16) as usize, (p & 0xffff) as u16 as i16 as i32)
}

/// Grid-optimal stop-free trajectory by forward dynamic programming over
/// (time step, speed index, position index).
///
/// Crossing a stop line requires green both at the left edge of the step and
/// at the exact crossing instant, plus any crossing restriction. Until the
/// speed first reaches `v_min` the vehicle may only speed up; afterwards it
/// stays within `[v_min, cap]` of the segment it is on (the smaller cap of
/// both segments on a step that crosses a stop line). States whose cost plus
/// a time-to-go bound cannot beat the incumbent are dropped, which is exact.
pub fn dp_solve(sc: &Scenario, grid: &GridSpec) -> Result<OracleSolution, OracleError> {
    scenario::validate(sc).map_err(OracleError::Validation)?;
    grid.check()?;
    let w = sc.resolved_weights()?;
    let lim = sc.limits;
    let t0 = sc.initial.t;
    let v0 = sc.initial.v;
    let cum = sc.cumulative_lengths();
    let n_int = cum.len();
    let total = sc.total_length();
    let horizon = grid
        .horizon
        .unwrap_or_else(|| *reachable_time_bounds(sc).t_max.last().expect("validated: N ≥ 1"));
    let steps = grid.speed_steps(lim.u_min, lim.u_max);
    let quantum = 0.5 * grid.dv * grid.dt;
    let j_of = |v: f64, up: bool| {
        let r = (v - v0) / grid.dv;
        if up {
            (r - 1e-9).ceil() as i32
        } else {
            (r + 1e-9).floor() as i32
        }
    };
    let j_vmin = j_of(lim.v_min, true);
    let layout = Layout {
        j_lo: j_vmin.min(0),
        j_hi: j_of(lim.v_max, false).max(0),
        width: (total / quantum).ceil() as i64 + 4,
        quantum,
        v0,
        dt: grid.dt,
        dv: grid.dv,
    };
    let caps: Vec<i32> = (0..n_int).map(|i| j_of(sc.speed_cap(i), false)).collect();
    let leg_of = |x: f64| cum.iter().position(|&c| x < c).unwrap_or(n_int - 1);

    let size = layout.rows() * layout.width as usize;
    let mut cur = vec![f64::INFINITY; size];
    let mut next = vec![f64::INFINITY; size];
    let mut next_step = vec![0i32; size];
    let start = layout.cell(0, 0, 0).expect("origin on grid");
    cur[start] = 0.0;
    let mut live = vec![start];
    let mut back: Vec<Vec<u64>> = vec![vec![pack(start, 0)]];
    let mut best: Option<Terminal> = None;
    let mut expanded = 0u64;

    let mut n = 0usize;
    loop {
        let t = t0 + n as f64 * grid.dt;
        let incumbent = best.as_ref().map_or(f64::INFINITY, |b| b.cost);
        if live.is_empty() || t > horizon || w.rho_t * (t - t0) >= incumbent {
            break;
        }
        let mut touched = Vec::new();
        for &cell in &live {
            let energy = cur[cell];
            let (j, m) = layout.decode(n, cell);
            let x = layout.x(n, m);
            let v = layout.v(j);
            let leg = leg_of(x);
            expanded += 1;
            for &dj in &steps {
                let j2 = j + dj;
                if j2 < layout.j_lo || layout.v(j2) < 0.0 {
                    continue;
                }
                // Below v_min the speed may only rise.
                if j < j_vmin && dj <= 0 {
                    continue;
                }
                if j >= j_vmin && j2 < j_vmin {
                    continue;
                }
                let v2 = layout.v(j2);
                let u = dj as f64 * grid.dv / grid.dt;
                let m2 = m + (j + j2) as i64;
                let x2 = layout.x(n + 1, m2);
                let leg2 = leg_of(x2);
                let crosses_final = x2 >= total - 1e-9 * total.max(1.0);
                let cap = if crosses_final {
                    caps[leg]
                } else {
                    caps[leg..=leg2].iter().copied().min().expect("non-empty")
                };
                if j2 > cap || (leg2 != leg && j > cap) {
                    continue;
                }
                // Every stop line passed during this step.
                let mut ok = true;
                let mut last = grid.dt;
                for (i, &c) in cum.iter().enumerate().skip(leg) {
                    if c > x2 + 1e-9 * c.max(1.0) || (i + 1 < n_int && c > x2) {
                        break;
                    }
                    let s = crossing_offset(x, v, u, c, grid.dt);
                    if !is_green(&sc.segments[i].light, t) || !crossing_allowed(sc, i, t + s) {
                        ok = false;
                        break;
                    }
                    last = s;
                }
                if !ok {
                    continue;
                }
                if crosses_final {
                    let cost = energy + w.rho_u * u * u * last + w.rho_t * (t + last - t0);
                    if cost < best.as_ref().map_or(f64::INFINITY, |b| b.cost) {
                        best = Some(Terminal {
                            cost,
                            layer: n,
                            cell,
                            step: dj,
                            last,
                        });
                    }
                    continue;
                }
                let e2 = energy + w.rho_u * u * u * grid.dt;
                let bound = e2 + w.rho_t * (t + grid.dt - t0 + min_time_to_go(sc, v2, total - x2));
                if bound >= best.as_ref().map_or(f64::INFINITY, |b| b.cost) {
                    continue;
                }
                let Some(c2) = layout.cell(n + 1, j2, m2) else {
                    continue;
                };
                if e2 < next[c2] {
                    if next[c2] == f64::INFINITY {
                        touched.push(c2);
                    }
                    next[c2] = e2;
                    next_step[c2] = dj;
                }
            }
        }
        for &c in &live {
            cur[c] = f64::INFINITY;
        }
        // Late incumbents may have made some fresh states hopeless; they are
        // filtered on expansion by the same bound.
        touched.sort_unstable();
        let packed: Vec<u64> = touched.iter().map(|&c| pack(c, next_step[c])).collect();
        std::mem::swap(&mut cur, &mut next);
        live = touched;
        back.push(packed);
        n += 1;
    }

    let Some(term) = best else {
        return Err(OracleError::Infeasible(format!(
            "no grid trajectory crosses all {n_int} lights on green by t = {horizon:.3}"
        )));
    };

    // Walk the back pointers to recover the control sequence.
    let mut controls_idx = vec![term.step];
    let mut cell = term.cell;
    for layer in (1..=term.layer).rev() {
        let row = &back[layer];
        let pos = row
            .binary_search_by_key(&cell, |&p| unpack(p).0)
            .expect("back pointer present");
        let (_, dj) = unpack(row[pos]);
        let (j, m) = layout.decode(layer, cell);
        let jp = j - dj;
        let mp = m - (j + jp) as i64;
        controls_idx.push(dj);
        cell = layout.cell(layer - 1, jp, mp).expect("parent on grid");
    }
    controls_idx.reverse();
    let controls: Vec<f64> = controls_idx.iter().map(|&dj| dj as f64 * grid.dv / grid.dt).collect();

    // Replay for crossing instants and the cost split.
    let mut crossing_times = Vec::with_capacity(n_int);
    let mut energy = 0.0;
    let mut x = 0.0;
    let mut v = v0;
    let mut t = t0;
    for (k, &u) in controls.iter().enumerate() {
        let h = if k + 1 == controls.len() { term.last } else { grid.dt };
        let x2 = x + v * grid.dt + 0.5 * u * grid.dt * grid.dt;
        while crossing_times.len() < n_int && cum[crossing_times.len()] <= x2 + 1e-9 * total.max(1.0) {
            let c = cum[crossing_times.len()];
            if k + 1 < controls.len() && c > x2 {
                break;
            }
            crossing_times.push(t + crossing_offset(x, v, u, c, grid.dt));
        }
        energy += u * u * h;
        x = x2;
        v += u * grid.dt;
        t += grid.dt;
    }
    let t_p = crossing_times.last().copied().unwrap_or(t0);
    Ok(OracleSolution {
        cost: term.cost,
        time_cost: t_p - t0,
        energy,
        weights: w,
        crossing_times,
        controls,
        last_step: term.last,
        start_time: t0,
        grid: *grid,
        position_quantum: quantum,
        expanded,
    })
}

/// Side-by-side numbers of a continuous solution and a grid solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub nlp_cost: f64,
    pub dp_cost: f64,
    /// `nlp_cost − dp_cost`; negative when the continuous optimum is cheaper.
    pub cost_difference: f64,
    /// `t_i(nlp) − t_i(dp)` per intersection.
    pub crossing_time_differences: Vec<f64>,
    pub allowance: f64,
    /// `nlp_cost ≤ dp_cost + allowance`.
    pub sandwich_holds: bool,
}

/// [`compare_with`] at [`DEFAULT_ALLOWANCE`].
pub fn compare(sol: &Solution, osol: &OracleSolution) -> ComparisonReport {
    compare_with(sol, osol, DEFAULT_ALLOWANCE)
}

/// Compares costs and crossing times; the allowance is `fraction · dp_cost`.
pub fn compare_with(sol: &Solution, osol: &OracleSolution, fraction: f64) -> ComparisonReport {
    let nlp_cost = sol.costs.j;
    let dp_cost = osol.cost;
    let allowance = fraction * dp_cost.abs();
    ComparisonReport {
        nlp_cost,
        dp_cost,
        cost_difference: nlp_cost - dp_cost,
        crossing_time_differences: sol
            .crossing_times
            .iter()
            .zip(&osol.crossing_times)
            .map(|(a, b)| a - b)
            .collect(),
        allowance,
        sandwich_holds: nlp_cost <= dp_cost + allowance,
    }
}
