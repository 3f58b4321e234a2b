//! Problem data: corridor geometry, signal timing, vehicle limits and weights.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::VehicleState;
use crate::planner;

/// Share of the normalized objective given to travel time when weights are
/// derived automatically.
pub const DEFAULT_TIME_SHARE: f64 = 0.5;

const GREEN_EDGE_TOL: f64 = 1e-9;

/// A single field that failed validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("degenerate scenario: earliest and latest final arrival coincide at {0} s")]
    Degenerate(f64),
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

/// Closed time interval `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn is_empty(&self) -> bool {
        !(self.start <= self.end)
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.end
    }

    pub fn intersect(&self, other: &Window) -> Window {
        Window::new(self.start.max(other.start), self.end.min(other.end))
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.start + self.end)
    }
}

/// Fixed-time two-phase signal: green for `green_fraction · period` at the
/// start of every cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficLight {
    pub period: f64,
    pub green_fraction: f64,
    /// Reserved; must be zero.
    #[serde(default)]
    pub offset: f64,
}

impl TrafficLight {
    pub fn new(period: f64, green_fraction: f64) -> Self {
        Self {
            period,
            green_fraction,
            offset: 0.0,
        }
    }

    pub fn green_duration(&self) -> f64 {
        self.green_fraction * self.period
    }
}

/// True iff `t mod T ∈ [0, D·T]`; both cycle edges count as green.
pub fn is_green(light: &TrafficLight, t: f64) -> bool {
    let period = light.period;
    let r = t.rem_euclid(period);
    let tol = GREEN_EDGE_TOL * period.max(1.0);
    r <= light.green_duration() + tol || r >= period - tol
}

/// The `k`-th green interval `[kT, kT + D·T]`.
pub fn green_window(light: &TrafficLight, k: u32) -> Window {
    let start = k as f64 * light.period;
    Window::new(start, start + light.green_duration())
}

/// Extra limits on when the vehicle may cross an intersection, on top of the
/// signal itself.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CrossingRestriction {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub not_before: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub not_after: Option<f64>,
}

impl CrossingRestriction {
    pub fn is_unrestricted(&self) -> bool {
        self.not_before.is_none() && self.not_after.is_none()
    }

    pub fn as_window(&self) -> Window {
        Window::new(
            self.not_before.unwrap_or(f64::NEG_INFINITY),
            self.not_after.unwrap_or(f64::INFINITY),
        )
    }
}

/// Road segment `j` ending at the stop line of signal `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadSegment {
    pub length: f64,
    pub light: TrafficLight,
    /// Lower speed limit than the vehicle-wide `v_max` on this segment.
    pub speed_cap: Option<f64>,
    pub crossing: CrossingRestriction,
}

impl RoadSegment {
    pub fn new(length: f64, light: TrafficLight) -> Self {
        Self {
            length,
            light,
            speed_cap: None,
            crossing: CrossingRestriction::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleLimits {
    pub v_min: f64,
    pub v_max: f64,
    pub u_min: f64,
    pub u_max: f64,
}

impl VehicleLimits {
    /// Largest acceleration magnitude allowed in either direction.
    pub fn accel_magnitude(&self) -> f64 {
        self.u_max.max(self.u_min.abs())
    }
}

/// Objective weights `ρ_t` (on travel time) and `ρ_u` (on `∫u² dt`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub rho_t: f64,
    pub rho_u: f64,
}

/// Weights as written in a scenario file; missing entries are derived.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSpec {
    pub rho_t: Option<f64>,
    pub rho_u: Option<f64>,
    pub time_share: f64,
}

impl Default for WeightSpec {
    fn default() -> Self {
        Self {
            rho_t: None,
            rho_u: None,
            time_share: DEFAULT_TIME_SHARE,
        }
    }
}

impl WeightSpec {
    pub fn explicit(w: Weights) -> Self {
        Self {
            rho_t: Some(w.rho_t),
            rho_u: Some(w.rho_u),
            time_share: DEFAULT_TIME_SHARE,
        }
    }
}

/// Optional comfort constraints and interfering-traffic parameters.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ScenarioOptions {
    /// Required acceleration at the initial time.
    pub initial_accel: Option<f64>,
    /// Bound on `|jerk|` for every segment.
    pub jerk_limit: Option<f64>,
    pub theta: Option<f64>,
    pub sigma: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub segments: Vec<RoadSegment>,
    pub limits: VehicleLimits,
    /// Initial state; position is measured from here, so `x` is zero.
    pub initial: VehicleState,
    pub weights: WeightSpec,
    pub options: ScenarioOptions,
}

impl Scenario {
    pub fn new(segments: Vec<RoadSegment>, limits: VehicleLimits, t0: f64, v0: f64) -> Self {
        Self {
            segments,
            limits,
            initial: VehicleState::new(t0, 0.0, v0),
            weights: WeightSpec::default(),
            options: ScenarioOptions::default(),
        }
    }

    /// Two 200 m segments with 40 s cycles (20 s green), starting from rest.
    pub fn reference_two_light_corridor() -> Self {
        let light = TrafficLight::new(40.0, 0.5);
        Self::new(
            vec![RoadSegment::new(200.0, light), RoadSegment::new(200.0, light)],
            VehicleLimits {
                v_min: 2.78,
                v_max: 20.0,
                u_min: -2.9,
                u_max: 2.5,
            },
            0.0,
            0.0,
        )
    }

    pub fn num_intersections(&self) -> usize {
        self.segments.len()
    }

    /// Route distance of each stop line from the start.
    pub fn cumulative_lengths(&self) -> Vec<f64> {
        self.segments
            .iter()
            .scan(0.0, |acc, s| {
                *acc += s.length;
                Some(*acc)
            })
            .collect()
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|s| s.length).sum()
    }

    /// Upper speed limit on road segment `i` (0-based).
    pub fn speed_cap(&self, i: usize) -> f64 {
        self.segments[i]
            .speed_cap
            .map_or(self.limits.v_max, |c| c.min(self.limits.v_max))
    }

    /// Green window `k` of intersection `i` cut by any crossing restriction.
    pub fn crossing_window(&self, i: usize, k: u32) -> Window {
        let seg = &self.segments[i];
        green_window(&seg.light, k).intersect(&seg.crossing.as_window())
    }

    /// Explicit weights, or [`default_weights`] for whatever is missing.
    pub fn resolved_weights(&self) -> Result<Weights, ScenarioError> {
        match (self.weights.rho_t, self.weights.rho_u) {
            (Some(rho_t), Some(rho_u)) => Ok(Weights { rho_t, rho_u }),
            (rt, ru) => {
                let d = default_weights(self)?;
                Ok(Weights {
                    rho_t: rt.unwrap_or(d.rho_t),
                    rho_u: ru.unwrap_or(d.rho_u),
                })
            }
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(s)?;
        Ok(file.into())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&ScenarioFile::from(self)).expect("scenario serializes")
    }
}

/// Derives weights that put time and energy on comparable scales:
/// `ρ_t = w / (t_ub − t_lb)` and `ρ_u = (1 − w) / (u_lim² · (t_ub − t_0))`,
/// with `t_lb`, `t_ub` the earliest and latest reachable arrival at the last
/// stop line and `u_lim = max(u_max, |u_min|)`.
pub fn default_weights(sc: &Scenario) -> Result<Weights, ScenarioError> {
    let bounds = planner::reachable_time_bounds(sc);
    let n = sc.num_intersections();
    let (t_lb, t_ub) = (bounds.t_min[n - 1], bounds.t_max[n - 1]);
    if !(t_ub - t_lb > 1e-12) {
        return Err(ScenarioError::Degenerate(t_lb));
    }
    let w = sc.weights.time_share;
    let u_lim = sc.limits.accel_magnitude();
    Ok(Weights {
        rho_t: w / (t_ub - t_lb),
        rho_u: (1.0 - w) / (u_lim * u_lim * (t_ub - sc.initial.t)),
    })
}

/// Checks every invariant of the scenario and reports all failures at once.
pub fn validate(sc: &Scenario) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let mut bad = |field: String, message: &str| {
        out.push(Violation {
            field,
            message: message.to_string(),
        })
    };
    let lim = &sc.limits;
    if sc.segments.is_empty() {
        bad("segments".into(), "at least one segment is required");
    }
    for (i, seg) in sc.segments.iter().enumerate() {
        if !(seg.length > 0.0 && seg.length.is_finite()) {
            bad(format!("segments[{i}].length_m"), "length must be positive");
        }
        if !(seg.light.period > 0.0 && seg.light.period.is_finite()) {
            bad(format!("segments[{i}].light.period_s"), "period must be positive");
        }
        if !(seg.light.green_fraction > 0.0 && seg.light.green_fraction < 1.0) {
            bad(format!("segments[{i}].light.green_fraction"), "duty out of (0,1)");
        }
        if seg.light.offset != 0.0 {
            bad(format!("segments[{i}].light.offset_s"), "signal offsets must be zero");
        }
        if let Some(cap) = seg.speed_cap {
            if !(cap >= lim.v_min && cap > 0.0) {
                bad(format!("segments[{i}].speed_cap"), "speed cap must be at least v_min");
            }
        }
        if let (Some(a), Some(b)) = (seg.crossing.not_before, seg.crossing.not_after) {
            if a > b {
                bad(format!("segments[{i}].crossing_window"), "not_before exceeds not_after");
            }
        }
    }
    if !(lim.v_min > 0.0) {
        bad("limits.v_min".into(), "v_min must be positive");
    }
    if !(lim.v_min <= lim.v_max) {
        bad("limits.v_max".into(), "v_max must be at least v_min");
    }
    if !(lim.u_min < 0.0) {
        bad("limits.u_min".into(), "u_min must be negative");
    }
    if !(lim.u_max > 0.0) {
        bad("limits.u_max".into(), "u_max must be positive");
    }
    let s0 = &sc.initial;
    if !(s0.t >= 0.0 && s0.t.is_finite()) {
        bad("initial.t0".into(), "initial time must be finite and non-negative");
    }
    if s0.x != 0.0 {
        bad("initial.x0".into(), "initial position must be zero");
    }
    if !(s0.v >= 0.0) {
        bad("initial.v0".into(), "initial speed must be non-negative");
    }
    if !(s0.v <= lim.v_max) {
        bad("initial.v0".into(), "initial speed exceeds v_max");
    }
    if let Some(u0) = sc.options.initial_accel {
        if !(u0 >= lim.u_min && u0 <= lim.u_max) {
            bad("initial.u0".into(), "initial acceleration outside [u_min, u_max]");
        }
    }
    let w = &sc.weights;
    for (name, val) in [("weights.rho_t", w.rho_t), ("weights.rho_u", w.rho_u)] {
        if let Some(v) = val {
            if !(v >= 0.0 && v.is_finite()) {
                bad(name.into(), "weight must be non-negative");
            }
        }
    }
    if let (Some(a), Some(b)) = (w.rho_t, w.rho_u) {
        if !(a + b > 0.0) {
            bad("weights".into(), "weights must not both be zero");
        }
    }
    if !(w.time_share >= 0.0 && w.time_share <= 1.0) {
        bad("weights.time_share".into(), "time share must lie in [0,1]");
    }
    let o = &sc.options;
    if let Some(j) = o.jerk_limit {
        if !(j > 0.0) {
            bad("options.jerk_limit".into(), "jerk limit must be positive");
        }
    }
    if let Some(theta) = o.theta {
        if !(theta > 0.0 && theta < 1.0) {
            bad("options.theta".into(), "theta out of (0,1)");
        }
    }
    for (name, val) in [
        ("options.sigma", o.sigma),
        ("options.alpha", o.alpha),
        ("options.beta", o.beta),
    ] {
        if let Some(v) = val {
            if !(v >= 0.0) {
                bad(name.into(), "must be non-negative");
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

// ---------------------------------------------------------------------------
// File format

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    segments: Vec<SegmentFile>,
    limits: VehicleLimits,
    initial: InitialFile,
    #[serde(default)]
    weights: WeightsFile,
    #[serde(default)]
    options: OptionsFile,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentFile {
    length_m: f64,
    light: LightFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    speed_cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    crossing_window: Option<CrossingRestriction>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LightFile {
    period_s: f64,
    green_fraction: f64,
    #[serde(default)]
    offset_s: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialFile {
    #[serde(default)]
    t0: f64,
    v0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    u0: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rho_t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rho_u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    time_share: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptionsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    jerk_limit: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
}

impl From<ScenarioFile> for Scenario {
    fn from(f: ScenarioFile) -> Self {
        Scenario {
            segments: f
                .segments
                .into_iter()
                .map(|s| RoadSegment {
                    length: s.length_m,
                    light: TrafficLight {
                        period: s.light.period_s,
                        green_fraction: s.light.green_fraction,
                        offset: s.light.offset_s,
                    },
                    speed_cap: s.speed_cap,
                    crossing: s.crossing_window.unwrap_or_default(),
                })
                .collect(),
            limits: f.limits,
            initial: VehicleState::new(f.initial.t0, 0.0, f.initial.v0),
            weights: WeightSpec {
                rho_t: f.weights.rho_t,
                rho_u: f.weights.rho_u,
                time_share: f.weights.time_share.unwrap_or(DEFAULT_TIME_SHARE),
            },
            options: ScenarioOptions {
                initial_accel: f.initial.u0,
                jerk_limit: f.options.jerk_limit,
                theta: f.options.theta,
                sigma: f.options.sigma,
                alpha: f.options.alpha,
                beta: f.options.beta,
            },
        }
    }
}

impl From<&Scenario> for ScenarioFile {
    fn from(sc: &Scenario) -> Self {
        ScenarioFile {
            segments: sc
                .segments
                .iter()
                .map(|s| SegmentFile {
                    length_m: s.length,
                    light: LightFile {
                        period_s: s.light.period,
                        green_fraction: s.light.green_fraction,
                        offset_s: s.light.offset,
                    },
                    speed_cap: s.speed_cap,
                    crossing_window: (!s.crossing.is_unrestricted()).then_some(s.crossing),
                })
                .collect(),
            limits: sc.limits,
            initial: InitialFile {
                t0: sc.initial.t,
                v0: sc.initial.v,
                u0: sc.options.initial_accel,
            },
            weights: WeightsFile {
                rho_t: sc.weights.rho_t,
                rho_u: sc.weights.rho_u,
                time_share: (sc.weights.time_share != DEFAULT_TIME_SHARE)
                    .then_some(sc.weights.time_share),
            },
            options: OptionsFile {
                jerk_limit: sc.options.jerk_limit,
                theta: sc.options.theta,
                sigma: sc.options.sigma,
                alpha: sc.options.alpha,
                beta: sc.options.beta,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn green_checks_on_reference_cycle() {
        let l = TrafficLight::new(40.0, 0.5);
        assert!(is_green(&l, 10.0));
        assert!(!is_green(&l, 25.0));
        assert!(is_green(&l, 40.0));
        assert!(is_green(&l, 20.0));
        assert!(!is_green(&l, 20.001));
    }

    #[test]
    fn green_windows() {
        let l = TrafficLight::new(40.0, 0.5);
        assert_eq!(green_window(&l, 0), Window::new(0.0, 20.0));
        assert_eq!(green_window(&l, 1), Window::new(40.0, 60.0));
        let l = TrafficLight::new(33.0, 0.3);
        let w = green_window(&l, 0);
        assert_eq!(w.start, 0.0);
        assert!((w.end - 0.3 * 33.0).abs() < 1e-12);
    }

    #[test]
    fn reference_corridor_is_valid() {
        assert_eq!(validate(&Scenario::reference_two_light_corridor()), Ok(()));
    }

    #[test]
    fn validation_reports_every_violation() {
        let mut sc = Scenario::reference_two_light_corridor();
        sc.segments[0].light.green_fraction = 1.2;
        sc.limits.u_min = 1.0;
        let errs = validate(&sc).unwrap_err();
        assert!(errs.iter().any(|v| v.message == "duty out of (0,1)"));
        assert!(errs.iter().any(|v| v.message == "u_min must be negative"));
        assert_eq!(errs.len(), 2);
    }

    #[test]
    fn initial_speed_below_v_min_is_allowed() {
        let mut sc = Scenario::reference_two_light_corridor();
        sc.initial.v = 1.0;
        assert!(validate(&sc).is_ok());
    }

    #[test]
    fn default_weights_on_reference_corridor() {
        let sc = Scenario::reference_two_light_corridor();
        let w = default_weights(&sc).unwrap();
        // t_lb = 24 s; t_ub = 2.78/2.5 + (400 − 2.78²/5)/2.78.
        let t_ub: f64 = 2.78 / 2.5 + (400.0 - 2.78 * 2.78 / 5.0) / 2.78;
        assert!((t_ub - 144.44).abs() < 0.01);
        assert!((w.rho_t - 0.5 / (t_ub - 24.0)).abs() < 1e-15);
        assert!((w.rho_u - 0.5 / (2.9 * 2.9 * t_ub)).abs() < 1e-15);
    }

    #[test]
    fn pure_time_share_zeroes_energy_weight() {
        let mut sc = Scenario::reference_two_light_corridor();
        sc.weights.time_share = 1.0;
        let w = sc.resolved_weights().unwrap();
        assert_eq!(w.rho_u, 0.0);
        assert!(w.rho_t > 0.0);
    }

    #[test]
    fn symmetric_accel_limits_give_that_magnitude() {
        let mut sc = Scenario::reference_two_light_corridor();
        sc.limits.u_min = -2.5;
        assert_eq!(sc.limits.accel_magnitude(), 2.5);
    }

    #[test]
    fn energy_weight_uses_largest_accel_magnitude() {
        let mut sc = Scenario::reference_two_light_corridor();
        sc.limits.u_max = 4.0;
        let b = planner::reachable_time_bounds(&sc);
        let w = default_weights(&sc).unwrap();
        assert!((w.rho_u - 0.5 / (16.0 * b.t_max[1])).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip_preserves_scenario() {
        let mut sc = Scenario::reference_two_light_corridor();
        sc.options.jerk_limit = Some(1.5);
        sc.segments[1].crossing.not_before = Some(44.0);
        sc.segments[0].speed_cap = Some(18.0);
        let text = sc.to_json_string();
        let back = Scenario::from_json_str(&text).unwrap();
        assert_eq!(back, sc);
    }

    #[test]
    fn parses_minimal_file() {
        let text = r#"{
            "segments": [{"length_m": 150, "light": {"period_s": 30, "green_fraction": 0.6, "offset_s": 0}}],
            "limits": {"v_min": 2.0, "v_max": 15.0, "u_min": -3.0, "u_max": 2.0},
            "initial": {"t0": 0, "v0": 10}
        }"#;
        let sc = Scenario::from_json_str(text).unwrap();
        assert_eq!(sc.num_intersections(), 1);
        assert_eq!(sc.weights.rho_t, None);
        assert!(validate(&sc).is_ok());
        assert!(Scenario::from_json_str(r#"{"segments": []}"#).is_err());
    }
}
