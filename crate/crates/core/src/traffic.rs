//! Interfering traffic: scenario rewrites for a preceding vehicle and the
//! headway check against its predicted trajectory.
//!
//! Positions of the lead vehicle are in the ego's route coordinate. The gap
//! rule is `x_h − x ≥ α·v + β`; any vehicle length is folded into `β`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::Sample;
use crate::scenario::{green_window, Scenario, Violation};

pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_BETA: f64 = 5.0;
pub const DEFAULT_THETA: f64 = 0.9;
pub const DEFAULT_SIGMA: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyParams {
    /// Dynamic gap coefficient (s).
    pub alpha: f64,
    /// Static gap (m).
    pub beta: f64,
    /// Speed-limit factor when following through the same green.
    pub theta: f64,
    /// Delay after the green onset before crossing behind a queued lead (s).
    pub sigma: f64,
}

impl Default for SafetyParams {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            theta: DEFAULT_THETA,
            sigma: DEFAULT_SIGMA,
        }
    }
}

impl SafetyParams {
    /// Defaults overridden by whatever the scenario options set.
    pub fn from_scenario(sc: &Scenario) -> Self {
        let d = Self::default();
        let o = &sc.options;
        Self {
            alpha: o.alpha.unwrap_or(d.alpha),
            beta: o.beta.unwrap_or(d.beta),
            theta: o.theta.unwrap_or(d.theta),
            sigma: o.sigma.unwrap_or(d.sigma),
        }
    }

    pub fn validate(&self) -> Result<(), Vec<Violation>> {
        let mut out = Vec::new();
        let mut bad = |field: &str, message: &str| {
            out.push(Violation {
                field: field.into(),
                message: message.into(),
            })
        };
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            bad("alpha", "must be finite and non-negative");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            bad("beta", "must be finite and non-negative");
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            bad("theta", "theta out of (0,1)");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            bad("sigma", "must be finite and non-negative");
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }
}

/// How the lead vehicle meets intersection `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case", deny_unknown_fields)]
pub enum LeadStatus {
    /// No interaction.
    Clear,
    /// The lead crosses in green window `k` and the ego would not make it
    /// behind it; the ego waits for the next green.
    CrossesInWindow { k: u32 },
    /// Both cross in the same green; the ego slows down on that segment.
    CrossesSameWindow,
    /// The lead is stopped at the light and leaves when window `k` opens.
    StoppedAtIntersection { k: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeadSample {
    pub t: f64,
    pub x_h: f64,
}

/// Predicted lead trajectory plus its status at each intersection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecedingInfo {
    pub samples: Vec<LeadSample>,
    pub intersections: Vec<LeadStatus>,
}

#[derive(Debug, Error)]
pub enum TrafficError {
    #[error("invalid safety parameters: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Params(Vec<Violation>),
    #[error("invalid lead trajectory: {0}")]
    Lead(String),
    #[error("lead status given for {given} intersections, scenario has {expected}")]
    StatusCount { given: usize, expected: usize },
    #[error("intersection {intersection}: sigma {sigma} s leaves no crossing time in the {green} s green")]
    EmptyWindow { intersection: usize, sigma: f64, green: f64 },
    #[error("cannot parse preceding-vehicle file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PrecedingInfo {
    pub fn from_json_str(s: &str) -> Result<Self, TrafficError> {
        let info: Self = serde_json::from_str(s)?;
        info.validate()?;
        Ok(info)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, TrafficError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Samples strictly increasing in time with non-decreasing position.
    pub fn validate(&self) -> Result<(), TrafficError> {
        if self.samples.is_empty() {
            return Err(TrafficError::Lead("no samples".into()));
        }
        if self.samples.iter().any(|s| !s.t.is_finite() || !s.x_h.is_finite()) {
            return Err(TrafficError::Lead("non-finite sample".into()));
        }
        for w in self.samples.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(TrafficError::Lead(format!("time not increasing at t = {}", w[1].t)));
            }
            if w[1].x_h < w[0].x_h {
                return Err(TrafficError::Lead(format!("position decreases at t = {}", w[1].t)));
            }
        }
        Ok(())
    }

    pub fn time_span(&self) -> (f64, f64) {
        (self.samples[0].t, self.samples[self.samples.len() - 1].t)
    }

    /// Linear interpolation of the lead position; `None` outside the samples.
    pub fn position_at(&self, t: f64) -> Option<f64> {
        let s = &self.samples;
        let (lo, hi) = self.time_span();
        if !(t >= lo && t <= hi) {
            return None;
        }
        let i = s.partition_point(|p| p.t <= t).clamp(1, s.len().max(2) - 1);
        if s.len() == 1 {
            return Some(s[0].x_h);
        }
        let (a, b) = (s[i - 1], s[i]);
        let f = (t - a.t) / (b.t - a.t);
        Some(a.x_h + f * (b.x_h - a.x_h))
    }
}

/// Lead waiting at `stop_x` until `depart`, then accelerating at `u` up to
/// `v_max`, sampled every `dt` over `[t_from, t_to]`.
pub fn stopped_lead_trajectory(
    stop_x: f64,
    depart: f64,
    u: f64,
    v_max: f64,
    (t_from, t_to): (f64, f64),
    dt: f64,
) -> Vec<LeadSample> {
    let ramp = v_max / u;
    let pos = |t: f64| {
        let s = (t - depart).max(0.0);
        if s <= ramp {
            stop_x + 0.5 * u * s * s
        } else {
            stop_x + 0.5 * v_max * ramp + v_max * (s - ramp)
        }
    };
    let n = ((t_to - t_from) / dt).ceil() as usize;
    (0..=n)
        .map(|i| {
            let t = (t_from + i as f64 * dt).min(t_to);
            LeadSample { t, x_h: pos(t) }
        })
        .collect()
}

/// Rewrites the scenario for the lead vehicle, one intersection at a time:
///
/// * `CrossesInWindow { k }`: crossing no earlier than the next green of the
///   same light, `(k + 1)·T`.
/// * `CrossesSameWindow`: speed cap `θ·v_max` on the segment before the light.
/// * `StoppedAtIntersection { k }`: crossing inside `[kT + σ, kT + D·T]`.
///
/// Existing restrictions are kept and intersected, so applying the same
/// rewrite twice changes nothing.
pub fn adjust_scenario(sc: &Scenario, info: &PrecedingInfo, sp: &SafetyParams) -> Result<Scenario, TrafficError> {
    sp.validate().map_err(TrafficError::Params)?;
    info.validate()?;
    if info.intersections.len() != sc.num_intersections() {
        return Err(TrafficError::StatusCount {
            given: info.intersections.len(),
            expected: sc.num_intersections(),
        });
    }
    let v_max = sc.limits.v_max;
    let mut out = sc.clone();
    for (i, (seg, status)) in out.segments.iter_mut().zip(&info.intersections).enumerate() {
        let r = &mut seg.crossing;
        match *status {
            LeadStatus::Clear => {}
            LeadStatus::CrossesInWindow { k } => {
                let next = green_window(&seg.light, k + 1).start;
                r.not_before = Some(r.not_before.map_or(next, |b| b.max(next)));
            }
            LeadStatus::CrossesSameWindow => {
                let cap = sp.theta * v_max;
                seg.speed_cap = Some(seg.speed_cap.map_or(cap, |c| c.min(cap)));
            }
            LeadStatus::StoppedAtIntersection { k } => {
                let green = seg.light.green_duration();
                if sp.sigma >= green {
                    return Err(TrafficError::EmptyWindow {
                        intersection: i,
                        sigma: sp.sigma,
                        green,
                    });
                }
                let w = green_window(&seg.light, k);
                let lo = w.start + sp.sigma;
                r.not_before = Some(r.not_before.map_or(lo, |b| b.max(lo)));
                r.not_after = Some(r.not_after.map_or(w.end, |b| b.min(w.end)));
            }
        }
    }
    Ok(out)
}

/// An instant where the headway rule fails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyViolation {
    pub t: f64,
    /// `x_h − x`.
    pub gap: f64,
    /// `α·v + β`.
    pub required: f64,
}

fn interpolate(ego: &[Sample], t: f64) -> (f64, f64) {
    let i = ego.partition_point(|s| s.t <= t).clamp(1, ego.len() - 1);
    let (a, b) = (ego[i - 1], ego[i]);
    let f = if b.t > a.t { ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0) } else { 0.0 };
    (a.x + f * (b.x - a.x), a.v + f * (b.v - a.v))
}

/// Every instant on a `dt` grid over the common time span where
/// `x_h − x < α·v + β`. Both trajectories are interpolated linearly.
pub fn check_safety(ego: &[Sample], lead: &PrecedingInfo, sp: &SafetyParams, dt: f64) -> Vec<SafetyViolation> {
    assert!(dt > 0.0, "sampling step must be positive");
    if ego.is_empty() || lead.samples.is_empty() {
        return Vec::new();
    }
    let (l0, l1) = lead.time_span();
    let lo = ego[0].t.max(l0);
    let hi = ego[ego.len() - 1].t.min(l1);
    if lo > hi {
        return Vec::new();
    }
    let n = ((hi - lo) / dt).floor() as usize;
    let mut times: Vec<f64> = (0..=n).map(|i| lo + i as f64 * dt).collect();
    if hi - times[n] > 1e-12 {
        times.push(hi);
    }
    times
        .into_iter()
        .filter_map(|t| {
            let x_h = lead.position_at(t)?;
            let (x, v) = if ego.len() == 1 { (ego[0].x, ego[0].v) } else { interpolate(ego, t) };
            let gap = x_h - x;
            let required = sp.alpha * v + sp.beta;
            (gap < required).then_some(SafetyViolation { t, gap, required })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_sample(x: f64, v: f64) -> Vec<Sample> {
        vec![Sample {
            t: 0.0,
            x,
            v,
            u: 0.0,
            energy: 0.0,
        }]
    }

    fn lead_at(x_h: f64) -> PrecedingInfo {
        PrecedingInfo {
            samples: vec![LeadSample { t: 0.0, x_h }],
            intersections: vec![],
        }
    }

    fn status(s: Vec<LeadStatus>) -> PrecedingInfo {
        PrecedingInfo {
            samples: vec![LeadSample { t: 0.0, x_h: 0.0 }],
            intersections: s,
        }
    }

    #[test]
    fn gap_of_twenty_is_enough() {
        let sp = SafetyParams::default();
        assert!(check_safety(&one_sample(80.0, 10.0), &lead_at(100.0), &sp, 0.1).is_empty());
    }

    #[test]
    fn same_position_violates() {
        let sp = SafetyParams::default();
        let v = check_safety(&one_sample(50.0, 0.0), &lead_at(50.0), &sp, 0.1);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].required, 5.0);
    }

    #[test]
    fn stopped_lead_restricts_to_post_queue_window() {
        let sc = Scenario::reference_two_light_corridor();
        let info = status(vec![LeadStatus::Clear, LeadStatus::StoppedAtIntersection { k: 1 }]);
        let adj = adjust_scenario(&sc, &info, &SafetyParams::default()).unwrap();
        let w = adj.crossing_window(1, 1);
        assert_eq!((w.start, w.end), (44.0, 60.0));
        assert_eq!(adj.segments[0], sc.segments[0]);
    }

    #[test]
    fn same_window_lowers_cap() {
        let sc = Scenario::reference_two_light_corridor();
        let info = status(vec![LeadStatus::CrossesSameWindow, LeadStatus::Clear]);
        let adj = adjust_scenario(&sc, &info, &SafetyParams::default()).unwrap();
        assert_eq!(adj.speed_cap(0), 18.0);
        assert_eq!(adj.speed_cap(1), 20.0);
    }

    #[test]
    fn lead_through_forces_next_green() {
        let sc = Scenario::reference_two_light_corridor();
        let info = status(vec![LeadStatus::CrossesInWindow { k: 0 }, LeadStatus::Clear]);
        let adj = adjust_scenario(&sc, &info, &SafetyParams::default()).unwrap();
        assert_eq!(adj.segments[0].crossing.not_before, Some(40.0));
        assert!(adj.crossing_window(0, 0).is_empty());
    }

    #[test]
    fn sigma_past_green_is_an_error() {
        let sc = Scenario::reference_two_light_corridor();
        let info = status(vec![LeadStatus::Clear, LeadStatus::StoppedAtIntersection { k: 1 }]);
        let sp = SafetyParams {
            sigma: 20.0,
            ..SafetyParams::default()
        };
        assert!(matches!(
            adjust_scenario(&sc, &info, &sp),
            Err(TrafficError::EmptyWindow { intersection: 1, .. })
        ));
    }

    #[test]
    fn rewrites_are_idempotent() {
        let sc = Scenario::reference_two_light_corridor();
        let sp = SafetyParams::default();
        for s in [
            vec![LeadStatus::CrossesInWindow { k: 0 }, LeadStatus::CrossesSameWindow],
            vec![LeadStatus::CrossesSameWindow, LeadStatus::StoppedAtIntersection { k: 1 }],
        ] {
            let info = status(s);
            let once = adjust_scenario(&sc, &info, &sp).unwrap();
            let twice = adjust_scenario(&once, &info, &sp).unwrap();
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn status_count_must_match() {
        let sc = Scenario::reference_two_light_corridor();
        let info = status(vec![LeadStatus::Clear]);
        assert!(matches!(
            adjust_scenario(&sc, &info, &SafetyParams::default()),
            Err(TrafficError::StatusCount { given: 1, expected: 2 })
        ));
    }

    #[test]
    fn lead_json_round_trip_and_checks() {
        let text = r#"{"samples":[{"t":0,"x_h":10},{"t":2,"x_h":14}],
            "intersections":[{"status":"clear"},{"status":"stopped_at_intersection","k":1}]}"#;
        let info = PrecedingInfo::from_json_str(text).unwrap();
        assert_eq!(info.intersections[1], LeadStatus::StoppedAtIntersection { k: 1 });
        assert_eq!(info.position_at(1.0), Some(12.0));
        assert_eq!(info.position_at(3.0), None);
        let back = PrecedingInfo::from_json_str(&serde_json::to_string(&info).unwrap()).unwrap();
        assert_eq!(back, info);
        let bad = r#"{"samples":[{"t":0,"x_h":10},{"t":2,"x_h":9}],"intersections":[]}"#;
        assert!(matches!(PrecedingInfo::from_json_str(bad), Err(TrafficError::Lead(_))));
    }

    #[test]
    fn stopped_lead_waits_then_ramps() {
        let s = stopped_lead_trajectory(400.0, 40.0, 2.5, 20.0, (0.0, 60.0), 1.0);
        assert_eq!(s[0].x_h, 400.0);
        assert_eq!(s[40].x_h, 400.0);
        assert_eq!(s[44].x_h, 420.0);
        // Top speed after 8 s: 80 m ramp then 20 m/s.
        assert_eq!(s[50].x_h, 400.0 + 80.0 + 40.0);
    }
}
