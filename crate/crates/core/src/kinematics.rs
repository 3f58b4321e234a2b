//! Exact double-integrator kinematics under linear acceleration.
//!
//! A segment applies `u(t) = a·t + b` over `[t_start, t_end]`. End states and
//! the energy integral `∫u² dt` have closed forms; they are evaluated here in
//! the shifted form `u = p + a·s` with `p = a·t_start + b` and `s = t − t_start`,
//! which is algebraically identical and avoids cancellation at large absolute
//! times.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("time {t} outside profile span [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("segment {index} starts at {start} but previous segment ends at {prev_end}")]
    NonContiguous {
        index: usize,
        start: f64,
        prev_end: f64,
    },
    #[error("segment {index} ends before it starts ({start} > {end})")]
    NegativeDuration { index: usize, start: f64, end: f64 },
    #[error("profile has no segments")]
    Empty,
}

/// Time, route position and speed of the vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub t: f64,
    pub x: f64,
    pub v: f64,
}

impl VehicleState {
    pub fn new(t: f64, x: f64, v: f64) -> Self {
        Self { t, x, v }
    }
}

/// One piece `u(t) = a·t + b` of an acceleration profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSegment {
    /// Jerk (m/s³).
    pub a: f64,
    /// Acceleration intercept at absolute time zero (m/s²).
    pub b: f64,
    pub t_start: f64,
    pub t_end: f64,
}

impl LinearSegment {
    pub fn new(a: f64, b: f64, t_start: f64, t_end: f64) -> Self {
        Self {
            a,
            b,
            t_start,
            t_end,
        }
    }

    /// Builds a segment from its acceleration at `t_start` rather than at zero.
    pub fn from_start_accel(start_accel: f64, a: f64, t_start: f64, t_end: f64) -> Self {
        Self::new(a, start_accel - a * t_start, t_start, t_end)
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn accel_at(&self, t: f64) -> f64 {
        self.a * t + self.b
    }

    pub fn start_accel(&self) -> f64 {
        self.accel_at(self.t_start)
    }

    pub fn end_accel(&self) -> f64 {
        self.accel_at(self.t_end)
    }
}

/// Contiguous sequence of linear segments. Zero-duration segments are legal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelProfile {
    segments: Vec<LinearSegment>,
}

const CONTIGUITY_TOL: f64 = 1e-9;

impl AccelProfile {
    pub fn new(segments: Vec<LinearSegment>) -> Result<Self, KinematicsError> {
        if segments.is_empty() {
            return Err(KinematicsError::Empty);
        }
        for (i, seg) in segments.iter().enumerate() {
            if seg.t_end < seg.t_start {
                return Err(KinematicsError::NegativeDuration {
                    index: i,
                    start: seg.t_start,
                    end: seg.t_end,
                });
            }
            if i > 0 {
                let prev_end = segments[i - 1].t_end;
                let scale = 1.0 + prev_end.abs();
                if (seg.t_start - prev_end).abs() > CONTIGUITY_TOL * scale {
                    return Err(KinematicsError::NonContiguous {
                        index: i,
                        start: seg.t_start,
                        prev_end,
                    });
                }
            }
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[LinearSegment] {
        &self.segments
    }

    pub fn start_time(&self) -> f64 {
        self.segments[0].t_start
    }

    pub fn end_time(&self) -> f64 {
        self.segments[self.segments.len() - 1].t_end
    }

    /// Knot times `τ_0 ≤ τ_1 ≤ … ≤ τ_M`.
    pub fn knots(&self) -> Vec<f64> {
        std::iter::once(self.start_time())
            .chain(self.segments.iter().map(|s| s.t_end))
            .collect()
    }

    /// States at every knot, starting with `s0`.
    pub fn knot_states(&self, s0: VehicleState) -> Vec<VehicleState> {
        let mut out = Vec::with_capacity(self.segments.len() + 1);
        let mut s = s0;
        out.push(s);
        for seg in &self.segments {
            s = segment_end_state(s, seg);
            out.push(s);
        }
        out
    }

    /// Total `∫u² dt` over the profile.
    pub fn energy(&self, s0: VehicleState) -> f64 {
        let mut s = s0;
        let mut total = 0.0;
        for seg in &self.segments {
            total += segment_energy(s, seg);
            s = segment_end_state(s, seg);
        }
        total
    }

    /// `∫u² dt` restricted to `[t_from, t_to]`.
    pub fn energy_between(&self, t_from: f64, t_to: f64) -> f64 {
        let mut total = 0.0;
        for seg in &self.segments {
            let lo = seg.t_start.max(t_from);
            let hi = seg.t_end.min(t_to);
            if hi > lo {
                let part = LinearSegment::new(seg.a, seg.b, lo, hi);
                total += segment_energy(VehicleState::new(lo, 0.0, 0.0), &part);
            }
        }
        total
    }
}

/// State at `seg.t_end` reached from `s0` (taken at `seg.t_start`).
pub fn segment_end_state(s0: VehicleState, seg: &LinearSegment) -> VehicleState {
    let h = seg.duration();
    let p = seg.start_accel();
    let a = seg.a;
    VehicleState {
        t: seg.t_end,
        x: s0.x + s0.v * h + p * h * h / 2.0 + a * h * h * h / 6.0,
        v: s0.v + p * h + a * h * h / 2.0,
    }
}

/// `∫ u(t)² dt` over the segment. The state argument is unused by the closed
/// form but kept so callers compose states and energies the same way.
pub fn segment_energy(_s0: VehicleState, seg: &LinearSegment) -> f64 {
    let h = seg.duration();
    let p = seg.start_accel();
    let a = seg.a;
    p * p * h + p * a * h * h + a * a * h * h * h / 3.0
}

/// Position, speed and acceleration at time `t`.
///
/// At an interior knot the acceleration of the later segment is reported.
pub fn evaluate_profile(
    profile: &AccelProfile,
    s0: VehicleState,
    t: f64,
) -> Result<(f64, f64, f64), KinematicsError> {
    let (start, end) = (profile.start_time(), profile.end_time());
    let slack = CONTIGUITY_TOL * (1.0 + end.abs());
    if !(t >= start - slack && t <= end + slack) {
        return Err(KinematicsError::OutOfRange { t, start, end });
    }
    let segs = profile.segments();
    let mut s = s0;
    for (i, seg) in segs.iter().enumerate() {
        let last = i + 1 == segs.len();
        if t < seg.t_end || last {
            let t_clamped = t.clamp(seg.t_start, seg.t_end);
            let part = LinearSegment::new(seg.a, seg.b, seg.t_start, t_clamped);
            let at = segment_end_state(s, &part);
            return Ok((at.x, at.v, seg.accel_at(t_clamped)));
        }
        s = segment_end_state(s, seg);
    }
    unreachable!("profile has at least one segment")
}

/// One sample of a numerically integrated trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: f64,
    pub v: f64,
    pub u: f64,
    /// Accumulated `∫u² dt` since the start of the integration.
    pub energy: f64,
}

/// Closed-form samples every `dt` from the profile start, plus the end time.
pub fn sample_profile(profile: &AccelProfile, s0: VehicleState, dt: f64) -> Vec<Sample> {
    assert!(dt > 0.0, "sampling step must be positive");
    let (start, end) = (profile.start_time(), profile.end_time());
    let steps = ((end - start) / dt).floor() as usize;
    let mut times: Vec<f64> = (0..=steps).map(|i| start + i as f64 * dt).collect();
    if end - times[times.len() - 1] > 1e-9 * dt {
        times.push(end);
    }
    times
        .into_iter()
        .map(|t| {
            let (x, v, u) = evaluate_profile(profile, s0, t).expect("t within the profile");
            Sample {
                t,
                x,
                v,
                u,
                energy: profile.energy_between(start, t),
            }
        })
        .collect()
}

/// Classical fixed-step RK4 integration of `ẋ = v`, `v̇ = u`, `Ė = u²`.
///
/// Each segment is split into `ceil(duration / dt)` equal steps so no step
/// straddles a knot. Samples are emitted at every step boundary. This is a
/// reference integrator; the solver never calls it.
pub fn integrate_numeric(profile: &AccelProfile, s0: VehicleState, dt: f64) -> Vec<Sample> {
    assert!(dt > 0.0, "integration step must be positive");
    let first = &profile.segments()[0];
    let mut out = vec![Sample {
        t: first.t_start,
        x: s0.x,
        v: s0.v,
        u: first.start_accel(),
        energy: 0.0,
    }];
    let (mut x, mut v, mut e) = (s0.x, s0.v, 0.0);
    for seg in profile.segments() {
        let dur = seg.duration();
        if dur <= 0.0 {
            continue;
        }
        let steps = (dur / dt).ceil().max(1.0) as usize;
        let h = dur / steps as f64;
        let deriv = |t: f64, v: f64| {
            let u = seg.accel_at(t);
            (v, u, u * u)
        };
        for k in 0..steps {
            let t = seg.t_start + k as f64 * h;
            let (k1x, k1v, k1e) = deriv(t, v);
            let (k2x, k2v, k2e) = deriv(t + h / 2.0, v + h / 2.0 * k1v);
            let (k3x, k3v, k3e) = deriv(t + h / 2.0, v + h / 2.0 * k2v);
            let (k4x, k4v, k4e) = deriv(t + h, v + h * k3v);
            x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
            v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
            e += h / 6.0 * (k1e + 2.0 * k2e + 2.0 * k3e + k4e);
            let t_next = if k + 1 == steps { seg.t_end } else { t + h };
            out.push(Sample {
                t: t_next,
                x,
                v,
                u: seg.accel_at(t_next),
                energy: e,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    fn single(seg: LinearSegment) -> AccelProfile {
        AccelProfile::new(vec![seg]).unwrap()
    }

    #[test]
    fn cruise_keeps_speed() {
        let s = segment_end_state(
            VehicleState::new(0.0, 0.0, 5.0),
            &LinearSegment::new(0.0, 0.0, 0.0, 10.0),
        );
        assert_eq!(s, VehicleState::new(10.0, 50.0, 5.0));
        assert_eq!(
            segment_energy(s, &LinearSegment::new(0.0, 0.0, 0.0, 10.0)),
            0.0
        );
    }

    #[test]
    fn constant_acceleration_to_speed_limit() {
        let seg = LinearSegment::new(0.0, 2.5, 0.0, 8.0);
        let s = segment_end_state(VehicleState::new(0.0, 0.0, 0.0), &seg);
        assert!(close(s.x, 80.0, 1e-14) && close(s.v, 20.0, 1e-14));
        assert!(close(
            segment_energy(VehicleState::new(0.0, 0.0, 0.0), &seg),
            50.0,
            1e-14
        ));
    }

    #[test]
    fn unit_jerk_from_rest() {
        let seg = LinearSegment::new(1.0, 0.0, 0.0, 2.0);
        let s0 = VehicleState::new(0.0, 0.0, 0.0);
        let s = segment_end_state(s0, &seg);
        assert!(close(s.x, 4.0 / 3.0, 1e-14));
        assert!(close(s.v, 2.0, 1e-14));
        assert!(close(segment_energy(s0, &seg), 8.0 / 3.0, 1e-14));
    }

    #[test]
    fn shifted_form_matches_absolute_time_closed_forms() {
        // Absolute-time expressions, written out term by term.
        let (a, b, t0, t1): (f64, f64, f64, f64) = (0.37, -1.2, 3.5, 9.25);
        let (x0, v0) = (12.0, 7.5);
        let v_abs = v0 + b * (t1 - t0) + a / 2.0 * (t1 * t1 - t0 * t0);
        let x_abs = x0
            + v0 * (t1 - t0)
            + 0.5 * b * (t1 - t0).powi(2)
            + a / 6.0 * (t1.powi(3) + 2.0 * t0.powi(3) - 3.0 * t0 * t0 * t1);
        let e_abs = a * a / 3.0 * (t1.powi(3) - t0.powi(3))
            + a * b * (t1 * t1 - t0 * t0)
            + b * b * (t1 - t0);
        let seg = LinearSegment::new(a, b, t0, t1);
        let s0 = VehicleState::new(t0, x0, v0);
        let s = segment_end_state(s0, &seg);
        assert!(close(s.v, v_abs, 1e-12));
        assert!(close(s.x, x_abs, 1e-12));
        assert!(close(segment_energy(s0, &seg), e_abs, 1e-12));
    }

    #[test]
    fn evaluate_bang_then_cruise() {
        let p = AccelProfile::new(vec![
            LinearSegment::new(0.0, 2.5, 0.0, 8.0),
            LinearSegment::new(0.0, 0.0, 8.0, 14.0),
        ])
        .unwrap();
        let s0 = VehicleState::new(0.0, 0.0, 0.0);
        let (x, v, u) = evaluate_profile(&p, s0, 14.0).unwrap();
        assert!(close(x, 200.0, 1e-14) && close(v, 20.0, 1e-14) && u == 0.0);
        // At the knot, the later segment's acceleration is reported.
        let (x, v, u) = evaluate_profile(&p, s0, 8.0).unwrap();
        assert!(close(x, 80.0, 1e-14) && close(v, 20.0, 1e-14) && u == 0.0);
        let (x, v, u) = evaluate_profile(&single(LinearSegment::new(0.0, 0.0, 0.0, 10.0)), VehicleState::new(0.0, 0.0, 5.0), 4.0).unwrap();
        assert_eq!((x, v, u), (20.0, 5.0, 0.0));
    }

    #[test]
    fn evaluate_rejects_out_of_range() {
        let p = single(LinearSegment::new(0.0, 0.0, 0.0, 10.0));
        let err = evaluate_profile(&p, VehicleState::new(0.0, 0.0, 1.0), 10.5).unwrap_err();
        assert!(matches!(err, KinematicsError::OutOfRange { .. }));
        assert!(evaluate_profile(&p, VehicleState::new(0.0, 0.0, 1.0), -0.1).is_err());
    }

    #[test]
    fn profile_rejects_gaps() {
        let err = AccelProfile::new(vec![
            LinearSegment::new(0.0, 1.0, 0.0, 2.0),
            LinearSegment::new(0.0, 1.0, 2.5, 3.0),
        ])
        .unwrap_err();
        assert!(matches!(err, KinematicsError::NonContiguous { index: 1, .. }));
        assert_eq!(AccelProfile::new(vec![]).unwrap_err(), KinematicsError::Empty);
    }

    #[test]
    fn zero_duration_is_identity() {
        let s0 = VehicleState::new(3.0, 17.0, 4.0);
        let seg = LinearSegment::new(4.0, -3.0, 3.0, 3.0);
        let s = segment_end_state(s0, &seg);
        assert_eq!((s.x, s.v), (s0.x, s0.v));
        assert_eq!(segment_energy(s0, &seg), 0.0);
    }

    #[test]
    fn integrator_constant_speed_and_constant_accel() {
        let samples = integrate_numeric(
            &single(LinearSegment::new(0.0, 0.0, 0.0, 10.0)),
            VehicleState::new(0.0, 0.0, 3.0),
            0.1,
        );
        assert!(samples.iter().all(|s| s.v == 3.0));
        let samples = integrate_numeric(
            &single(LinearSegment::new(0.0, 2.5, 0.0, 8.0)),
            VehicleState::new(0.0, 0.0, 0.0),
            1e-3,
        );
        let last = samples.last().unwrap();
        assert!((last.x - 80.0).abs() <= 1e-9 * 80.0);
        let samples = integrate_numeric(
            &single(LinearSegment::new(1.0, 0.0, 0.0, 2.0)),
            VehicleState::new(0.0, 0.0, 0.0),
            1e-4,
        );
        let last = samples.last().unwrap();
        assert!((last.x - 4.0 / 3.0).abs() <= 1e-8 * 4.0 / 3.0);
        assert!((last.energy - 8.0 / 3.0).abs() <= 1e-8 * 8.0 / 3.0);
    }

    #[test]
    fn energy_between_splits_segments() {
        let p = AccelProfile::new(vec![
            LinearSegment::new(0.0, 2.0, 0.0, 4.0),
            LinearSegment::new(-1.0, 6.0, 4.0, 6.0),
        ])
        .unwrap();
        let s0 = VehicleState::new(0.0, 0.0, 0.0);
        let whole = p.energy(s0);
        let parts = p.energy_between(0.0, 3.0) + p.energy_between(3.0, 6.0);
        assert!(close(whole, parts, 1e-13));
    }
}
