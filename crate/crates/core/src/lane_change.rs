//! Lane-change rollouts: pure-pursuit steering toward the target centerline
//! on a kinematic single-track model, with longitudinal acceleration from the
//! enhanced IDM against the target-lane leader.

use serde::{Deserialize, Serialize};

use crate::driver_models::{eidm_accel, IdmParams, LeaderObservation};
use crate::geometry::{normalize_angle, Vec2};
use crate::road_model::{Polyline, RoutePath};
use crate::types::{BehaviorTrajectory, Maneuver};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleTrackState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
}

impl SingleTrackState {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SingleTrackParams {
    /// Mass center to front axle [m].
    pub l_f: f64,
    /// Mass center to rear axle [m].
    pub l_r: f64,
    pub delta_max: f64,
    /// Lookahead time [s]; lookahead distance is `max(lookahead_min, gain * v)`.
    pub lookahead_gain: f64,
    pub lookahead_min: f64,
}

impl Default for SingleTrackParams {
    fn default() -> Self {
        SingleTrackParams {
            l_f: 1.4,
            l_r: 1.4,
            delta_max: 0.5,
            lookahead_gain: 1.0,
            lookahead_min: 4.0,
        }
    }
}

impl SingleTrackParams {
    pub fn wheelbase(&self) -> f64 {
        self.l_f + self.l_r
    }

    pub fn lookahead(&self, v: f64) -> f64 {
        self.lookahead_min.max(self.lookahead_gain * v)
    }
}

/// Point on `line` at distance `radius` from `c`, searching forward from the
/// projection of `c`; falls back to the nearer end point.
pub fn lookahead_point(c: Vec2, line: &Polyline, radius: f64) -> Vec2 {
    let proj = line.project(c);
    let pts = line.points();
    for seg in proj.segment..line.num_segments() {
        let a = if seg == proj.segment { proj.foot } else { pts[seg] };
        let b = pts[seg + 1];
        let d = b - a;
        let f = a - c;
        let qa = d.norm_sq();
        if qa == 0.0 {
            continue;
        }
        let qb = 2.0 * f.dot(d);
        let qc = f.norm_sq() - radius * radius;
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            continue;
        }
        let t = (-qb + disc.sqrt()) / (2.0 * qa);
        if (0.0..=1.0).contains(&t) {
            return a + d * t;
        }
    }
    let first = pts[0];
    let last = *pts.last().unwrap();
    if c.distance(last) <= c.distance(first) {
        last
    } else {
        first
    }
}

/// Steering angle that puts the mass center on a circular arc through `target`.
pub fn steering_toward(state: &SingleTrackState, target: Vec2, params: &SingleTrackParams) -> f64 {
    let rel = target - state.position();
    let dist = rel.norm();
    if dist < 1e-9 {
        return 0.0;
    }
    let alpha = normalize_angle(rel.angle() - state.theta);
    // target behind the vehicle: turn as hard as possible toward it
    if alpha.abs() > std::f64::consts::FRAC_PI_2 {
        return params.delta_max.copysign(alpha);
    }
    let kappa = 2.0 * alpha.sin() / dist;
    (params.wheelbase() * kappa).atan().clamp(-params.delta_max, params.delta_max)
}

pub fn pure_pursuit_steering(state: &SingleTrackState, target_line: &Polyline, params: &SingleTrackParams) -> f64 {
    let radius = params.lookahead(state.v);
    let target = lookahead_point(state.position(), target_line, radius);
    steering_toward(state, target, params)
}

fn derivative(s: &SingleTrackState, delta: f64, a: f64, wheelbase: f64) -> [f64; 4] {
    [s.theta.cos() * s.v, s.theta.sin() * s.v, s.v * delta / wheelbase, a]
}

/// One RK4 step with constant controls. Braking that would reverse the
/// vehicle within the step is shortened so the speed ends at zero.
pub fn integrate_single_track(state: &SingleTrackState, delta: f64, a: f64, dt: f64, params: &SingleTrackParams) -> SingleTrackState {
    let a = if state.v + a * dt < 0.0 { -state.v / dt } else { a };
    let wb = params.wheelbase();
    let add = |s: &SingleTrackState, k: &[f64; 4], h: f64| SingleTrackState {
        x: s.x + h * k[0],
        y: s.y + h * k[1],
        theta: s.theta + h * k[2],
        v: s.v + h * k[3],
    };
    let k1 = derivative(state, delta, a, wb);
    let k2 = derivative(&add(state, &k1, 0.5 * dt), delta, a, wb);
    let k3 = derivative(&add(state, &k2, 0.5 * dt), delta, a, wb);
    let k4 = derivative(&add(state, &k3, dt), delta, a, wb);
    let mut out = *state;
    out.x += dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
    out.y += dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
    out.theta = normalize_angle(state.theta + dt / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]));
    out.v = (state.v + dt * a).max(0.0);
    out
}

/// Target-lane leader as seen along the target path: rear-bumper arc length
/// and speed per step.
#[derive(Debug, Clone, PartialEq)]
pub struct PathLeader {
    pub rear_s: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
}

impl PathLeader {
    fn observe(&self, step: usize, front_s: f64, v: f64) -> LeaderObservation {
        let i = step.min(self.rear_s.len() - 1);
        LeaderObservation::new(self.rear_s[i] - front_s, v - self.v[i], self.a[i])
    }
}

/// Rolls out a lane change over `n` points spaced `dt` apart; point 0 is the
/// current state.
#[allow(clippy::too_many_arguments)]
pub fn generate_lane_change(
    start: SingleTrackState,
    ego_length: f64,
    v_desired: f64,
    target: &RoutePath,
    leader: Option<&PathLeader>,
    idm: &IdmParams,
    params: &SingleTrackParams,
    n: usize,
    dt: f64,
) -> BehaviorTrajectory {
    let mut state = start;
    let mut out = BehaviorTrajectory {
        points: Vec::with_capacity(n),
        s: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        a: Vec::with_capacity(n),
        dt,
        maneuver: Maneuver::LaneChange,
    };
    let mut s_hint = target.project(state.position()).s;
    for step in 0..n {
        let proj = target.centerline.project_window(state.position(), s_hint - 10.0, s_hint + 30.0);
        s_hint = proj.s;
        let obs = leader.map(|l| l.observe(step, proj.s + 0.5 * ego_length, state.v));
        let p = idm.with_target(target.target_speed(proj.s).min(v_desired).max(0.1));
        let a = eidm_accel(state.v, obs.as_ref(), &p);
        let delta = pure_pursuit_steering(&state, &target.centerline, params);
        out.points.push(state.position());
        out.s.push(proj.s);
        out.v.push(state.v);
        let next = integrate_single_track(&state, delta, a, dt, params);
        out.a.push((next.v - state.v) / dt);
        state = next;
    }
    out
}
