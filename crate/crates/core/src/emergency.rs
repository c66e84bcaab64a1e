//! Emergency behavior from two sequential convex QPs: a longitudinal braking
//! profile first, then a lateral offset profile along it.
//!
//! Both problems pin the first two samples to the current state and its
//! one-step extrapolation. Objectives are scaled by `dt^6`, which leaves the
//! minimizer unchanged and keeps the matrices well scaled.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::qp::{Qp, QpError};
use crate::road_model::RoutePath;
use crate::types::{BehaviorTrajectory, Maneuver};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmergencyParams {
    /// Strongest admissible deceleration (negative) [m/s^2].
    pub a_min: f64,
    /// Weight of the terminal speed.
    pub w_v: f64,
    /// Weight of the lateral offset.
    pub w_d: f64,
    pub a_lat_max: f64,
    /// Bound on lateral over longitudinal progress per step.
    pub slope_max: f64,
}

impl Default for EmergencyParams {
    fn default() -> Self {
        EmergencyParams {
            a_min: -8.0,
            w_v: 10.0,
            w_d: 0.1,
            a_lat_max: 6.0,
            slope_max: 0.5,
        }
    }
}

/// Longitudinal problem, arc lengths relative to the current position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LonProblem {
    pub v0: f64,
    pub a0: f64,
    /// Pinned progress over the first step [m].
    pub first_step: f64,
    pub a_min: f64,
    pub s_stop: f64,
    pub w_v: f64,
    pub n: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LonTrace {
    pub s: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
    pub kkt_residual: f64,
}

impl LonTrace {
    fn from_positions(s: Vec<f64>, dt: f64, kkt_residual: f64) -> Self {
        let n = s.len();
        let mut v: Vec<f64> = (0..n - 1).map(|i| (s[i + 1] - s[i]) / dt).collect();
        v.push(*v.last().unwrap_or(&0.0));
        let mut a: Vec<f64> = (0..n - 1).map(|i| (v[i + 1] - v[i]) / dt).collect();
        a.push(0.0);
        LonTrace { s, v, a, kkt_residual }
    }

    /// Braking at `a_min` from the pinned first step on.
    pub fn full_braking(first_step: f64, a_min: f64, n: usize, dt: f64) -> Self {
        let mut s = vec![0.0, first_step];
        let mut v = first_step / dt;
        while s.len() < n {
            v = (v + a_min * dt).max(0.0);
            let last = *s.last().unwrap();
            s.push(last + v * dt);
        }
        LonTrace::from_positions(s, dt, 0.0)
    }
}

/// Quadratic and linear terms built from linear expressions over the full
/// sample vector, of which the first two entries are fixed.
struct Builder {
    n: usize,
    fixed: [f64; 2],
    g: DMatrix<f64>,
    c: DVector<f64>,
    rows: Vec<(Vec<f64>, f64)>,
}

impl Builder {
    fn new(n: usize, fixed: [f64; 2]) -> Self {
        let m = n - 2;
        Builder {
            n,
            fixed,
            g: DMatrix::zeros(m, m),
            c: DVector::zeros(m),
            rows: Vec::new(),
        }
    }

    /// Splits `Σ coef_i x_{start+i}` into free coefficients and a constant.
    fn expr(&self, start: usize, coef: &[f64]) -> (Vec<(usize, f64)>, f64) {
        let mut free = Vec::new();
        let mut constant = 0.0;
        for (k, &ck) in coef.iter().enumerate() {
            let i = start + k;
            if i < 2 {
                constant += ck * self.fixed[i];
            } else {
                free.push((i - 2, ck));
            }
        }
        (free, constant)
    }

    /// Adds `w (expr - target)^2`.
    fn square(&mut self, w: f64, start: usize, coef: &[f64], target: f64) {
        let (free, constant) = self.expr(start, coef);
        let off = constant - target;
        for &(i, ci) in &free {
            self.c[i] += 2.0 * w * ci * off;
            for &(j, cj) in &free {
                self.g[(i, j)] += 2.0 * w * ci * cj;
            }
        }
    }

    /// Adds `expr >= bound`.
    fn at_least(&mut self, start: usize, coef: &[f64], bound: f64) {
        let (free, constant) = self.expr(start, coef);
        if free.is_empty() {
            return;
        }
        let mut row = vec![0.0; self.n - 2];
        for (i, ci) in free {
            row[i] += ci;
        }
        self.rows.push((row, bound - constant));
    }

    fn finish(self) -> (Qp, [f64; 2]) {
        let m = self.n - 2;
        let a = DMatrix::from_fn(self.rows.len(), m, |r, c| self.rows[r].0[c]);
        let b = DVector::from_iterator(self.rows.len(), self.rows.iter().map(|r| r.1));
        (Qp { g: self.g, c: self.c, a, b }, self.fixed)
    }
}

fn full(fixed: [f64; 2], x: &DVector<f64>) -> Vec<f64> {
    let mut out = vec![fixed[0], fixed[1]];
    out.extend(x.iter().copied());
    out
}

const D2: [f64; 3] = [1.0, -2.0, 1.0];
const D3: [f64; 4] = [-1.0, 3.0, -3.0, 1.0];

/// Minimum-jerk braking profile with nonnegative speed, acceleration in
/// `[a_min, 0]` and final position at most `s_stop`.
pub fn solve_emergency_lon(p: &LonProblem) -> Result<LonTrace, QpError> {
    if p.n < 4 || p.a_min >= 0.0 {
        return Err(QpError::Dimensions);
    }
    if p.v0 * p.v0 / (2.0 * -p.a_min) > p.s_stop {
        return Err(QpError::Infeasible);
    }
    let dt = p.dt;
    let dt2 = dt * dt;
    let mut b = Builder::new(p.n, [0.0, p.first_step]);
    b.square(1.0, 0, &D2, p.a0 * dt2);
    for i in 0..p.n - 3 {
        b.square(1.0, i, &D3, 0.0);
    }
    b.square(p.w_v * dt2 * dt2, p.n - 2, &[-1.0, 1.0], 0.0);
    for i in 1..p.n - 1 {
        b.at_least(i, &[-1.0, 1.0], 0.0);
    }
    for i in 0..p.n - 2 {
        b.at_least(i, &[-1.0, 2.0, -1.0], 0.0);
        b.at_least(i, &D2, p.a_min * dt2);
    }
    b.at_least(p.n - 1, &[-1.0], -p.s_stop);
    let (qp, fixed) = b.finish();
    let sol = qp.solve()?;
    let res = qp.stationarity(&sol);
    Ok(LonTrace::from_positions(full(fixed, &sol.x), dt, res))
}

/// Lateral problem along an accepted longitudinal trace.
#[derive(Debug, Clone, PartialEq)]
pub struct LatProblem {
    pub d0: f64,
    pub d1: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub a_lat_max: f64,
    pub slope_max: f64,
    pub w_d: f64,
    pub dt: f64,
}

/// Smooth lateral offsets inside `[lo, hi]` with bounded lateral
/// acceleration and lateral progress tied to the longitudinal progress.
pub fn solve_emergency_lat(p: &LatProblem, lon: &LonTrace) -> Result<Vec<f64>, QpError> {
    let n = lon.s.len();
    if n < 4 || p.lo.len() != n || p.hi.len() != n {
        return Err(QpError::Dimensions);
    }
    let dt2 = p.dt * p.dt;
    let scale = dt2 * dt2 * dt2;
    let mut b = Builder::new(n, [p.d0, p.d1]);
    b.square(1.0, 0, &D2, 0.0);
    for i in 0..n - 3 {
        b.square(1.0, i, &D3, 0.0);
    }
    for i in 2..n {
        b.square(p.w_d * scale, i, &[1.0], 0.0);
    }
    for i in 2..n {
        if p.lo[i] > p.hi[i] {
            return Err(QpError::Infeasible);
        }
        b.at_least(i, &[1.0], p.lo[i]);
        b.at_least(i, &[-1.0], -p.hi[i]);
    }
    for i in 0..n - 2 {
        b.at_least(i, &D2, -p.a_lat_max * dt2);
        b.at_least(i, &[-1.0, 2.0, -1.0], -p.a_lat_max * dt2);
    }
    for i in 1..n - 1 {
        let reach = p.slope_max * (lon.s[i + 1] - lon.s[i]).max(0.0);
        b.at_least(i, &[-1.0, 1.0], -reach);
        b.at_least(i, &[1.0, -1.0], -reach);
    }
    let (qp, fixed) = b.finish();
    let sol = qp.solve()?;
    Ok(full(fixed, &sol.x))
}

/// Maps `(s, d)` traces onto the path; `s0` is the path arc length of the
/// first sample.
pub fn assemble_emergency_trajectory(
    lon: &LonTrace,
    lat: &[f64],
    path: &RoutePath,
    s0: f64,
    dt: f64,
    maneuver: Maneuver,
) -> BehaviorTrajectory {
    let len = path.length();
    let s: Vec<f64> = lon.s.iter().map(|&x| (s0 + x).clamp(0.0, len)).collect();
    let points = s
        .iter()
        .zip(lat)
        .map(|(&si, &di)| path.centerline.frenet_to_cartesian(si, di).expect("clamped arc length"))
        .collect();
    BehaviorTrajectory {
        points,
        s,
        v: lon.v.clone(),
        a: lon.a.clone(),
        dt,
        maneuver,
    }
}

/// An obstacle span in ego mass-center coordinates: while the ego center is
/// within `[s_from, s_to]` it must stay outside `(d_lo, d_hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleSpan {
    pub s_from: f64,
    pub s_to: f64,
    pub d_lo: f64,
    pub d_hi: f64,
}

/// Inputs of a full emergency plan; arc lengths are path coordinates.
pub struct EmergencyInput<'a> {
    pub path: &'a RoutePath,
    pub s0: f64,
    pub d0: f64,
    pub d1: f64,
    pub v0: f64,
    pub a0: f64,
    pub first_step: f64,
    /// Furthest admissible mass-center position.
    pub s_stop: f64,
    pub obstacle: Option<ObstacleSpan>,
    /// Admissible mass-center offsets at a path arc length.
    pub bounds_at: &'a dyn Fn(f64) -> (f64, f64),
    pub n: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmergencyOutcome {
    /// Braking alone stops short of the obstacle.
    Braking,
    /// Braking alone is insufficient; the lateral evasion succeeded.
    Evasive,
    /// Neither worked; full braking is returned.
    LastResort,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmergencyPlan {
    pub behavior: BehaviorTrajectory,
    pub outcome: EmergencyOutcome,
    pub lon_infeasible: bool,
    pub evasion_attempted: bool,
}

/// Longitudinal QP toward `s_stop`; on infeasibility full braking with a
/// lateral evasion around the obstacle.
pub fn plan_emergency(input: &EmergencyInput<'_>, params: &EmergencyParams) -> EmergencyPlan {
    let lon_problem = LonProblem {
        v0: input.v0,
        a0: input.a0.min(0.0).max(params.a_min),
        first_step: input.first_step,
        a_min: params.a_min,
        s_stop: input.s_stop - input.s0,
        w_v: params.w_v,
        n: input.n,
        dt: input.dt,
    };
    let lat_problem = |lon: &LonTrace, with_obstacle: bool| {
        let mut lo = Vec::with_capacity(input.n);
        let mut hi = Vec::with_capacity(input.n);
        for &ds in &lon.s {
            let s = input.s0 + ds;
            let (mut l, mut h) = (input.bounds_at)(s);
            if let (true, Some(ob)) = (with_obstacle, input.obstacle) {
                if s >= ob.s_from && s <= ob.s_to {
                    let room_left = h - ob.d_hi;
                    let room_right = ob.d_lo - l;
                    if room_left >= room_right {
                        l = l.max(ob.d_hi);
                    } else {
                        h = h.min(ob.d_lo);
                    }
                }
            }
            lo.push(l);
            hi.push(h);
        }
        LatProblem {
            d0: input.d0,
            d1: input.d1,
            lo,
            hi,
            a_lat_max: params.a_lat_max,
            slope_max: params.slope_max,
            w_d: params.w_d,
            dt: input.dt,
        }
    };
    if let Ok(lon) = solve_emergency_lon(&lon_problem) {
        let lat = solve_emergency_lat(&lat_problem(&lon, false), &lon)
            .unwrap_or_else(|_| straight_offsets(input, lon.s.len()));
        return EmergencyPlan {
            behavior: assemble_emergency_trajectory(&lon, &lat, input.path, input.s0, input.dt, Maneuver::Emergency),
            outcome: EmergencyOutcome::Braking,
            lon_infeasible: false,
            evasion_attempted: false,
        };
    }
    let lon = LonTrace::full_braking(input.first_step, params.a_min, input.n, input.dt);
    match solve_emergency_lat(&lat_problem(&lon, true), &lon) {
        Ok(lat) => EmergencyPlan {
            behavior: assemble_emergency_trajectory(&lon, &lat, input.path, input.s0, input.dt, Maneuver::Evasive),
            outcome: EmergencyOutcome::Evasive,
            lon_infeasible: true,
            evasion_attempted: true,
        },
        Err(_) => {
            let lat = straight_offsets(input, lon.s.len());
            EmergencyPlan {
                behavior: assemble_emergency_trajectory(&lon, &lat, input.path, input.s0, input.dt, Maneuver::Emergency),
                outcome: EmergencyOutcome::LastResort,
                lon_infeasible: true,
                evasion_attempted: true,
            }
        }
    }
}

/// Keeps the pinned lateral velocity decaying linearly to zero.
fn straight_offsets(input: &EmergencyInput<'_>, n: usize) -> Vec<f64> {
    let mut d = vec![input.d0, input.d1];
    let mut rate = input.d1 - input.d0;
    while d.len() < n {
        rate *= 0.8;
        let last = *d.last().unwrap();
        d.push(last + rate);
    }
    d
}
