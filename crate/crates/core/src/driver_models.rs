//! Car-following models (IDM and the enhanced IDM with the constant
//! acceleration heuristic) and the virtual-leader mapping used for merging.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdmParams {
    /// Maximum acceleration [m/s^2].
    pub a: f64,
    /// Comfortable deceleration, positive [m/s^2].
    pub b: f64,
    /// Desired speed [m/s]; usually overwritten per step from a velocity profile.
    pub v_target: f64,
    /// Desired time headway [s].
    pub t_headway: f64,
    /// Jam distance [m].
    pub s0: f64,
    /// Acceleration exponent.
    pub zeta: f64,
    /// Coolness factor of the enhanced model, in [0, 1].
    pub c: f64,
    /// Lower clamp on the returned acceleration, positive [m/s^2].
    pub b_emergency: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        IdmParams {
            a: 1.4,
            b: 2.0,
            v_target: 13.89,
            t_headway: 1.5,
            s0: 2.0,
            zeta: 4.0,
            c: 0.99,
            b_emergency: 9.0,
        }
    }
}

impl IdmParams {
    pub fn with_target(mut self, v_target: f64) -> Self {
        self.v_target = v_target;
        self
    }

    pub fn is_valid(&self) -> bool {
        self.a > 0.0
            && self.b > 0.0
            && self.s0 > 0.0
            && self.t_headway > 0.0
            && self.v_target > 0.0
            && self.zeta >= 1.0
            && (0.0..=1.0).contains(&self.c)
            && self.b_emergency > 0.0
    }
}

/// What the follower sees of its leader.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeaderObservation {
    /// Bumper-to-bumper gap [m].
    pub gap: f64,
    /// Follower speed minus leader speed [m/s].
    pub dv: f64,
    /// Leader acceleration [m/s^2].
    pub leader_accel: f64,
}

impl LeaderObservation {
    pub fn new(gap: f64, dv: f64, leader_accel: f64) -> Self {
        LeaderObservation { gap, dv, leader_accel }
    }

    /// The tighter of two optional observations (smaller gap wins).
    pub fn closest(a: Option<Self>, b: Option<Self>) -> Option<Self> {
        match (a, b) {
            (Some(x), Some(y)) => Some(if y.gap < x.gap { y } else { x }),
            (x, None) => x,
            (None, y) => y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DriverModel {
    Idm,
    Eidm,
}

pub fn idm_desired_gap(v: f64, dv: f64, p: &IdmParams) -> f64 {
    p.s0 + (v * p.t_headway + v * dv / (2.0 * (p.a * p.b).sqrt())).max(0.0)
}

/// Plain IDM acceleration. Gaps at or below zero return the emergency clamp.
pub fn idm_accel(v: f64, leader: Option<&LeaderObservation>, p: &IdmParams) -> f64 {
    let free = 1.0 - (v / p.v_target).powf(p.zeta);
    let raw = match leader {
        None => p.a * free,
        Some(l) if l.gap <= 0.0 => return -p.b_emergency,
        Some(l) => {
            let ratio = idm_desired_gap(v, l.dv, p) / l.gap;
            p.a * (free - ratio * ratio)
        }
    };
    raw.max(-p.b_emergency)
}

/// Constant-acceleration heuristic: the acceleration that avoids a crash if
/// the leader keeps its (capped) acceleration.
pub fn cah_accel(v: f64, l: &LeaderObservation, p: &IdmParams) -> f64 {
    let a_lead = l.leader_accel.min(p.a);
    let v_lead = v - l.dv;
    let gap = l.gap.max(1e-6);
    let denom = v_lead * v_lead - 2.0 * gap * a_lead;
    // the first branch degenerates to 0/0 for a stationary, non-accelerating
    // leader; its limit coincides with the second branch
    if v_lead * l.dv <= -2.0 * gap * a_lead && denom > 1e-9 {
        v * v * a_lead / denom
    } else {
        let closing = l.dv.max(0.0);
        a_lead - closing * closing / (2.0 * gap)
    }
}

/// Enhanced IDM: IDM blended with the constant-acceleration heuristic
/// wherever the IDM would brake harder than the heuristic.
pub fn eidm_accel(v: f64, leader: Option<&LeaderObservation>, p: &IdmParams) -> f64 {
    let a_idm = idm_accel(v, leader, p);
    let l = match leader {
        Some(l) if l.gap > 0.0 => l,
        _ => return a_idm,
    };
    let a_cah = cah_accel(v, l, p);
    if a_idm >= a_cah {
        return a_idm;
    }
    let blended = (1.0 - p.c) * a_idm + p.c * (a_cah + p.b * ((a_idm - a_cah) / p.b).tanh());
    blended.max(-p.b_emergency)
}

pub fn model_accel(model: DriverModel, v: f64, leader: Option<&LeaderObservation>, p: &IdmParams) -> f64 {
    match model {
        DriverModel::Idm => idm_accel(v, leader, p),
        DriverModel::Eidm => eidm_accel(v, leader, p),
    }
}

/// One integrated sample along a lane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LonSample {
    pub s: f64,
    pub v: f64,
    /// Applied acceleration over the following step.
    pub a: f64,
}

/// Semi-implicit Euler integration of a car-following model.
///
/// `leader_at(step, s, v)` returns the observation for the follower state at
/// that step and `v_target_at(s)` the desired speed. The returned trace has
/// `n_steps + 1` samples starting at `(s0, v0)`.
#[allow(clippy::too_many_arguments)]
pub fn integrate_along_lane(
    initial: (f64, f64),
    mut leader_at: impl FnMut(usize, f64, f64) -> Option<LeaderObservation>,
    v_target_at: impl Fn(f64) -> f64,
    model: DriverModel,
    params: &IdmParams,
    dt: f64,
    n_steps: usize,
) -> Vec<LonSample> {
    let (mut s, mut v) = (initial.0, initial.1.max(0.0));
    let mut out = Vec::with_capacity(n_steps + 1);
    for step in 0..=n_steps {
        let leader = leader_at(step, s, v);
        let p = params.with_target(v_target_at(s).max(0.1));
        let a_model = model_accel(model, v, leader.as_ref(), &p);
        let v_next = (v + a_model * dt).max(0.0);
        let a = (v_next - v) / dt;
        out.push(LonSample { s, v, a });
        if step < n_steps {
            s += 0.5 * (v + v_next) * dt;
            v = v_next;
        }
    }
    out
}

/// Leader moving along the same path, described by its rear-bumper position
/// and speed at each step.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderTrace {
    pub rear_s: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
}

impl LeaderTrace {
    pub fn stationary(rear_s: f64, steps: usize) -> Self {
        LeaderTrace {
            rear_s: vec![rear_s; steps + 1],
            v: vec![0.0; steps + 1],
            a: vec![0.0; steps + 1],
        }
    }

    pub fn constant_speed(rear_s: f64, v: f64, dt: f64, steps: usize) -> Self {
        LeaderTrace {
            rear_s: (0..=steps).map(|i| rear_s + v * dt * i as f64).collect(),
            v: vec![v; steps + 1],
            a: vec![0.0; steps + 1],
        }
    }

    /// Observation for a follower whose front bumper is at `front_s`.
    pub fn observe(&self, step: usize, front_s: f64, v: f64) -> LeaderObservation {
        let i = step.min(self.rear_s.len() - 1);
        LeaderObservation::new(self.rear_s[i] - front_s, v - self.v[i], self.a[i])
    }
}

/// Places a vehicle on a conflicting lane as a virtual leader on the ego lane
/// by matching distances to the conflict point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualLeaderInput {
    /// Ego front-bumper arc length on the ego path.
    pub ego_front_s: f64,
    pub ego_v: f64,
    /// Other vehicle rear-bumper arc length on its own path.
    pub other_rear_s: f64,
    pub other_v: f64,
    pub other_accel: f64,
    pub other_length: f64,
    /// Conflict point on the ego path.
    pub conflict_ego_s: f64,
    /// Conflict point on the other path.
    pub conflict_other_s: f64,
    pub margin: f64,
}

/// Returns `None` once the other vehicle has passed its conflict point by
/// more than its body length.
pub fn virtual_leader(input: &VirtualLeaderInput) -> Option<LeaderObservation> {
    if input.other_rear_s - input.conflict_other_s > input.other_length {
        return None;
    }
    let gap = (input.conflict_ego_s - input.ego_front_s)
        - (input.conflict_other_s - input.other_rear_s)
        - input.margin;
    Some(LeaderObservation::new(gap, input.ego_v - input.other_v, input.other_accel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn desired_gap_examples() {
        let p = IdmParams::default();
        assert_relative_eq!(idm_desired_gap(0.0, 0.0, &p), p.s0);
        assert_relative_eq!(idm_desired_gap(10.0, 0.0, &p), 17.0);
        let p2 = IdmParams { a: 1.5, b: 2.0, ..p };
        let expected = 2.0 + 15.0 + 20.0 / (2.0 * 3f64.sqrt());
        assert_relative_eq!(idm_desired_gap(10.0, 2.0, &p2), expected, epsilon = 1e-12);
        assert_relative_eq!(expected, 22.7735, epsilon = 1e-4);
    }

    #[test]
    fn idm_free_road_and_equilibrium() {
        let p = IdmParams::default();
        assert_relative_eq!(idm_accel(p.v_target, None, &p), 0.0);
        assert_relative_eq!(idm_accel(0.0, None, &p), p.a);
        let p_inf = p.with_target(f64::INFINITY);
        let gap = idm_desired_gap(10.0, 0.0, &p_inf);
        let l = LeaderObservation::new(gap, 0.0, 0.0);
        assert_relative_eq!(idm_accel(10.0, Some(&l), &p_inf), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn idm_clamps_at_emergency_deceleration() {
        let p = IdmParams::default();
        let l = LeaderObservation::new(0.5, 10.0, 0.0);
        assert_eq!(idm_accel(20.0, Some(&l), &p), -p.b_emergency);
        let l = LeaderObservation::new(0.0, 0.0, 0.0);
        assert_eq!(idm_accel(5.0, Some(&l), &p), -p.b_emergency);
    }

    #[test]
    fn eidm_without_leader_is_idm() {
        let p = IdmParams::default();
        for v in [0.0, 3.0, 13.0, 20.0] {
            assert_eq!(eidm_accel(v, None, &p), idm_accel(v, None, &p));
        }
    }

    #[test]
    fn eidm_blend_arithmetic() {
        // c = 0 leaves the IDM value untouched
        let p = IdmParams { c: 0.0, ..IdmParams::default() }.with_target(30.0);
        let l = LeaderObservation::new(10.0, 0.0, 0.0);
        let a_idm = idm_accel(20.0, Some(&l), &p);
        assert!(a_idm < cah_accel(20.0, &l, &p));
        assert_relative_eq!(eidm_accel(20.0, Some(&l), &p), a_idm);

        // c = 0.5, hand evaluation of the blend
        let p = IdmParams { c: 0.5, ..p };
        let a_idm = idm_accel(20.0, Some(&l), &p);
        let a_cah = 0.0; // leader not accelerating, no closing speed
        let expected = 0.5 * a_idm + 0.5 * (a_cah + p.b * ((a_idm - a_cah) / p.b).tanh());
        assert_relative_eq!(eidm_accel(20.0, Some(&l), &p), expected.max(-p.b_emergency));
    }

    #[test]
    fn eidm_softens_approach() {
        let p = IdmParams::default().with_target(30.0);
        let l = LeaderObservation::new(10.0, 0.0, 0.0);
        assert!(eidm_accel(20.0, Some(&l), &p) > idm_accel(20.0, Some(&l), &p));
    }

    #[test]
    fn integrate_constant_speed() {
        let p = IdmParams::default();
        let trace = integrate_along_lane((0.0, p.v_target), |_, _, _| None, |_| p.v_target, DriverModel::Eidm, &p, 0.05, 40);
        assert_eq!(trace.len(), 41);
        for (i, smp) in trace.iter().enumerate() {
            assert_relative_eq!(smp.v, p.v_target);
            assert_relative_eq!(smp.s, p.v_target * 0.05 * i as f64, epsilon = 1e-9);
        }
    }

    #[test]
    fn integrate_from_rest_matches_fine_reference() {
        let p = IdmParams::default();
        let coarse = integrate_along_lane((0.0, 0.0), |_, _, _| None, |_| p.v_target, DriverModel::Eidm, &p, 0.05, 1200);
        // reference with dt / 100
        let fine = integrate_along_lane((0.0, 0.0), |_, _, _| None, |_| p.v_target, DriverModel::Eidm, &p, 0.0005, 120_000);
        for w in coarse.windows(2) {
            assert!(w[1].v >= w[0].v);
        }
        for (i, smp) in coarse.iter().enumerate() {
            assert!((smp.v - fine[i * 100].v).abs() < 0.05);
        }
        assert!((coarse.last().unwrap().v - p.v_target).abs() < 0.1);
    }

    #[test]
    fn integrate_stops_behind_stationary_leader() {
        let p = IdmParams::default();
        let leader_rear = 30.0;
        let trace = integrate_along_lane(
            (0.0, 10.0),
            |_, s, v| Some(LeaderObservation::new(leader_rear - s, v, 0.0)),
            |_| p.v_target,
            DriverModel::Eidm,
            &p,
            0.05,
            1200,
        );
        let last = trace.last().unwrap();
        assert!(last.v < 1e-3);
        assert!(leader_rear - last.s >= p.s0 - 0.5);
    }

    #[test]
    fn virtual_leader_examples() {
        let base = VirtualLeaderInput {
            ego_front_s: 50.0,
            ego_v: 10.0,
            other_rear_s: 50.0,
            other_v: 10.0,
            other_accel: 0.0,
            other_length: 4.5,
            conflict_ego_s: 100.0,
            conflict_other_s: 100.0,
            margin: 0.0,
        };
        assert_eq!(virtual_leader(&base).unwrap().gap, 0.0);
        let l = virtual_leader(&VirtualLeaderInput {
            ego_front_s: 20.0,
            other_rear_s: 70.0,
            margin: 5.0,
            ..base
        })
        .unwrap();
        assert_eq!(l.gap, 45.0);
        assert!(virtual_leader(&VirtualLeaderInput { other_rear_s: 109.0, ..base }).is_none());
    }

    fn params_strategy() -> impl Strategy<Value = IdmParams> {
        (0.5..3.0f64, 0.5..4.0f64, 3.0..35.0f64, 0.5..2.5f64, 0.5..5.0f64, 1.0..6.0f64, 0.0..=1.0f64).prop_map(
            |(a, b, v_target, t_headway, s0, zeta, c)| IdmParams {
                a,
                b,
                v_target,
                t_headway,
                s0,
                zeta,
                c,
                b_emergency: 9.0,
            },
        )
    }

    proptest! {
        #[test]
        fn idm_monotone_in_gap_and_speed(p in params_strategy(), v in 0.0..30.0f64, gap in 0.5..150.0f64, dgap in 0.0..20.0f64, dv in -10.0..10.0f64, dspeed in 0.0..5.0f64) {
            let lead_v = (v - dv).max(0.0);
            let l1 = LeaderObservation::new(gap, v - lead_v, 0.0);
            let l2 = LeaderObservation::new(gap + dgap, v - lead_v, 0.0);
            prop_assert!(idm_accel(v, Some(&l2), &p) >= idm_accel(v, Some(&l1), &p) - 1e-12);
            // faster follower behind the same leader
            let l3 = LeaderObservation::new(gap, v + dspeed - lead_v, 0.0);
            prop_assert!(idm_accel(v + dspeed, Some(&l3), &p) <= idm_accel(v, Some(&l1), &p) + 1e-12);
        }

        #[test]
        fn eidm_dominates_idm(p in params_strategy(), v in 0.0..35.0f64, gap in 0.01..200.0f64, dv in -15.0..15.0f64, al in -9.0..3.0f64) {
            let l = LeaderObservation::new(gap, dv.min(v), al);
            prop_assert!(eidm_accel(v, Some(&l), &p) >= idm_accel(v, Some(&l), &p));
        }

        #[test]
        fn no_negative_gap_behind_static_leader(p in params_strategy(), v0 in 0.0..25.0f64, extra in 0.0..80.0f64, dt in 0.01..0.05f64) {
            // start states from which a stop is kinematically possible
            let leader_rear = p.s0 + extra + v0 * v0 / (2.0 * 0.8 * p.b_emergency);
            let trace = integrate_along_lane((0.0, v0), |_, s, v| Some(LeaderObservation::new(leader_rear - s, v, 0.0)), |_| p.v_target, DriverModel::Eidm, &p, dt, (20.0 / dt) as usize);
            for smp in &trace {
                prop_assert!(leader_rear - smp.s >= 0.0, "gap {} at v0 {}", leader_rear - smp.s, v0);
            }
        }
    }

    #[test]
    fn integration_converges_with_step_size() {
        let p = IdmParams::default();
        let run = |dt: f64| {
            let n = (10.0 / dt).round() as usize;
            integrate_along_lane((0.0, 2.0), |_, s, v| Some(LeaderObservation::new(120.0 - s, v, 0.0)), |_| p.v_target, DriverModel::Idm, &p, dt, n)
                .last()
                .unwrap()
                .s
        };
        let (s1, s2, s3) = (run(0.04), run(0.02), run(0.01));
        let e1 = (s1 - s3).abs();
        let e2 = (s2 - s3).abs();
        assert!(e2 < 0.75 * e1, "{s1} {s2} {s3}");
    }
}
